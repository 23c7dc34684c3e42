"""Two-qubit polarization states, CHSH values and entanglement metrics.

Basis order is |HH>, |HV>, |VH>, |VV>.  Analyzer angles are degrees of
linear polarization; the transmitted port of an analyzer at angle theta
projects onto cos(theta)|H> + sin(theta)|V> and counts as outcome +1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidStateError, NumericalError

TSIRELSON_BOUND = 2.0 * math.sqrt(2.0)

# Analyzer settings that maximize the singlet CHSH value: (a1, a2, b1, b2).
DEFAULT_CHSH_ANGLES_DEG = (45.0, 0.0, 22.5, 67.5)

HERMITICITY_ATOL = 1e-10
TRACE_ATOL = 1e-10
EIGENVALUE_FLOOR = -1e-9

_SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
_SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (_SIGMA_X, _SIGMA_Y, _SIGMA_Z)

_SIGMA_YY = np.kron(_SIGMA_Y, _SIGMA_Y)

# Magic basis columns: real combinations of these span the maximally
# entangled states, which turns the fully-entangled-fraction search into a
# symmetric eigenvalue problem.
_S2 = 1.0 / math.sqrt(2.0)
MAGIC_BASIS = np.array(
    [
        [_S2, -1j * _S2, 0, 0],
        [0, 0, _S2, -1j * _S2],
        [0, 0, -_S2, -1j * _S2],
        [_S2, 1j * _S2, 0, 0],
    ],
    dtype=complex,
)


@dataclass(frozen=True)
class PolarizerSetting:
    """Linear polarization analysis direction, normalized to [0, 180)."""

    angle_deg: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "angle_deg", self.angle_deg % 180.0)


def _angle_deg(setting: float | PolarizerSetting) -> float:
    if isinstance(setting, PolarizerSetting):
        return setting.angle_deg
    return float(setting)


def polarizer_ket(angle: float | PolarizerSetting) -> np.ndarray:
    theta = math.radians(_angle_deg(angle))
    return np.array([math.cos(theta), math.sin(theta)], dtype=complex)


def polarizer_projector(angle: float | PolarizerSetting) -> np.ndarray:
    ket = polarizer_ket(angle)
    return np.outer(ket, ket.conj())


def validate_density_matrix(rho: np.ndarray) -> np.ndarray:
    """Check Hermiticity, unit trace and positivity; returns the array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise InvalidStateError(f"expected a 4x4 matrix, got shape {rho.shape}")
    if not np.allclose(rho, rho.conj().T, atol=HERMITICITY_ATOL):
        raise InvalidStateError("density matrix is not Hermitian")
    trace = np.trace(rho).real
    if abs(trace - 1.0) > TRACE_ATOL:
        raise InvalidStateError(f"density matrix trace {trace} differs from 1")
    eigenvalues = np.linalg.eigvalsh(rho)
    if eigenvalues.min() < EIGENVALUE_FLOOR:
        raise InvalidStateError(
            f"density matrix has negative eigenvalue {eigenvalues.min():.3e}"
        )
    return rho


def singlet() -> np.ndarray:
    """Projector onto the (|HV> - |VH>)/sqrt(2) singlet state."""
    psi = np.array([0, 1, -1, 0], dtype=complex) / math.sqrt(2.0)
    return np.outer(psi, psi.conj())


def werner(visibility: float) -> np.ndarray:
    """Singlet mixed with white noise: V |psi-><psi-| + (1-V) I/4."""
    if not -1.0 / 3.0 <= visibility <= 1.0:
        raise InvalidStateError(
            f"visibility {visibility} outside the physical range [-1/3, 1]"
        )
    return visibility * singlet() + (1.0 - visibility) * np.eye(4) / 4.0


def outcome_probabilities(
    rho: np.ndarray,
    a: float | PolarizerSetting,
    b: float | PolarizerSetting,
) -> np.ndarray:
    """Joint outcome probabilities p[i, j] with index 0 -> +1, 1 -> -1."""
    rho = validate_density_matrix(rho)
    proj_a = polarizer_projector(a)
    proj_b = polarizer_projector(b)
    eye = np.eye(2)
    probs = np.empty((2, 2))
    for i, pa in enumerate((proj_a, eye - proj_a)):
        for j, pb in enumerate((proj_b, eye - proj_b)):
            probs[i, j] = np.trace(rho @ np.kron(pa, pb)).real
    return probs


def correlation(
    rho: np.ndarray,
    a: float | PolarizerSetting,
    b: float | PolarizerSetting,
) -> float:
    """Expectation value of the product of the two +-1 outcomes."""
    p = outcome_probabilities(rho, a, b)
    return float(p[0, 0] + p[1, 1] - p[0, 1] - p[1, 0])


def chsh(
    rho: np.ndarray,
    a1: float | PolarizerSetting,
    a2: float | PolarizerSetting,
    b1: float | PolarizerSetting,
    b2: float | PolarizerSetting,
) -> float:
    """|E(a1,b1) + E(a2,b1) + E(a1,b2) - E(a2,b2)| for the given settings."""
    return abs(
        correlation(rho, a1, b1)
        + correlation(rho, a2, b1)
        + correlation(rho, a1, b2)
        - correlation(rho, a2, b2)
    )


def concurrence(rho: np.ndarray) -> float:
    """Wootters concurrence of a two-qubit state."""
    rho = validate_density_matrix(rho)
    rho_tilde = _SIGMA_YY @ rho.conj() @ _SIGMA_YY
    try:
        eigenvalues = np.linalg.eigvals(rho @ rho_tilde)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"concurrence eigenvalue problem failed: {exc}") from exc
    # Tiny negative or imaginary parts are numerical noise on a PSD spectrum.
    lams = np.sqrt(np.clip(eigenvalues.real, 0.0, None))
    lams = np.sort(lams)[::-1]
    return float(max(0.0, lams[0] - lams[1] - lams[2] - lams[3]))


def tangle(rho: np.ndarray) -> float:
    """Squared concurrence."""
    c = concurrence(rho)
    return c * c


def linear_entropy(rho: np.ndarray) -> float:
    """(4/3) (1 - Tr rho^2): 0 for pure states, 1 for maximal mixing."""
    rho = validate_density_matrix(rho)
    purity = np.trace(rho @ rho).real
    return float(4.0 / 3.0 * (1.0 - purity))


def fully_entangled_fraction(rho: np.ndarray) -> float:
    """Largest overlap of the state with any maximally entangled state."""
    rho = validate_density_matrix(rho)
    m = MAGIC_BASIS.conj().T @ rho @ MAGIC_BASIS
    try:
        eigenvalues = np.linalg.eigvalsh((m + m.conj().T).real / 2.0)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"magic-basis eigenvalue problem failed: {exc}") from exc
    return float(eigenvalues[-1])


def pauli_correlation_matrix(rho: np.ndarray) -> np.ndarray:
    """3x3 real matrix T_ij = Tr[rho (sigma_i x sigma_j)]."""
    rho = validate_density_matrix(rho)
    t = np.empty((3, 3))
    for i, si in enumerate(PAULIS):
        for j, sj in enumerate(PAULIS):
            t[i, j] = np.trace(rho @ np.kron(si, sj)).real
    return t


def bloch_correlation(rho: np.ndarray, m_axis: np.ndarray, n_axis: np.ndarray) -> float:
    """Correlation for measurements along arbitrary Bloch directions."""
    t = pauli_correlation_matrix(rho)
    return float(np.asarray(m_axis) @ t @ np.asarray(n_axis))


def linear_axis(angle: float | PolarizerSetting) -> np.ndarray:
    """Bloch direction (sin 2theta, 0, cos 2theta) of a linear analyzer."""
    two_theta = 2.0 * math.radians(_angle_deg(angle))
    return np.array([math.sin(two_theta), 0.0, math.cos(two_theta)])


def _axis_to_angle_deg(axis: np.ndarray) -> float:
    """Inverse of linear_axis; NaN when the direction leaves the linear plane."""
    if abs(axis[1]) > 1e-9:
        return float("nan")
    return math.degrees(math.atan2(axis[0], axis[2])) / 2.0 % 180.0


@dataclass(frozen=True)
class OptimalChsh:
    """Best achievable CHSH value with the maximizing measurement axes.

    Angles are the linear-polarizer equivalents of the axes and are NaN when
    an optimal axis needs an elliptical measurement.
    """

    value: float
    alice_axes: np.ndarray
    bob_axes: np.ndarray
    alice_angles_deg: tuple[float, float]
    bob_angles_deg: tuple[float, float]


def _canonical_pair(projector: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal basis of a 2-D subspace, preferring z then x directions."""
    candidates = (np.eye(3)[2], np.eye(3)[0], np.eye(3)[1])
    c1 = None
    for cand in candidates:
        vec = projector @ cand
        if np.linalg.norm(vec) > 1e-8:
            c1 = vec / np.linalg.norm(vec)
            break
    for cand in candidates:
        vec = projector @ cand
        vec = vec - (c1 @ vec) * c1
        if np.linalg.norm(vec) > 1e-8:
            return c1, vec / np.linalg.norm(vec)
    raise NumericalError("degenerate correlation-matrix subspace")


def _top_plane(m: np.ndarray) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Two largest eigenvalues of a symmetric 3x3 matrix and a canonical
    orthonormal basis of their span.  Degenerate spectra leave rotational
    freedom; it is resolved in favor of the z and x directions so that
    isotropic states yield linear-polarizer angles."""
    try:
        eigenvalues, vectors = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"correlation-matrix eigenvalue problem failed: {exc}"
        ) from exc
    u1, u2 = eigenvalues[2], eigenvalues[1]
    tol = 1e-10 + 1e-8 * abs(eigenvalues).max()
    top_tied = eigenvalues[2] - eigenvalues[1] <= tol
    bottom_tied = eigenvalues[1] - eigenvalues[0] <= tol
    if top_tied and bottom_tied:
        c1, c2 = _canonical_pair(np.eye(3))
    elif top_tied:
        span = vectors[:, [2, 1]]
        c1, c2 = _canonical_pair(span @ span.T)
    elif bottom_tied:
        c1 = vectors[:, 2]
        span = vectors[:, [1, 0]]
        candidate, other = _canonical_pair(span @ span.T)
        c2 = candidate if np.linalg.norm(candidate) > 0 else other
    else:
        c1 = vectors[:, 2]
        c2 = vectors[:, 1]
    # Fix signs so the dominant component of each axis is positive.
    for vec in (c1, c2):
        lead = np.argmax(np.abs(vec))
        if vec[lead] < 0:
            vec *= -1.0
    if c1 @ m @ c1 < c2 @ m @ c2:
        c1, c2 = c2, c1
    return c1, c2, u1, u2


def horodecki_optimal_chsh(rho: np.ndarray) -> OptimalChsh:
    """Angle-optimized CHSH value 2 sqrt(u1 + u2) from the two largest
    eigenvalues of T^T T, with the maximizing measurement directions."""
    t = pauli_correlation_matrix(rho)
    c1, c2, u1, u2 = _top_plane(t.T @ t)
    value = 2.0 * math.sqrt(max(u1 + u2, 0.0))

    phi = math.atan2(math.sqrt(max(u2, 0.0)), math.sqrt(max(u1, 0.0)))
    b1 = math.cos(phi) * c1 + math.sin(phi) * c2
    b2 = math.cos(phi) * c1 - math.sin(phi) * c2
    a1 = t @ c1
    norm1 = np.linalg.norm(a1)
    a1 = a1 / norm1 if norm1 > 1e-12 else np.array([0.0, 0.0, 1.0])
    a2 = t @ c2
    norm2 = np.linalg.norm(a2)
    if norm2 > 1e-12:
        a2 = a2 / norm2
    else:
        a2 = np.cross(a1, np.array([0.0, 1.0, 0.0]))
        if np.linalg.norm(a2) < 1e-12:
            a2 = np.array([1.0, 0.0, 0.0])
        a2 = a2 / np.linalg.norm(a2)

    alice_axes = np.vstack([a1, a2])
    bob_axes = np.vstack([b1, b2])
    return OptimalChsh(
        value=value,
        alice_axes=alice_axes,
        bob_axes=bob_axes,
        alice_angles_deg=(_axis_to_angle_deg(a1), _axis_to_angle_deg(a2)),
        bob_angles_deg=(_axis_to_angle_deg(b1), _axis_to_angle_deg(b2)),
    )


def chsh_from_axes(rho: np.ndarray, alice_axes: np.ndarray, bob_axes: np.ndarray) -> float:
    """CHSH value for measurement directions given as Bloch vectors."""
    t = pauli_correlation_matrix(rho)
    e = lambda i, j: float(alice_axes[i] @ t @ bob_axes[j])
    return abs(e(0, 0) + e(1, 0) + e(0, 1) - e(1, 1))


def visibility_to_s(visibility: float) -> float:
    """CHSH value V * 2 sqrt(2) reachable at two-photon visibility V."""
    return visibility * TSIRELSON_BOUND
