"""Two-photon state reconstruction from per-setting coincidence counts.

The measurement set is the 36 pairings of the six single-qubit analyzer
eigenstates H, V, D, A, R, L (an overcomplete, informationally complete
design: the four outcomes of each of the nine basis pairs all appear).
Counts in one basis pair share an exposure; normalization uses their sum.

``linear_reconstruct`` inverts the design by least squares and can return a
non-positive matrix at low counts.  ``mle_reconstruct`` maximizes the
Poisson likelihood over the Cholesky-parameterized set rho = G* G / Tr[G* G],
profiling out the per-basis exposures, so its output is positive
semidefinite and unit trace by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import quantum
from .errors import InputError, NumericalError

PROJECTOR_LABELS = ("H", "V", "D", "A", "R", "L")

_S2 = 1.0 / math.sqrt(2.0)
_SINGLE_KETS = {
    "H": np.array([1.0, 0.0], dtype=complex),
    "V": np.array([0.0, 1.0], dtype=complex),
    "D": np.array([_S2, _S2], dtype=complex),
    "A": np.array([_S2, -_S2], dtype=complex),
    "R": np.array([_S2, -1j * _S2], dtype=complex),
    "L": np.array([_S2, 1j * _S2], dtype=complex),
}

# Each label's basis partner (the orthogonal projector in the same basis).
_BASIS_OF = {"H": "Z", "V": "Z", "D": "X", "A": "X", "R": "Y", "L": "Y"}


def _single_projector(label: str) -> np.ndarray:
    ket = _SINGLE_KETS[label]
    return np.outer(ket, ket.conj())


def measurement_set() -> list[tuple[str, str]]:
    """All 36 projector pairs of the six-state tomography design."""
    return [(a, b) for a in PROJECTOR_LABELS for b in PROJECTOR_LABELS]


def pair_projector(label_a: str, label_b: str) -> np.ndarray:
    """4x4 projector for one analyzer-pair outcome."""
    for label in (label_a, label_b):
        if label not in _SINGLE_KETS:
            raise InputError(f"unknown projector label {label!r}")
    return np.kron(_single_projector(label_a), _single_projector(label_b))


@dataclass(frozen=True)
class TomographyData:
    """Measured counts per projector pair.

    ``counts`` may be floats so exact expected values can be fed through the
    same code path in deterministic tests.
    """

    labels_a: tuple[str, ...]
    labels_b: tuple[str, ...]
    counts: np.ndarray
    duration_per_setting_s: float | None = None

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=float)
        object.__setattr__(self, "counts", counts)
        if not (len(self.labels_a) == len(self.labels_b) == len(counts)):
            raise InputError("labels and counts must have equal lengths")
        if counts.min() < 0:
            raise InputError("counts must be non-negative")

    def __len__(self) -> int:
        return len(self.counts)


def simulate_counts(rho: np.ndarray, n_per_setting: float, seed: int) -> TomographyData:
    """Poisson counts with mean n_per_setting * Tr[rho (Pa x Pb)]."""
    rho = quantum.validate_density_matrix(rho)
    rng = np.random.default_rng(seed)
    labels = measurement_set()
    means = np.array(
        [np.trace(rho @ pair_projector(a, b)).real for a, b in labels]
    )
    counts = rng.poisson(np.clip(means, 0.0, None) * n_per_setting).astype(float)
    return TomographyData(
        labels_a=tuple(a for a, _ in labels),
        labels_b=tuple(b for _, b in labels),
        counts=counts,
    )


def _design(data: TomographyData) -> tuple[np.ndarray, np.ndarray]:
    """Projector matrix (n x 16, complex row-vectorized) and basis group ids."""
    projectors = np.stack(
        [pair_projector(a, b).reshape(-1) for a, b in zip(data.labels_a, data.labels_b)]
    )
    keys = [
        (_BASIS_OF[a], _BASIS_OF[b]) for a, b in zip(data.labels_a, data.labels_b)
    ]
    unique = sorted(set(keys))
    groups = np.array([unique.index(k) for k in keys])
    return projectors, groups


def _probabilities(projectors: np.ndarray, rho: np.ndarray) -> np.ndarray:
    # Tr[rho P] = sum_ij rho_ij P_ji = vec(P^T) . vec(rho)
    return (projectors @ rho.reshape(-1)[_TRANSPOSE_INDEX]).real


_TRANSPOSE_INDEX = np.arange(16).reshape(4, 4).T.reshape(-1)

_PAULI_BASIS = [
    np.kron(p, q)
    for p in (np.eye(2, dtype=complex),) + quantum.PAULIS
    for q in (np.eye(2, dtype=complex),) + quantum.PAULIS
]


def linear_reconstruct(data: TomographyData) -> np.ndarray:
    """Least-squares inversion; Hermitian and unit trace, PSD not guaranteed."""
    projectors, groups = _design(data)
    exposures = np.zeros(groups.max() + 1)
    np.add.at(exposures, groups, data.counts)
    if np.any(exposures <= 0):
        raise InputError("every measured basis pair needs a positive total count")
    probabilities = data.counts / exposures[groups]

    design = np.empty((len(data), 16))
    for j, pauli in enumerate(_PAULI_BASIS):
        design[:, j] = (projectors @ pauli.reshape(-1)[_TRANSPOSE_INDEX]).real / 4.0
    rank = np.linalg.matrix_rank(design, tol=1e-10)
    if rank < 16:
        raise InputError(
            f"measurement design has rank {rank} < 16; counts do not determine "
            "the state"
        )
    coefficients, *_ = np.linalg.lstsq(design, probabilities, rcond=None)
    rho = sum(c * pauli for c, pauli in zip(coefficients, _PAULI_BASIS)) / 4.0
    rho = (rho + rho.conj().T) / 2.0
    return rho / np.trace(rho).real


# Upper-triangular parameter layout: with G upper triangular and a real
# diagonal, G* G reaches every density matrix (conjugate of the Cholesky
# factorization).
_OFFDIAGONAL_INDICES = [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)]


def _params_to_g(t: np.ndarray) -> np.ndarray:
    g = np.zeros((4, 4), dtype=complex)
    g[np.diag_indices(4)] = t[:4]
    for k, (r, c) in enumerate(_OFFDIAGONAL_INDICES):
        g[r, c] = t[4 + 2 * k] + 1j * t[5 + 2 * k]
    return g


def _g_to_params(g: np.ndarray) -> np.ndarray:
    t = np.zeros(16)
    t[:4] = np.real(np.diag(g))
    for k, (r, c) in enumerate(_OFFDIAGONAL_INDICES):
        t[4 + 2 * k] = g[r, c].real
        t[5 + 2 * k] = g[r, c].imag
    return t


def _rho_from_params(t: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    g = _params_to_g(t)
    gram = g.conj().T @ g
    norm = np.trace(gram).real
    return gram / norm, g, norm


@dataclass(frozen=True)
class MleResult:
    rho: np.ndarray
    converged: bool
    n_iterations: int
    log_likelihood: float
    message: str


def _profiled_negative_loglik(
    t: np.ndarray, projectors: np.ndarray, groups: np.ndarray,
    counts: np.ndarray, group_totals: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Poisson negative log-likelihood with exposures profiled out, and its
    gradient with respect to the Cholesky parameters."""
    rho, g, norm = _rho_from_params(t)
    probs = _probabilities(projectors, rho)
    probs = np.clip(probs, 1e-300, None)
    group_prob = np.zeros(len(group_totals))
    np.add.at(group_prob, groups, probs)
    value = -(counts @ np.log(probs)) + group_totals @ np.log(group_prob)

    # dL/d rho through w_i = n_i / p_i - N_g / P_g on each projector.
    weights = counts / probs - (group_totals / group_prob)[groups]
    f_matrix = (weights[:, None] * projectors).sum(axis=0).reshape(4, 4)
    # rho = G'G / norm: dL/dG* = (G F - (sum_i w_i p_i) G) / norm.
    scalar = float(weights @ probs)
    d_gstar = (g @ f_matrix - scalar * g) / norm
    grad = np.zeros(16)
    grad[:4] = 2.0 * np.real(np.diag(d_gstar))
    for k, (r, c) in enumerate(_OFFDIAGONAL_INDICES):
        grad[4 + 2 * k] = 2.0 * d_gstar[r, c].real
        grad[5 + 2 * k] = 2.0 * d_gstar[r, c].imag
    return float(value), -grad


def mle_reconstruct(
    data: TomographyData,
    *,
    tol: float = 1e-9,
    max_iterations: int = 100_000,
) -> MleResult:
    """Maximum-likelihood estimate of the density matrix.

    Starts from the positivity-projected linear inversion and refines the
    Cholesky factor with L-BFGS-B until the likelihood improvement per
    iteration falls below ``tol``.
    """
    if data.counts.sum() <= 0:
        raise InputError("all counts are zero; the likelihood is degenerate")
    projectors, groups = _design(data)
    group_totals = np.zeros(groups.max() + 1)
    np.add.at(group_totals, groups, data.counts)
    if np.any(group_totals <= 0):
        raise InputError("every measured basis pair needs a positive total count")

    rho0 = linear_reconstruct(data)
    eigenvalues, vectors = np.linalg.eigh(rho0)
    eigenvalues = np.clip(eigenvalues, 1e-6, None)
    rho0 = (vectors * eigenvalues) @ vectors.conj().T
    rho0 /= np.trace(rho0).real
    try:
        # cholesky returns lower L with L L* = rho, so G = L* satisfies
        # G* G = rho and is upper triangular with a real diagonal.
        g0 = np.linalg.cholesky(rho0).conj().T
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"projected linear estimate not factorizable: {exc}") from exc
    t0 = _g_to_params(g0)

    result = optimize.minimize(
        _profiled_negative_loglik,
        t0,
        args=(projectors, groups, data.counts, group_totals),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iterations, "ftol": tol / 10.0, "gtol": 1e-12},
    )
    rho, _, _ = _rho_from_params(result.x)
    rho = (rho + rho.conj().T) / 2.0
    return MleResult(
        rho=rho,
        converged=bool(result.success),
        n_iterations=int(result.nit),
        log_likelihood=-float(result.fun),
        message=str(result.message),
    )


@dataclass(frozen=True)
class TomographyReport:
    """Entanglement metrics of a reconstructed state with bootstrap errors."""

    rho: np.ndarray
    tangle: float
    tangle_sigma: float
    linear_entropy: float
    linear_entropy_sigma: float
    fully_entangled_fraction: float
    fully_entangled_fraction_sigma: float
    s_fixed_angles: float
    s_fixed_angles_sigma: float
    s_optimal: float
    s_optimal_sigma: float
    optimal_alice_angles_deg: tuple[float, float]
    optimal_bob_angles_deg: tuple[float, float]
    n_bootstrap: int


def _metrics(rho: np.ndarray) -> tuple[float, float, float, float, float]:
    opt = quantum.horodecki_optimal_chsh(rho)
    return (
        quantum.tangle(rho),
        quantum.linear_entropy(rho),
        quantum.fully_entangled_fraction(rho),
        quantum.chsh(rho, *quantum.DEFAULT_CHSH_ANGLES_DEG),
        opt.value,
    )


def report(
    rho: np.ndarray,
    n_bootstrap: int = 40,
    seed: int = 0,
    *,
    n_per_setting: float = 100_000.0,
) -> TomographyReport:
    """Metric report with parametric-bootstrap error bars.

    Each replica redraws Poisson counts from the reconstructed state at the
    given exposure and is re-fit by maximum likelihood; the error bars are
    the standard deviations over replicas.
    """
    rho = quantum.validate_density_matrix(rho)
    point = _metrics(rho)
    replicas = np.empty((n_bootstrap, 5))
    seeds = np.random.SeedSequence(seed).spawn(n_bootstrap)
    for k in range(n_bootstrap):
        child_seed = int(seeds[k].generate_state(1, dtype=np.uint64)[0])
        resampled = simulate_counts(rho, n_per_setting, child_seed)
        fit = mle_reconstruct(resampled)
        replicas[k] = _metrics(fit.rho)
    sigmas = replicas.std(axis=0, ddof=1) if n_bootstrap > 1 else np.zeros(5)
    opt = quantum.horodecki_optimal_chsh(rho)
    return TomographyReport(
        rho=rho,
        tangle=point[0], tangle_sigma=float(sigmas[0]),
        linear_entropy=point[1], linear_entropy_sigma=float(sigmas[1]),
        fully_entangled_fraction=point[2],
        fully_entangled_fraction_sigma=float(sigmas[2]),
        s_fixed_angles=point[3], s_fixed_angles_sigma=float(sigmas[3]),
        s_optimal=point[4], s_optimal_sigma=float(sigmas[4]),
        optimal_alice_angles_deg=opt.alice_angles_deg,
        optimal_bob_angles_deg=opt.bob_angles_deg,
        n_bootstrap=n_bootstrap,
    )


def read_counts_csv(path) -> TomographyData:
    """Counts CSV: header ``alice_proj,bob_proj,count``, one row per setting."""
    labels_a: list[str] = []
    labels_b: list[str] = []
    counts: list[float] = []
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline().strip()
        if header != "alice_proj,bob_proj,count":
            raise InputError(f"{path}:1: expected header 'alice_proj,bob_proj,count'")
        for lineno, line in enumerate(handle, start=2):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != 3:
                raise InputError(f"{path}:{lineno}: expected 3 comma-separated fields")
            a, b, raw = (f.strip() for f in fields)
            if a not in _SINGLE_KETS or b not in _SINGLE_KETS:
                raise InputError(
                    f"{path}:{lineno}: projector labels must be among "
                    f"{'/'.join(PROJECTOR_LABELS)}"
                )
            try:
                value = float(raw)
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: bad count {raw!r}") from exc
            labels_a.append(a)
            labels_b.append(b)
            counts.append(value)
    if not counts:
        raise InputError(f"{path}: no count rows found")
    return TomographyData(tuple(labels_a), tuple(labels_b), np.array(counts))
