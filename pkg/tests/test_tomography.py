import math

import numpy as np
import pytest

from bellsim import quantum as q
from bellsim import tomography as tomo
from bellsim.errors import InputError

ROOT8 = 2.0 * math.sqrt(2.0)


def _exact_data(rho, exposure=1e6):
    labels = tomo.measurement_set()
    counts = np.array(
        [exposure * np.trace(rho @ tomo.pair_projector(a, b)).real for a, b in labels]
    )
    return tomo.TomographyData(
        tuple(a for a, _ in labels), tuple(b for _, b in labels), counts
    )


def _trace_distance(a, b):
    return 0.5 * float(np.abs(np.linalg.eigvalsh(a - b)).sum())


def _fidelity_with_pure(rho, psi):
    return float(np.real(psi.conj() @ rho @ psi))


class TestMeasurementSet:
    def test_thirty_six_settings(self):
        settings = tomo.measurement_set()
        assert len(settings) == 36
        assert ("H", "V") in settings

    def test_design_is_informationally_complete(self):
        data = _exact_data(q.werner(0.5))
        projectors, _ = tomo._design(data)
        design = np.column_stack([projectors.real, projectors.imag])
        assert np.linalg.matrix_rank(projectors, tol=1e-10) == 16
        assert np.linalg.matrix_rank(design, tol=1e-10) == 16

    def test_unknown_label_rejected(self):
        with pytest.raises(InputError):
            tomo.pair_projector("H", "Q")


class TestSimulateCounts:
    def test_singlet_parallel_ports_never_fire(self):
        data = tomo.simulate_counts(q.singlet(), 10_000, seed=1)
        for a, b, count in zip(data.labels_a, data.labels_b, data.counts):
            if a == b and a in ("H", "V", "D", "A"):
                # Perfect anticorrelation in every linear basis.
                assert count == 0

    def test_maximally_mixed_is_uniform(self):
        n = 40_000
        data = tomo.simulate_counts(q.werner(0.0), n, seed=2)
        sigma = math.sqrt(n / 4)
        assert np.all(np.abs(data.counts - n / 4) < 5 * sigma)

    def test_werner_hv_mean(self):
        n = 100_000
        v = 0.883
        data = tomo.simulate_counts(q.werner(v), n, seed=3)
        idx = [i for i, (a, b) in enumerate(zip(data.labels_a, data.labels_b))
               if (a, b) == ("H", "V")][0]
        expected = n * (1 + v) / 4
        assert abs(data.counts[idx] - expected) < 5 * math.sqrt(expected)

    def test_counts_are_reproducible(self):
        one = tomo.simulate_counts(q.werner(0.7), 1000, seed=4)
        two = tomo.simulate_counts(q.werner(0.7), 1000, seed=4)
        assert np.array_equal(one.counts, two.counts)


class TestLinearReconstruct:
    def test_noiseless_recovery(self):
        rho = q.werner(0.7)
        recovered = tomo.linear_reconstruct(_exact_data(rho))
        assert np.max(np.abs(recovered - rho)) < 1e-10

    def test_low_counts_can_go_negative_but_mle_stays_physical(self):
        negative_seen = False
        for seed in range(8):
            data = tomo.simulate_counts(q.werner(0.7), 50, seed=seed)
            linear = tomo.linear_reconstruct(data)
            if np.linalg.eigvalsh(linear).min() < -1e-12:
                negative_seen = True
            fit = tomo.mle_reconstruct(data)
            assert np.linalg.eigvalsh(fit.rho).min() >= -1e-12
        assert negative_seen

    def test_high_statistics_singlet_fidelity(self):
        data = tomo.simulate_counts(q.singlet(), 1e6, seed=5)
        linear = tomo.linear_reconstruct(data)
        psi = np.array([0, 1, -1, 0]) / math.sqrt(2)
        assert _fidelity_with_pure(linear, psi) > 0.999

    def test_rank_deficient_design_rejected(self):
        labels = [("H", "H"), ("H", "V"), ("V", "H"), ("V", "V")]
        data = tomo.TomographyData(
            tuple(a for a, _ in labels), tuple(b for _, b in labels),
            np.array([10.0, 500.0, 500.0, 10.0]),
        )
        with pytest.raises(InputError, match="rank"):
            tomo.linear_reconstruct(data)


class TestMleReconstruct:
    def test_noiseless_recovery_to_high_precision(self):
        rho = q.werner(0.7)
        fit = tomo.mle_reconstruct(_exact_data(rho))
        assert fit.converged
        assert _trace_distance(fit.rho, rho) < 1e-6

    def test_all_zero_counts_rejected(self):
        labels = tomo.measurement_set()
        data = tomo.TomographyData(
            tuple(a for a, _ in labels), tuple(b for _, b in labels),
            np.zeros(36),
        )
        with pytest.raises(InputError):
            tomo.mle_reconstruct(data)

    def test_werner_tangle_recovered(self):
        data = tomo.simulate_counts(q.werner(0.883), 1e5, seed=6)
        fit = tomo.mle_reconstruct(data)
        assert q.tangle(fit.rho) == pytest.approx(0.68, abs=0.03)

    def test_output_satisfies_state_invariants(self):
        for seed in range(5):
            data = tomo.simulate_counts(q.werner(0.4), 300, seed=seed)
            fit = tomo.mle_reconstruct(data)
            q.validate_density_matrix(fit.rho)

    def test_consistency_improves_with_counts(self):
        rho = q.werner(0.81)
        medians = []
        for n in (1e3, 1e4, 1e5):
            distances = [
                _trace_distance(tomo.mle_reconstruct(
                    tomo.simulate_counts(rho, n, seed=s)).rho, rho)
                for s in range(20)
            ]
            medians.append(float(np.median(distances)))
        assert medians[0] > medians[1] > medians[2]


class TestReport:
    def test_singlet_report(self):
        rep = tomo.report(q.singlet(), n_bootstrap=8, seed=1, n_per_setting=20_000)
        assert rep.tangle == pytest.approx(1.0, abs=1e-6)
        assert rep.linear_entropy == pytest.approx(0.0, abs=1e-6)
        assert rep.fully_entangled_fraction == pytest.approx(1.0, abs=1e-6)
        assert rep.s_optimal == pytest.approx(ROOT8, abs=1e-6)
        assert rep.n_bootstrap == 8

    def test_werner_report_matches_closed_forms(self):
        v = 0.883
        rep = tomo.report(q.werner(v), n_bootstrap=10, seed=2, n_per_setting=50_000)
        assert rep.tangle == pytest.approx(((3 * v - 1) / 2) ** 2, abs=1e-9)
        assert rep.linear_entropy == pytest.approx(0.22, abs=0.005)
        assert rep.fully_entangled_fraction == pytest.approx(0.912, abs=0.002)
        assert rep.s_optimal == pytest.approx(ROOT8 * v, abs=1e-9)
        assert rep.s_fixed_angles == pytest.approx(rep.s_optimal, abs=1e-9)
        for sigma in (rep.tangle_sigma, rep.linear_entropy_sigma,
                      rep.fully_entangled_fraction_sigma, rep.s_optimal_sigma):
            assert 0 < sigma < 0.05

    def test_local_rotation_moves_only_fixed_angle_s(self):
        v = 0.883
        theta = math.radians(18.0)
        rotation = np.array(
            [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]],
            dtype=complex,
        )
        u = np.kron(rotation, np.eye(2))
        rotated = u @ q.werner(v) @ u.conj().T
        rotated = (rotated + rotated.conj().T) / 2
        plain = tomo.report(q.werner(v), n_bootstrap=2, seed=3, n_per_setting=10_000)
        moved = tomo.report(rotated, n_bootstrap=2, seed=3, n_per_setting=10_000)
        assert moved.tangle == pytest.approx(plain.tangle, abs=1e-8)
        assert moved.linear_entropy == pytest.approx(plain.linear_entropy, abs=1e-8)
        assert moved.fully_entangled_fraction == pytest.approx(
            plain.fully_entangled_fraction, abs=1e-8
        )
        assert moved.s_optimal == pytest.approx(plain.s_optimal, abs=1e-8)
        assert moved.s_fixed_angles < plain.s_fixed_angles - 0.05

    def test_fixed_angles_never_beat_optimal(self):
        for seed in range(6):
            data = tomo.simulate_counts(q.werner(0.7), 2_000, seed=seed)
            fit = tomo.mle_reconstruct(data)
            s_fixed = q.chsh(fit.rho, *q.DEFAULT_CHSH_ANGLES_DEG)
            s_opt = q.horodecki_optimal_chsh(fit.rho).value
            assert s_fixed <= s_opt + 1e-9

    def test_bootstrap_coverage(self):
        v = 0.85
        true_tangle = ((3 * v - 1) / 2) ** 2
        rho = q.werner(v)
        covered = 0
        trials = 50
        for trial in range(trials):
            data = tomo.simulate_counts(rho, 1e4, seed=1000 + trial)
            fit = tomo.mle_reconstruct(data)
            rep = tomo.report(fit.rho, n_bootstrap=20, seed=trial,
                              n_per_setting=1e4)
            if abs(rep.tangle - true_tangle) <= 2 * rep.tangle_sigma:
                covered += 1
        assert covered >= 0.8 * trials


class TestCountsCsv:
    def test_roundtrip(self, tmp_path):
        data = tomo.simulate_counts(q.werner(0.7), 1000, seed=7)
        path = tmp_path / "counts.csv"
        lines = ["alice_proj,bob_proj,count"]
        lines.extend(
            f"{a},{b},{int(c)}"
            for a, b, c in zip(data.labels_a, data.labels_b, data.counts)
        )
        path.write_text("\n".join(lines) + "\n")
        loaded = tomo.read_counts_csv(path)
        assert loaded.labels_a == data.labels_a
        assert np.array_equal(loaded.counts, data.counts)

    def test_malformed_rows_name_the_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("alice_proj,bob_proj,count\nH,V,10\nH,Q,5\n")
        with pytest.raises(InputError, match=":3"):
            tomo.read_counts_csv(path)
        path.write_text("alice_proj,bob_proj,count\nH,V,ten\n")
        with pytest.raises(InputError, match=":2"):
            tomo.read_counts_csv(path)
        path.write_text("wrong,header\n")
        with pytest.raises(InputError, match=":1"):
            tomo.read_counts_csv(path)
