import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from scalereg.harness import generate_case, trial_init
from scalereg.registration.baselines import initial_transform
from scalereg.registration.core import CorrespondenceSet, SimilarityTransform, apply_transform
from scalereg.registration.scaling_icp import run_scaling_icp
from scalereg.registration.schema import ExperimentSpec, SolverConfig, Termination, TrimConfig
from scalereg.registration.trimmed import min_overlap_count, psi_objective, run_strimmed_icp, select_overlap
from scalereg.registration.utils import rotation_angle_error

from conftest import rot


def corr_of(distances) -> CorrespondenceSet:
    d = np.asarray(distances, dtype=np.float64)
    return CorrespondenceSet(model_index=np.zeros(d.shape[0], dtype=int), distance=d)


def exhaustive_overlap(distances: np.ndarray, s: float, cfg: TrimConfig):
    N = distances.shape[0]
    order = np.lexsort((np.arange(N), distances))
    sq = [float(x) ** 2 for x in distances[order]]
    psi = {}
    for n in range(min_overlap_count(N, cfg.min_overlap), N + 1):
        psi[n] = psi_objective(sum(sq[:n]) / n, s, n / N, cfg.lambda_)
    best = min(psi.values())
    n = max(k for k, v in psi.items() if v <= best * (1 + 1e-12))
    return n / N, np.sort(order[:n])


class TestPsiObjective:

    def test_examples(self):
        assert psi_objective(0.0, 3.0, 0.4, 2.0) == 0.0
        assert psi_objective(4.0, 2.0, 1.0, 2.0) == pytest.approx(1.0)
        assert psi_objective(1.0, 1.0, 0.5, 2.0) == pytest.approx(8.0)

    @pytest.mark.parametrize('s, xi', [(0.0, 0.5), (-1.0, 0.5), (1.0, 0.0), (1.0, 1.5)])
    def test_invalid_arguments(self, s, xi):
        with pytest.raises(ValueError):
            psi_objective(1.0, s, xi, 2.0)


class TestSelectOverlap:

    def test_equal_distances_keep_everything(self):
        xi, subset = select_overlap(corr_of(np.full(10, 0.7)), 1.0, TrimConfig())
        assert xi == 1.0
        assert_array_equal(subset, np.arange(10))

    def test_zero_prefix(self):
        d = [0.0] * 7 + [100.0] * 3
        xi, subset = select_overlap(corr_of(d), 1.0, TrimConfig(lambda_=2.0, min_overlap=0.3))
        assert xi == pytest.approx(0.7)
        assert_array_equal(subset, np.arange(7))

    def test_subset_sorted_by_data_index(self):
        d = [5.0, 0.0, 100.0, 0.1, 0.2]
        _, subset = select_overlap(corr_of(d), 1.0, TrimConfig(min_overlap=0.2))
        assert list(subset) == sorted(subset)
        assert 2 not in subset

    def test_min_overlap_floor(self):
        d = [0.0] * 2 + [50.0] * 8
        xi, subset = select_overlap(corr_of(d), 1.0, TrimConfig(min_overlap=0.5))
        assert xi >= 0.5
        assert len(subset) == round(xi * 10)

    def test_matches_exhaustive_prefix_scan(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            N = int(rng.integers(5, 60))
            d = rng.exponential(size=N) * rng.choice([1.0, 10.0], size=N)
            cfg = TrimConfig(lambda_=float(rng.uniform(0, 4)), min_overlap=float(rng.uniform(0.1, 1.0)))
            s = float(rng.uniform(0.2, 3.0))
            xi, subset = select_overlap(corr_of(d), s, cfg)
            xi_ref, subset_ref = exhaustive_overlap(d, s, cfg)
            assert xi == pytest.approx(xi_ref)
            assert_array_equal(subset, subset_ref)

    def test_tiny_distances_still_trimmed(self):
        d = [0.0] * 7 + [1e-10] * 3
        xi, subset = select_overlap(corr_of(d), 1.0, TrimConfig(lambda_=2.0, min_overlap=0.3))
        assert xi == pytest.approx(0.7)
        assert_array_equal(subset, np.arange(7))

    def test_large_scale_still_trimmed(self):
        d = [0.0] * 7 + [1e-5] * 3
        xi, _ = select_overlap(corr_of(d), 1e4, TrimConfig(lambda_=2.0, min_overlap=0.3))
        assert xi == pytest.approx(0.7)

    @pytest.mark.parametrize('factor', [7.5, 1e-9, 1e9])
    def test_uniform_rescaling_does_not_change_selection(self, factor):
        rng = np.random.default_rng(8)
        d = rng.exponential(size=40)
        cfg = TrimConfig()
        xi, subset = select_overlap(corr_of(d), 1.0, cfg)
        assert xi < 1.0
        xi_scaled, subset_scaled = select_overlap(corr_of(d * factor), 1.0, cfg)
        assert xi == xi_scaled
        assert_array_equal(subset, subset_scaled)
        # 距离和尺度同乘一个因子，Psi 不变
        xi_both, subset_both = select_overlap(corr_of(d * factor), factor, cfg)
        assert xi == xi_both
        assert_array_equal(subset, subset_both)


class TestStrimmedIcp:

    def test_full_overlap_recovery(self, blob):
        truth = SimilarityTransform(1.6, rot(2.0), [0.4, -0.3])
        Q = apply_transform(truth, blob)
        cfg = TrimConfig(max_iterations=200, initial_transform=initial_transform(blob, Q, 'axes'))
        result = run_strimmed_icp(blob, Q, cfg)
        assert result.overlap == 1.0
        assert result.transform.scale == pytest.approx(1.6, rel=1e-6)
        assert rotation_angle_error(result.transform.rotation, truth.rotation) <= 1e-6

    def test_occlusion_recovery(self):
        spec = ExperimentSpec(
            n_points=500, occlusion=0.3, rotation_range=(0.0, 0.05),
            init='truth', init_perturbation=0.002, seed=31,
        )
        good = 0
        for trial in range(20):
            case = generate_case(spec, trial)
            result = run_strimmed_icp(case.P, case.Q, spec.trim_config(trial_init(spec, case, trial)))
            T, truth = result.transform, case.truth
            ok = (
                abs(result.overlap - 0.7) <= 0.05
                and abs(T.scale - truth.scale) / truth.scale <= 1e-3
                and rotation_angle_error(T.rotation, truth.rotation) <= 1e-3
            )
            good += ok
        assert good >= 18

    def test_psi_trace_monotone_and_chain(self):
        spec = ExperimentSpec(
            n_points=300, occlusion=0.2, noise_sigma=0.005, rotation_range=(0.0, 0.1),
            init='truth', init_perturbation=0.05, seed=13,
        )
        for trial in range(10):
            case = generate_case(spec, trial)
            result = run_strimmed_icp(case.P, case.Q, spec.trim_config(trial_init(spec, case, trial)))
            for trace in (result.objective_trace, result.psi_trace):
                assert all(b <= a + 1e-9 * max(1.0, abs(a)) for a, b in zip(trace, trace[1:]))
            for (e_k, eta_k, eps_k), (e_next, _, _) in zip(result.chain_trace, result.chain_trace[1:]):
                slack = 1e-9 * max(1.0, abs(e_k))
                assert eta_k <= e_k + slack
                assert eps_k <= eta_k + slack
                assert e_next <= eps_k + slack
            assert len(result.overlap_subset) == round(result.overlap * len(case.P))

    def test_full_min_overlap_reduces_to_scaling_icp(self):
        spec = ExperimentSpec(n_points=200, rotation_range=(0.0, 0.2), noise_sigma=0.02, seed=17)
        for trial in range(5):
            case = generate_case(spec, trial)
            T0 = initial_transform(case.P, case.Q, 'pca')
            plain = run_scaling_icp(case.P, case.Q, SolverConfig(initial_transform=T0))
            trimmed = run_strimmed_icp(case.P, case.Q, TrimConfig(initial_transform=T0, min_overlap=1.0))
            assert trimmed.iterations == plain.iterations
            assert_allclose(trimmed.objective_trace, plain.objective_trace, rtol=0, atol=1e-12)
            assert trimmed.overlap == 1.0

    def test_stable_subset_terminates(self, blob):
        result = run_strimmed_icp(blob, blob)
        assert result.termination == Termination.CORRESPONDENCES_UNCHANGED
        assert result.iterations == 1
