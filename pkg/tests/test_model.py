import math

import numpy as np
import pytest

import sparsehawkes as sh
from conftest import brute_force_intensity, state_at


def simple_params(alpha=0.3, beta=0.9, mu=0.2):
    return sh.ModelParams(
        mu=[mu], kernel=sh.ScalarExpKernel(alpha=[[alpha]], beta=[[beta]])
    )


class TestDecay:
    def test_scalar_exponential(self):
        params = simple_params()
        state = sh.ExcitationState(0.0, np.array([[1.0]]))
        out = sh.decay_state(state, 1.0, params)
        assert out.t == 1.0
        assert out.E[0, 0] == pytest.approx(math.exp(-0.9), rel=1e-15)

    def test_zero_duration_is_identity(self):
        params = simple_params()
        state = sh.ExcitationState(2.0, np.array([[0.7]]))
        out = sh.decay_state(state, 0.0, params)
        assert out.t == 2.0 and out.E[0, 0] == 0.7

    def test_negative_duration_rejected(self):
        with pytest.raises(sh.ModelError):
            sh.decay_state(sh.ExcitationState(0.0, np.zeros((1, 1))), -0.1, simple_params())

    @pytest.mark.parametrize("d1,d2", [(0.3, 0.7), (1.2, 0.05), (4.0, 4.0)])
    def test_semigroup(self, bench3d, d1, d2):
        rng = np.random.default_rng(5)
        state = sh.ExcitationState(0.0, rng.random((3, 3)))
        a = sh.decay_state(sh.decay_state(state, d1, bench3d), d2, bench3d)
        b = sh.decay_state(state, d1 + d2, bench3d)
        np.testing.assert_allclose(a.E, b.E, rtol=1e-12)

    def test_semigroup_matrix_kernel(self):
        rng = np.random.default_rng(6)
        A = np.ones((1, 1, 2, 2))
        B = np.array([[[[1.0, -1.0], [0.0, 1.0]]]])
        params = sh.ModelParams(mu=[0.5], kernel=sh.MatrixExpKernel(A=A, B=B))
        state = sh.ExcitationState(0.0, rng.random((1, 1, 2, 2)))
        a = sh.decay_state(sh.decay_state(state, 0.4, params), 0.6, params)
        b = sh.decay_state(state, 1.0, params)
        np.testing.assert_allclose(a.E, b.E, rtol=1e-12, atol=1e-15)

    def test_nonincreasing_under_decay(self, bench3d):
        state = sh.ExcitationState(0.0, np.full((3, 3), 0.5))
        out = sh.decay_state(state, 0.8, bench3d)
        assert np.all(out.E <= state.E) and np.all(out.E >= 0)


class TestJumpAndIntensity:
    def test_alpha_folded_into_jump(self):
        params = simple_params(alpha=0.3)
        state = sh.apply_jump(sh.empty_state(params), 0, None, params)
        assert state.E[0, 0] == pytest.approx(0.3, abs=0)

    def test_topic_linear_form(self, topic1d):
        state = sh.apply_jump(
            sh.empty_state(topic1d), 0, np.array([0.2, 0.3, 0.5]), topic1d
        )
        assert state.E[0, 0] == pytest.approx(0.4 * 0.2 + 0.0 + 0.4 * 0.5, rel=1e-15)

    def test_off_simplex_mark_rejected(self, topic1d):
        with pytest.raises(sh.ModelError):
            sh.apply_jump(sh.empty_state(topic1d), 0, np.array([0.5, 0.5, 0.1]), topic1d)

    def test_component_out_of_range(self):
        params = simple_params()
        with pytest.raises(sh.ModelError):
            sh.apply_jump(sh.empty_state(params), 1, None, params)

    def test_one_event_closed_form(self):
        params = simple_params(alpha=0.3, beta=0.9, mu=0.2)
        state = sh.apply_jump(sh.empty_state(params), 0, None, params)
        state = sh.decay_state(state, 1.0, params)
        lam = sh.intensity(state, params)
        assert lam[0] == pytest.approx(0.2 + 0.3 * math.exp(-0.9), rel=1e-14)

    def test_empty_history_gives_baseline(self, bench3d):
        np.testing.assert_array_equal(
            sh.intensity(sh.empty_state(bench3d), bench3d), bench3d.mu
        )

    def test_recursion_equals_brute_force(self, bench3d, log3d):
        sub = sh.EventLog(
            log3d.horizon, log3d.times[:50], log3d.components[:50]
        )
        for t in [3.0, 17.5, 44.0, 61.3]:
            oracle = brute_force_intensity(t, sub, bench3d)
            lam = sh.intensity(state_at(t, sub, bench3d), bench3d)
            np.testing.assert_allclose(lam, oracle, rtol=1e-10)

    def test_recursion_equals_brute_force_marked(self, topic1d, log_topic):
        sub = sh.EventLog(
            log_topic.horizon,
            log_topic.times[:50],
            log_topic.components[:50],
            log_topic.marks[:50],
        )
        for t in [2.0, 9.7, 15.1]:
            oracle = brute_force_intensity(t, sub, topic1d)
            lam = sh.intensity(state_at(t, sub, topic1d), topic1d)
            np.testing.assert_allclose(lam, oracle, rtol=1e-10)

    def test_intensity_monotone_between_events(self, bench3d, log3d):
        state = state_at(50.0, log3d, bench3d)
        prev = sh.intensity(state, bench3d)
        for _ in range(6):
            state = sh.decay_state(state, 0.4, bench3d)
            cur = sh.intensity(state, bench3d)
            assert np.all(cur <= prev + 1e-15)
            prev = cur


class TestBranching:
    def test_benchmark_matrix(self, bench3d):
        expected = np.array(
            [
                [0.0, 0.2 / 0.9, 0.0],
                [0.2 / 0.5, 0.1 / 1.2, 0.4 / 0.6],
                [0.0, 0.0, 0.2 / 0.7],
            ]
        )
        np.testing.assert_allclose(sh.branching_matrix(bench3d), expected, rtol=1e-15)

    def test_all_zero_weights(self):
        params = sh.ModelParams(
            mu=[1.0, 1.0],
            kernel=sh.ScalarExpKernel(alpha=np.zeros((2, 2)), beta=np.ones((2, 2))),
        )
        np.testing.assert_array_equal(sh.branching_matrix(params), np.zeros((2, 2)))

    def test_dirichlet_mean_feeds_topic_branching(self, topic1d, topic_kernel):
        mean = topic_kernel.mean()
        np.testing.assert_allclose(mean, [2 / 9, 2 / 9, 5 / 9], rtol=1e-15)
        # Monte Carlo cross-check of the mean itself
        rng = np.random.default_rng(42)
        draws = rng.dirichlet([2.0, 2.0, 5.0], size=200_000)
        assert np.max(np.abs(draws.mean(axis=0) - mean)) < 3e-3
        phi = sh.branching_matrix(topic1d, mark_mean=mean)
        assert phi[0, 0] == pytest.approx((0.4 * 2 / 9 + 0.4 * 5 / 9) / 0.5, rel=1e-14)

    def test_marked_model_requires_mean(self, topic1d):
        with pytest.raises(sh.ModelError):
            sh.branching_matrix(topic1d)


class TestSpectralRadius:
    def test_benchmark_value_against_block_eigenvalues(self, bench3d):
        # the third column decouples: eigenvalues are those of the leading
        # 2x2 block plus the (3,3) entry
        a, b, c = 0.1 / 1.2, 0.2 / 0.9, 0.2 / 0.5
        oracle = (a + math.sqrt(a * a + 4 * b * c)) / 2
        rho = sh.spectral_radius(sh.branching_matrix(bench3d))
        assert rho == pytest.approx(oracle, abs=1e-9)
        assert rho == pytest.approx(0.3427, abs=5e-5)

    def test_scaled_identity(self):
        assert sh.spectral_radius(0.5 * np.eye(4)) == pytest.approx(0.5, abs=1e-10)

    def test_zero_matrix(self):
        assert sh.spectral_radius(np.zeros((3, 3))) == 0.0

    def test_permutation_similarity_invariance(self):
        rng = np.random.default_rng(9)
        phi = rng.random((5, 5)) * 0.3
        P = np.eye(5)[rng.permutation(5)]
        r1 = sh.spectral_radius(phi)
        r2 = sh.spectral_radius(P @ phi @ P.T)
        assert r1 == pytest.approx(r2, rel=1e-9)

    def test_periodic_matrix_uses_fallback(self):
        # power iteration cannot converge on a permutation matrix
        phi = np.array([[0.0, 0.8], [0.8, 0.0]])
        assert sh.spectral_radius(phi) == pytest.approx(0.8, rel=1e-10)

    def test_negative_entries_rejected(self):
        with pytest.raises(sh.ModelError):
            sh.spectral_radius(np.array([[0.1, -0.2], [0.0, 0.1]]))


class TestStationaryIntensity:
    def test_univariate_closed_form(self):
        params = simple_params(alpha=0.56, beta=1.0, mu=1.5)
        lam = sh.stationary_mean_intensity(params)
        assert lam[0] == pytest.approx(1.5 / (1 - 0.56), rel=1e-12)

    def test_no_excitation_returns_baseline(self):
        params = sh.ModelParams(
            mu=[0.4, 0.7],
            kernel=sh.ScalarExpKernel(alpha=np.zeros((2, 2)), beta=np.ones((2, 2))),
        )
        np.testing.assert_allclose(sh.stationary_mean_intensity(params), [0.4, 0.7])

    def test_benchmark_solves_linear_system(self, bench3d):
        lam = sh.stationary_mean_intensity(bench3d)
        phi = sh.branching_matrix(bench3d)
        np.testing.assert_allclose((np.eye(3) - phi) @ lam, bench3d.mu, rtol=1e-12)

    def test_unstable_model_rejected(self):
        params = simple_params(alpha=1.2, beta=1.0)
        with pytest.raises(sh.StabilityError):
            sh.stationary_mean_intensity(params)


class TestMatrixExponential:
    def test_zero_matrix(self):
        np.testing.assert_array_equal(sh.matrix_exponential(np.zeros((3, 3))), np.eye(3))

    def test_diagonal(self):
        out = sh.matrix_exponential(np.diag([0.3, -1.7]))
        np.testing.assert_allclose(out, np.diag([math.exp(0.3), math.exp(-1.7)]), rtol=1e-14)

    def test_matches_taylor_series(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            M = rng.standard_normal((3, 3))
            M *= 0.5 / np.linalg.norm(M, 2)
            series = np.eye(3)
            term = np.eye(3)
            for k in range(1, 31):
                term = term @ M / k
                series = series + term
            np.testing.assert_allclose(sh.matrix_exponential(M), series, rtol=1e-12)

    def test_large_norm_scaling(self):
        M = np.array([[0.0, 6.0], [-6.0, 0.0]])
        out = sh.matrix_exponential(M)
        expected = np.array(
            [[math.cos(6.0), math.sin(6.0)], [-math.sin(6.0), math.cos(6.0)]]
        )
        np.testing.assert_allclose(out, expected, atol=1e-12)


class TestValidation:
    def test_nonpositive_baseline_rejected(self):
        with pytest.raises(sh.ModelError):
            sh.ModelParams(mu=[0.0], kernel=sh.ScalarExpKernel(alpha=[[0.1]], beta=[[1.0]]))

    def test_negative_alpha_rejected(self):
        with pytest.raises(sh.ModelError):
            sh.ScalarExpKernel(alpha=[[-0.1]], beta=[[1.0]])

    def test_nuisance_only_on_silent_edges(self):
        with pytest.raises(sh.ModelError):
            sh.ModelParams(
                mu=[0.2],
                kernel=sh.ScalarExpKernel(alpha=[[0.3]], beta=[[1.0]]),
                beta_nuisance=[[True]],
            )

    def test_matrix_kernel_decay_eigenvalues_checked(self):
        A = np.ones((1, 1, 2, 2))
        B = np.array([[[[0.0, 1.0], [0.0, 0.0]]]])  # nilpotent: zero eigenvalues
        with pytest.raises(sh.ModelError):
            sh.MatrixExpKernel(A=A, B=B)

    def test_params_immutable(self, bench3d):
        with pytest.raises(ValueError):
            bench3d.mu[0] = 9.0
