import numpy as np
import pytest

from tasc import (
    ConfigError,
    EmConfig,
    FitError,
    PanelData,
    StateSpaceParams,
    accumulate_stats,
    confidence_width,
    em_pre,
    filter_pass,
    init_params,
    m_step,
    smooth_pass,
    SmoothedTrajectory,
    tasc_infer,
)

from oracles import q_gradient_fd, random_theta


def rank_d_panel(rng, n, t, d, scale=1.0):
    """Exactly rank-d data driven by a stable latent recursion (noiseless)."""
    A = 0.9 * np.eye(d) + 0.02 * rng.standard_normal((d, d))
    H = rng.standard_normal((n, d))
    x = rng.standard_normal(d) * scale
    cols = []
    for _ in range(t):
        x = A @ x
        cols.append(H @ x)
    return np.column_stack(cols), A, H


class TestInitParams:
    def test_deterministic_given_seed_and_restart(self):
        rng = np.random.default_rng(0)
        Y = rng.standard_normal((6, 12))
        config = EmConfig(d=2, seed=5)
        a = init_params(Y, config, restart_index=3)
        b = init_params(Y, config, restart_index=3)
        assert np.array_equal(a.A, b.A)
        assert np.array_equal(a.H, b.H)
        c = init_params(Y, config, restart_index=4)
        assert not np.array_equal(a.A, c.A)

    def test_noiseless_rank_d_hits_noise_floor(self):
        rng = np.random.default_rng(1)
        Y, _, _ = rank_d_panel(rng, 6, 15, 2)
        theta = init_params(Y, EmConfig(d=2))
        assert np.allclose(np.diag(theta.R), 1e-4)

    def test_latent_dimension_boundary(self):
        rng = np.random.default_rng(2)
        Y = rng.standard_normal((4, 10))
        init_params(Y, EmConfig(d=4))
        with pytest.raises(ConfigError):
            init_params(Y, EmConfig(d=5))

    def test_reconstruction_consistency(self):
        # H times the implied initial latent equals the rank-d reconstruction
        # of the first column.
        rng = np.random.default_rng(3)
        Y = rng.standard_normal((5, 9))
        theta = init_params(Y, EmConfig(d=3))
        u, s, vt = np.linalg.svd(Y, full_matrices=False)
        recon0 = (u[:, :3] * s[:3]) @ vt[:3, 0]
        assert np.allclose(theta.H @ theta.m0, recon0)


def scalar_stats():
    smoothed = SmoothedTrajectory(
        m_s=np.array([[0.0], [1.0]]),
        P_s=np.array([[[1.0]], [[1.0]]]),
        G=np.array([[[0.5]]]),
    )
    Y = np.array([[2.0]])
    return accumulate_stats(smoothed, Y)


class TestAccumulateStats:
    def test_scalar_hand_values(self):
        stats = scalar_stats()
        assert np.allclose(stats.sigma, 2.0)
        assert np.allclose(stats.phi, 1.0)
        assert np.allclose(stats.b, 2.0)
        assert np.allclose(stats.c, 0.5)
        assert np.allclose(stats.d, 4.0)

    def test_zero_data_zero_cross_moments(self):
        smoothed = SmoothedTrajectory(
            m_s=np.zeros((4, 2)), P_s=np.tile(np.eye(2), (4, 1, 1)), G=np.zeros((3, 2, 2))
        )
        stats = accumulate_stats(smoothed, np.zeros((3, 3)))
        assert np.allclose(stats.b, 0.0)
        assert np.allclose(stats.d, 0.0)

    def test_bilinearity_in_observations(self):
        rng = np.random.default_rng(4)
        k = 5
        smoothed = SmoothedTrajectory(
            m_s=rng.standard_normal((k + 1, 2)),
            P_s=np.tile(np.eye(2), (k + 1, 1, 1)),
            G=rng.standard_normal((k, 2, 2)),
        )
        Y = rng.standard_normal((3, k))
        s1 = accumulate_stats(smoothed, Y)
        s2 = accumulate_stats(smoothed, 2.0 * Y)
        assert np.allclose(s2.b, 2.0 * s1.b)
        assert np.allclose(s2.d, 4.0 * s1.d)


class TestMStep:
    def test_scalar_hand_example(self):
        stats = scalar_stats()
        theta_old = StateSpaceParams(
            A=[[1.0]], H=[[1.0]], Q=[[1.0]], R=[[1.0]], m0=[0.0], P0=[[1.0]]
        )
        new = m_step(stats, theta_old, m0s=np.array([0.0]), P0s=np.array([[1.0]]))
        assert np.allclose(new.A, 0.5)
        assert np.allclose(new.H, 1.0)
        assert np.allclose(new.Q, 1.75)
        assert np.allclose(new.R, 2.0)
        assert np.allclose(new.m0, 0.0)
        assert np.allclose(new.P0, 1.0)

    def test_recovers_parameters_from_noiseless_moments(self):
        # Exact latent trajectory as moments (zero covariances): the update
        # returns the generating A and H exactly.
        rng = np.random.default_rng(5)
        d, n, k = 2, 4, 12
        A = 0.9 * np.eye(d) + 0.05 * rng.standard_normal((d, d))
        H = rng.standard_normal((n, d))
        x = rng.standard_normal(d)
        xs = [x]
        for _ in range(k):
            xs.append(A @ xs[-1])
        X = np.array(xs)
        Y = H @ X[1:].T
        smoothed = SmoothedTrajectory(
            m_s=X, P_s=np.zeros((k + 1, d, d)), G=np.zeros((k, d, d))
        )
        stats = accumulate_stats(smoothed, Y)
        theta_old = StateSpaceParams(
            A=np.eye(d), H=np.ones((n, d)), Q=np.eye(d), R=np.eye(n),
            m0=np.zeros(d), P0=np.eye(d),
        )
        new = m_step(stats, theta_old, m0s=X[0], P0s=np.zeros((d, d)))
        assert np.max(np.abs(new.A - A)) <= 1e-8
        assert np.max(np.abs(new.H - H)) <= 1e-8

    def test_diagonal_mode_zeroes_off_diagonals(self):
        rng = np.random.default_rng(6)
        theta = random_theta(rng, 3, 4)
        Y = rng.standard_normal((4, 10))
        filt = filter_pass(Y, theta)
        smoothed = smooth_pass(filt, theta)
        stats = accumulate_stats(smoothed, Y)
        new = m_step(stats, theta, smoothed.m_s[0], smoothed.P_s[0], diag_noise=True)
        assert np.array_equal(new.Q, np.diag(np.diag(new.Q)))
        assert np.array_equal(new.R, np.diag(np.diag(new.R)))

    def test_stationarity_of_update(self):
        # Finite-difference gradient of the Q-function vanishes at the
        # returned A' and H' for moments produced by a real E-step.
        rng = np.random.default_rng(7)
        for _ in range(3):
            theta = random_theta(rng, 2, 4)
            Y = rng.standard_normal((4, 12))
            filt = filter_pass(Y, theta)
            smoothed = smooth_pass(filt, theta)
            stats = accumulate_stats(smoothed, Y)
            new = m_step(stats, theta, smoothed.m_s[0], smoothed.P_s[0])
            grad = q_gradient_fd(stats, Y.shape[1], new, smoothed.m_s[0], smoothed.P_s[0])
            assert grad <= 1e-4


class TestEmPre:
    def test_zero_iterations_returns_init(self):
        rng = np.random.default_rng(8)
        Y = rng.standard_normal((5, 10))
        config = EmConfig(d=2, n_iters=0, seed=3)
        result = em_pre(Y, config)
        ref = init_params(Y, config, restart_index=0)
        assert result.loglik_trace == []
        assert np.array_equal(result.theta.A, ref.A)

    def test_loglik_trace_monotone(self):
        from tasc import SimulationConfig, simulate

        for seed in range(5):
            sim = simulate(SimulationConfig(d_true=2, n_units=8, t_total=40, t0=30, seed=seed))
            config = EmConfig(d=2, n_iters=40, n_restarts=1, seed=seed)
            result = em_pre(sim.panel.values[:, :30], config)
            trace = np.array(result.loglik_trace)
            assert trace.size >= 2
            assert np.all(np.diff(trace) >= -1e-6)

    def test_final_loglik_not_below_initial(self):
        from tasc import SimulationConfig, simulate

        for seed in range(5):
            sim = simulate(SimulationConfig(d_true=2, n_units=10, t_total=60, t0=50, seed=100 + seed))
            config = EmConfig(d=2, n_iters=30, n_restarts=2, seed=seed)
            result = em_pre(sim.panel.values[:, :50], config)
            assert result.loglik_trace[-1] >= result.loglik_trace[0]

    def test_reconstruction_error_shrinks_on_noiseless_data(self):
        rng = np.random.default_rng(9)
        Y, _, _ = rank_d_panel(rng, 6, 25, 2, scale=3.0)
        config = EmConfig(d=2, n_iters=60, n_restarts=1, seed=0)

        init = init_params(Y, config, restart_index=0)
        smoothed_init = smooth_pass(filter_pass(Y, init), init)
        err_init = np.linalg.norm(init.H @ smoothed_init.m_s[1:].T - Y)

        result = em_pre(Y, config)
        smoothed = smooth_pass(filter_pass(Y, result.theta), result.theta)
        err_final = np.linalg.norm(result.theta.H @ smoothed.m_s[1:].T - Y)
        assert err_final < err_init

    def test_signal_product_recovered_on_noiseless_data(self):
        # The latent basis is only identified up to an invertible transform,
        # but the product of loadings and smoothed states must recover the
        # rank-d signal itself.
        rng = np.random.default_rng(12)
        Y, _, _ = rank_d_panel(rng, 6, 25, 2, scale=3.0)
        for seed in range(3):
            result = em_pre(Y, EmConfig(d=2, n_iters=150, n_restarts=2, seed=seed))
            smoothed = smooth_pass(filter_pass(Y, result.theta), result.theta)
            recon = result.theta.H @ smoothed.m_s[1:].T
            rel = np.linalg.norm(recon - Y) / np.linalg.norm(Y)
            assert rel <= 1e-3

    def test_all_restarts_failing_raises_fit_error(self):
        rng = np.random.default_rng(10)
        base = rng.standard_normal((1, 12))
        Y = 1e8 * np.vstack([base, base, base])  # rank-1 at huge scale
        with pytest.raises(FitError):
            em_pre(Y, EmConfig(d=1, n_iters=5, n_restarts=2, seed=0))

    def test_nan_input_rejected(self):
        Y = np.ones((3, 6))
        Y[1, 2] = np.nan
        with pytest.raises(ConfigError):
            em_pre(Y, EmConfig(d=1))


def self_similar_panel():
    """Noiseless rank-1 panel whose target row equals donor 1's row."""
    rng = np.random.default_rng(11)
    t_total, t0 = 30, 20
    a = 0.9
    x = 5.0
    xs = []
    for _ in range(t_total):
        x = a * x
        xs.append(x)
    xs = np.array(xs)
    h = np.array([1.0, 1.0, 0.7, -0.5, 1.3])
    values = np.outer(h, xs)
    return PanelData(
        values, t0,
        tuple(f"u{i}" for i in range(5)),
        tuple(f"t{j}" for j in range(t_total)),
    )


class TestTascInfer:
    def test_tracks_identical_donor_on_noiseless_rank_one_panel(self):
        panel = self_similar_panel()
        config = EmConfig(d=1, n_iters=60, n_restarts=2, seed=0)
        result = tasc_infer(panel, config)
        donor_post = panel.values[1, panel.t0 :]
        r1 = float(result.theta.R[0, 0])
        assert np.max(np.abs(result.estimate.y_hat - donor_post)) <= 2.0 * np.sqrt(r1)

    def test_counterfactual_invariant_to_target_post_cells(self):
        panel = self_similar_panel()
        config = EmConfig(d=1, n_iters=25, n_restarts=1, seed=1)
        base = tasc_infer(panel, config)

        junk = panel.values.copy()
        junk[0, panel.t0 :] = 1e6
        overwritten = panel.with_values(junk, target_post_missing=True)
        other = tasc_infer(overwritten, config)
        assert np.array_equal(base.estimate.y_hat, other.estimate.y_hat)

        junk[0, panel.t0 :] = np.nan
        with_nan = panel.with_values(junk, target_post_missing=True)
        third = tasc_infer(with_nan, config)
        assert np.array_equal(base.estimate.y_hat, third.estimate.y_hat)

    def test_tiny_level_collapses_interval(self):
        panel = self_similar_panel()
        config = EmConfig(d=1, n_iters=10, n_restarts=1, seed=2)
        result = tasc_infer(panel, config, level=1e-9)
        assert confidence_width(result.estimate) < 1e-6

    def test_deterministic_given_seed(self):
        panel = self_similar_panel()
        config = EmConfig(d=1, n_iters=15, n_restarts=2, seed=7)
        a = tasc_infer(panel, config)
        b = tasc_infer(panel, config)
        assert np.array_equal(a.estimate.y_hat, b.estimate.y_hat)
        assert np.array_equal(a.estimate.ci_lower, b.estimate.ci_lower)
        assert a.loglik_trace == b.loglik_trace

    def test_ci_variance_modes(self):
        panel = self_similar_panel()
        config = EmConfig(d=1, n_iters=10, n_restarts=1, seed=3)
        pred_mode = tasc_infer(panel, config, ci_variance="prediction")
        sig_mode = tasc_infer(panel, config, ci_variance="signal")
        assert confidence_width(pred_mode.estimate) >= confidence_width(sig_mode.estimate)

    def test_bad_level_rejected(self):
        panel = self_similar_panel()
        with pytest.raises(ConfigError):
            tasc_infer(panel, EmConfig(d=1), level=1.5)

    def test_interval_uses_gaussian_quantile(self):
        panel = self_similar_panel()
        config = EmConfig(d=1, n_iters=10, n_restarts=1, seed=4)
        est = tasc_infer(panel, config, level=0.95).estimate
        z = (est.ci_upper - est.y_hat) / np.sqrt(est.var_pred)
        assert np.allclose(z, 1.959963984540054, atol=1e-9)


class TestConfidenceWidth:
    def test_constant_width(self):
        est = _make_estimate(y_hat=np.zeros(4), width=np.full(4, 3.0))
        assert confidence_width(est) == pytest.approx(3.0)

    def test_gaussian_quantile_value(self):
        # level 0.95 and unit prediction variance: width = 2 * 1.959964.
        var = np.ones(5)
        z = 1.959963984540054
        est = _make_estimate(y_hat=np.zeros(5), width=2 * z * np.sqrt(var))
        assert confidence_width(est) == pytest.approx(2 * z, abs=1e-9)

    def test_zero_variance(self):
        est = _make_estimate(y_hat=np.ones(3), width=np.zeros(3))
        assert confidence_width(est) == 0.0


def _make_estimate(y_hat, width):
    from tasc import CounterfactualEstimate

    return CounterfactualEstimate(
        y_hat=y_hat,
        var_signal=np.zeros_like(y_hat),
        var_pred=np.zeros_like(y_hat),
        ci_lower=y_hat - width / 2,
        ci_upper=y_hat + width / 2,
        fitted_pre=np.zeros(1),
        level=0.95,
    )


class TestEmConfigValidation:
    def test_bounds(self):
        with pytest.raises(ConfigError):
            EmConfig(d=0)
        with pytest.raises(ConfigError):
            EmConfig(d=1, n_iters=-1)
        with pytest.raises(ConfigError):
            EmConfig(d=1, n_restarts=0)
        with pytest.raises(ConfigError):
            EmConfig(d=1, rel_tol=-1e-3)
