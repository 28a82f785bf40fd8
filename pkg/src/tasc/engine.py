"""EM learning on pre-intervention data and counterfactual inference.

Fitting is expectation-maximization for the linear-Gaussian model: the E-step
is a Kalman filtering pass plus an RTS smoothing pass, and the M-step is the
closed-form maximizer of the expected complete-data log-likelihood.  Inference
reruns the filter over the full panel with the target treated as missing after
the intervention, smooths, and reads the target's counterfactual mean and
variance off the smoothed latent moments.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from ._numeric import ensure_spd, min_eig, symmetrize
from .errors import ConfigError, FitError, NumericalError, TascError
from .panel import PanelData
from .ssm import (
    SeasonalOffsets,
    SmoothedTrajectory,
    StateSpaceParams,
    _forward,
    _seasonal_array,
    smooth_pass,
)

__all__ = [
    "EmConfig",
    "SufficientStats",
    "CounterfactualEstimate",
    "EmResult",
    "TascResult",
    "init_params",
    "accumulate_stats",
    "m_step",
    "em_pre",
    "tasc_infer",
    "confidence_width",
]

logger = logging.getLogger("tasc")

# Floors keeping learned noise variances and the initial-residual estimate
# strictly positive.
_NOISE_FLOOR = 1e-10
_INIT_R_FLOOR = 1e-4

# Allowed numerical slack when checking that EM never decreases the
# log-likelihood.
_MONOTONE_SLACK = 1e-6

_COND_LIMIT = 1e12


@dataclass
class EmConfig:
    """Settings for the EM fit.

    ``d`` is the latent dimension, ``n_iters`` the iteration cap, ``rel_tol``
    the relative log-likelihood improvement below which iteration stops, and
    ``n_restarts`` the number of random initializations (the best final
    likelihood wins).
    """

    d: int
    n_iters: int = 200
    rel_tol: float = 1e-6
    n_restarts: int = 5
    seed: int = 0
    diag_noise: bool = True
    seasonal: SeasonalOffsets | np.ndarray | None = None

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError("latent dimension d must be >= 1")
        if self.n_iters < 0:
            raise ConfigError("n_iters must be >= 0")
        if self.rel_tol < 0:
            raise ConfigError("rel_tol must be >= 0")
        if self.n_restarts < 1:
            raise ConfigError("n_restarts must be >= 1")


@dataclass(frozen=True)
class SufficientStats:
    """Averaged second-moment matrices accumulated from a smoothed trajectory.

    ``sigma``/``phi`` are the current/lagged state moments, ``b`` the
    observation-state cross moment, ``c`` the lag-one state cross moment, and
    ``d`` the observation outer-product moment, each averaged over k = 1..K.
    """

    sigma: np.ndarray
    phi: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray


@dataclass(frozen=True)
class CounterfactualEstimate:
    """Post-intervention counterfactual path for the target unit.

    ``var_signal`` is the smoothed latent contribution h1' P h1 per period and
    ``var_pred`` adds the target's observation-noise variance.  The interval
    bounds are Gaussian at the configured ``level`` using ``ci_variance``
    ("prediction" or "signal").
    """

    y_hat: np.ndarray
    var_signal: np.ndarray
    var_pred: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    fitted_pre: np.ndarray
    level: float
    ci_variance: str = "prediction"


@dataclass(frozen=True)
class EmResult:
    theta: StateSpaceParams
    loglik_trace: list[float]
    restart_index: int = 0


@dataclass(frozen=True)
class TascResult:
    theta: StateSpaceParams
    estimate: CounterfactualEstimate
    loglik_trace: list[float] = field(default_factory=list)


def init_params(Y_pre: np.ndarray, config: EmConfig, restart_index: int = 0) -> StateSpaceParams:
    """Deterministic initialization from a rank-d SVD of the pre panel.

    H takes the top-d left singular vectors scaled by singular values over
    sqrt(t0), so H times the implied latent series reproduces the rank-d
    reconstruction; the transition starts near 0.9 I with a small seeded
    perturbation, and R starts at the per-row residual variances of the
    reconstruction (floored).
    """
    Y_pre = np.asarray(Y_pre, dtype=float)
    n, t0 = Y_pre.shape
    d = config.d
    if t0 < 2:
        raise ConfigError("need at least 2 pre-intervention periods")
    if d > min(n, t0):
        raise ConfigError(f"latent dimension d={d} exceeds min(N, t0)={min(n, t0)}")
    rng = np.random.default_rng([config.seed & 0xFFFFFFFF, restart_index])

    u, s, vt = np.linalg.svd(Y_pre, full_matrices=False)
    scale = np.sqrt(t0)
    H = u[:, :d] * (s[:d] / scale)
    latent = scale * vt[:d]  # H @ latent equals the rank-d reconstruction
    A = 0.9 * np.eye(d) + 0.01 * rng.standard_normal((d, d))
    Q = np.eye(d)
    resid = Y_pre - H @ latent
    r_diag = np.maximum(np.mean(resid**2, axis=1), _INIT_R_FLOOR)
    R = np.diag(r_diag)
    m0 = latent[:, 0]
    P0 = np.eye(d)
    return StateSpaceParams(A=A, H=H, Q=Q, R=R, m0=m0, P0=P0, diag_noise=config.diag_noise)


def accumulate_stats(smoothed: SmoothedTrajectory, Y: np.ndarray) -> SufficientStats:
    """Average the five moment matrices over k = 1..K.

    ``Y`` must already have any seasonal offset removed: the statistics feed a
    maximizer of the offset-free observation model.
    """
    Y = np.asarray(Y, dtype=float)
    k_total = Y.shape[1]
    if len(smoothed) != k_total + 1:
        raise ConfigError("smoothed trajectory does not cover indices 0..K")
    ms, Ps, G = smoothed.m_s, smoothed.P_s, smoothed.G

    outer_all = np.einsum("ki,kj->kij", ms, ms)
    sigma = (Ps[1:] + outer_all[1:]).mean(axis=0)
    phi = (Ps[:-1] + outer_all[:-1]).mean(axis=0)
    b = (Y @ ms[1:]) / k_total
    # Lag-one smoothed cross covariance is P_k^s G_{k-1}^T.
    cross = np.einsum("kij,klj->kil", Ps[1:], G) + np.einsum("ki,kj->kij", ms[1:], ms[:-1])
    c = cross.mean(axis=0)
    d_mat = (Y @ Y.T) / k_total
    return SufficientStats(sigma=symmetrize(sigma), phi=symmetrize(phi), b=b, c=c, d=symmetrize(d_mat))


def _spd_inverse_factor(m: np.ndarray, what: str) -> np.ndarray:
    """Inverse of an SPD matrix with an explicit conditioning gate."""
    vals = np.linalg.eigvalsh(m)
    if vals[0] <= 0 or vals[-1] / vals[0] > _COND_LIMIT:
        raise NumericalError(f"{what} is singular or ill-conditioned")
    return np.linalg.inv(m)


def m_step(
    stats: SufficientStats,
    theta_old: StateSpaceParams,
    m0s: np.ndarray,
    P0s: np.ndarray,
    diag_noise: bool | None = None,
) -> StateSpaceParams:
    """Closed-form parameter update from accumulated moments.

    A' and H' are the exact maximizers; Q' and R' are the residual second
    moments evaluated at the fresh A'/H' (kept diagonal when ``diag_noise``),
    floored to stay positive definite.  The initial covariance update inflates
    the smoothed P0 by the shift of the initial mean from its previous value.
    """
    if diag_noise is None:
        diag_noise = theta_old.diag_noise
    phi_inv = _spd_inverse_factor(stats.phi, "state moment matrix Phi")
    sigma_inv = _spd_inverse_factor(stats.sigma, "state moment matrix Sigma")
    A_new = stats.c @ phi_inv
    H_new = stats.b @ sigma_inv

    q_full = stats.sigma - 2.0 * stats.c @ A_new.T + A_new @ stats.phi @ A_new.T
    r_full = stats.d - 2.0 * stats.b @ H_new.T + H_new @ stats.sigma @ H_new.T
    if diag_noise:
        Q_new = np.diag(np.maximum(np.diag(q_full), _NOISE_FLOOR))
        R_new = np.diag(np.maximum(np.diag(r_full), _NOISE_FLOOR))
    else:
        Q_new = _floor_spectrum(symmetrize(q_full))
        R_new = _floor_spectrum(symmetrize(r_full))

    shift = m0s - theta_old.m0
    P0_new = ensure_spd(P0s + np.outer(shift, shift), "initial covariance P0")
    return StateSpaceParams(
        A=A_new, H=H_new, Q=Q_new, R=R_new, m0=m0s, P0=P0_new, diag_noise=diag_noise
    )


def _floor_spectrum(m: np.ndarray) -> np.ndarray:
    floor = min_eig(m)
    if floor < _NOISE_FLOOR:
        m = m + (_NOISE_FLOOR - floor) * np.eye(m.shape[0])
    return m


def _em_single(Y_pre: np.ndarray, config: EmConfig, restart_index: int) -> tuple[StateSpaceParams, list[float]]:
    theta = init_params(Y_pre, config, restart_index)
    if config.n_iters == 0:
        return theta, []
    k_total = Y_pre.shape[1]
    s = _seasonal_array(config.seasonal, k_total)
    Y_stats = Y_pre if s is None else Y_pre - s[:k_total]

    trace: list[float] = []
    prev_ll: float | None = None
    for _ in range(config.n_iters):
        filtered, ll = _forward(Y_pre, theta, seasonal=s)
        trace.append(ll)
        if prev_ll is not None:
            if ll < prev_ll - _MONOTONE_SLACK:
                raise NumericalError(
                    f"EM log-likelihood decreased from {prev_ll:.6f} to {ll:.6f}"
                )
            if ll - prev_ll < config.rel_tol * max(1.0, abs(prev_ll)):
                return theta, trace
        smoothed = smooth_pass(filtered, theta)
        stats = accumulate_stats(smoothed, Y_stats)
        theta = m_step(stats, theta, smoothed.m_s[0], smoothed.P_s[0], config.diag_noise)
        prev_ll = ll
    _, ll = _forward(Y_pre, theta, seasonal=s)
    if prev_ll is not None and ll < prev_ll - _MONOTONE_SLACK:
        raise NumericalError(f"EM log-likelihood decreased from {prev_ll:.6f} to {ll:.6f}")
    trace.append(ll)
    return theta, trace


def em_pre(Y_pre: np.ndarray, config: EmConfig) -> EmResult:
    """Fit the state-space model to pre-intervention data by EM.

    Runs ``n_restarts`` independently initialized fits and returns the one
    with the highest final log-likelihood; the trace of that fit is
    non-decreasing up to numerical slack.  Raises FitError when every restart
    fails numerically.
    """
    Y_pre = np.asarray(Y_pre, dtype=float)
    if Y_pre.ndim != 2:
        raise ConfigError("Y_pre must be an N x t0 matrix")
    if not np.all(np.isfinite(Y_pre)):
        raise ConfigError("pre-intervention data must be finite")
    best: tuple[float, int, StateSpaceParams, list[float]] | None = None
    causes: list[Exception] = []
    for r in range(config.n_restarts):
        try:
            theta, trace = _em_single(Y_pre, config, r)
        except (TascError, np.linalg.LinAlgError) as exc:
            logger.debug("EM restart %d failed: %s", r, exc)
            causes.append(exc)
            continue
        score = trace[-1] if trace else -np.inf
        if best is None or score > best[0]:
            best = (score, r, theta, trace)
        if config.n_iters == 0:
            break  # without iterations every restart is scoreless; keep the first
    if best is None:
        raise FitError(
            f"all {config.n_restarts} EM restarts failed: "
            + "; ".join(str(c) for c in causes),
            causes=causes,
        )
    _, r, theta, trace = best
    return EmResult(theta=theta, loglik_trace=trace, restart_index=r)


def tasc_infer(
    panel: PanelData,
    config: EmConfig,
    level: float = 0.95,
    ci_variance: str = "prediction",
) -> TascResult:
    """Learn the model on pre-intervention columns, then infer the counterfactual.

    The full-length filtering pass treats the target as missing from the
    intervention on (its stored post values never matter), a smoothing pass
    refines every state, and the counterfactual mean per post period is the
    target loading applied to the smoothed state.  Intervals are Gaussian with
    variance ``var_pred`` (signal plus target noise) by default, or
    ``var_signal`` when ``ci_variance="signal"``.
    """
    if not 0.0 < level < 1.0:
        raise ConfigError("confidence level must be in (0, 1)")
    if ci_variance not in ("prediction", "signal"):
        raise ConfigError("ci_variance must be 'prediction' or 'signal'")
    t0 = panel.t0
    t_total = panel.n_periods
    s = _seasonal_array(config.seasonal, 0)
    if s is not None and s.shape[0] < t_total:
        raise ConfigError(f"seasonal offsets cover {s.shape[0]} periods, need {t_total}")

    em = em_pre(panel.values[:, :t0], config)
    theta = em.theta

    filtered, _ = _forward(panel.values, theta, seasonal=s, missing_target_from=t0)
    smoothed = smooth_pass(filtered, theta)

    h1 = theta.H[0]
    r1 = float(theta.R[0, 0])
    proj = smoothed.m_s[1:] @ h1  # length T, index t is period t (0-based)
    if s is not None:
        proj = proj + s[:t_total]
    fitted_pre = proj[:t0]
    y_hat = proj[t0:]
    var_signal = np.maximum(np.einsum("i,kij,j->k", h1, smoothed.P_s[t0 + 1 :], h1), 0.0)
    var_pred = var_signal + r1
    z = float(norm.ppf(0.5 + level / 2.0))
    width = z * np.sqrt(var_pred if ci_variance == "prediction" else var_signal)
    estimate = CounterfactualEstimate(
        y_hat=y_hat,
        var_signal=var_signal,
        var_pred=var_pred,
        ci_lower=y_hat - width,
        ci_upper=y_hat + width,
        fitted_pre=fitted_pre,
        level=level,
        ci_variance=ci_variance,
    )
    return TascResult(theta=theta, estimate=estimate, loglik_trace=em.loglik_trace)


def confidence_width(est: CounterfactualEstimate) -> float:
    """Mean distance between upper and lower interval bounds over post periods."""
    return float(np.mean(est.ci_upper - est.ci_lower))
