"""Classical synthetic control and robust synthetic control baselines.

``sc_fit`` solves the simplex-constrained least-squares program over donor
weights by accelerated projected gradient descent.  ``rsc_fit`` denoises the
donor matrix by hard singular-value thresholding and fits ridge-regularized
weights on the denoised pre-intervention block, optionally choosing the ridge
coefficient by leave-last-k validation on the pre period.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, SolverError
from .panel import PanelData

__all__ = [
    "DonorWeights",
    "RscConfig",
    "RscFit",
    "DEFAULT_CV_GRID",
    "sc_fit",
    "sc_predict",
    "hsvt",
    "rsc_fit",
    "rsc_predict",
    "project_simplex",
    "weights_to_json",
    "weights_from_json",
]

# Ridge grid used for pre-intervention cross-validation when none is given.
DEFAULT_CV_GRID: tuple[float, ...] = tuple(10.0**k for k in range(-1, 7))

_RIDGE_COND_LIMIT = 1e12


@dataclass(frozen=True)
class DonorWeights:
    """A weight vector over donor units.

    ``kind`` is "simplex" for convex-combination weights and "ridge" for
    unconstrained ridge weights.  Ridge weights carry the coefficient and the
    kept rank used to produce them.
    """

    f: np.ndarray
    kind: str
    lambda_: float | None = None
    d: int | None = None

    def __post_init__(self):
        arr = np.asarray(self.f, dtype=float).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "f", arr)
        if self.kind not in ("simplex", "ridge"):
            raise ConfigError(f"unknown weight kind {self.kind!r}")
        if self.kind == "simplex":
            if np.any(self.f < -1e-8) or np.any(self.f > 1.0 + 1e-8):
                raise ConfigError("simplex weights must lie in [0, 1]")
            if abs(self.f.sum() - 1.0) > 1e-8:
                raise ConfigError("simplex weights must sum to 1")


@dataclass
class RscConfig:
    """Robust-SC settings: kept rank ``d``, ridge ``lambda_`` and optional CV grid."""

    d: int
    lambda_: float = 0.0
    cv_grid: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError("kept rank d must be >= 1")
        if self.lambda_ < 0:
            raise ConfigError("ridge coefficient must be >= 0")


@dataclass(frozen=True)
class RscFit:
    weights: DonorWeights
    denoised: np.ndarray
    lambda_: float
    cv_errors: dict[float, float] | None = None


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sorting method)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    cond = u - css / idx > 0
    rho = idx[cond][-1]
    tau = css[rho - 1] / rho
    out = np.maximum(v - tau, 0.0)
    return out / out.sum()


def sc_fit(
    y1_pre: np.ndarray,
    donors_pre: np.ndarray,
    tol: float = 1e-8,
    max_iters: int = 100_000,
) -> DonorWeights:
    """Simplex-constrained least squares: min ||y1_pre - f' donors_pre||^2.

    Accelerated projected gradient descent with gradient-based momentum
    restarts.  The data are rescaled to unit RMS internally (the minimizer is
    scale invariant), and the returned point is feasible with a
    projected-gradient norm of at most ``tol`` on that normalized problem.
    Among zero-residual vertices the lowest donor index wins.
    """
    y = np.asarray(y1_pre, dtype=float).ravel()
    D = np.asarray(donors_pre, dtype=float)
    if D.ndim != 2 or D.shape[1] != y.size:
        raise ConfigError("donors_pre must be n x t0 matching y1_pre")
    n = D.shape[0]
    if n == 1:
        return DonorWeights(f=np.array([1.0]), kind="simplex")

    scale = float(np.sqrt(np.mean(np.square(D)) + np.mean(np.square(y))))
    if scale <= 0.0 or not np.isfinite(scale):
        scale = 1.0
    Dn = D / scale
    yn = y / scale
    gram = Dn @ Dn.T
    lin = Dn @ yn
    lip = 2.0 * float(np.linalg.eigvalsh(gram)[-1]) + 1e-12
    step = 1.0 / lip

    def grad(f):
        return 2.0 * (gram @ f - lin)

    f = np.full(n, 1.0 / n)
    z = f.copy()
    t_mom = 1.0
    pg_norm = np.inf
    for _ in range(max_iters):
        f_new = project_simplex(z - step * grad(z))
        if (z - f_new) @ (f_new - f) > 0.0:
            # Momentum points uphill: restart the accelerated sequence.
            t_mom = 1.0
            z = f_new
        else:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_mom**2))
            z = f_new + ((t_mom - 1.0) / t_next) * (f_new - f)
            t_mom = t_next
        f = f_new
        pg = (f - project_simplex(f - step * grad(f))) / step
        pg_norm = float(np.linalg.norm(pg))
        if pg_norm <= tol:
            break
    else:
        raise SolverError(
            f"simplex solver did not reach tolerance {tol:g} in {max_iters} iterations",
            residual=pg_norm,
        )

    def objective(f):
        r = yn - f @ Dn
        return float(r @ r)

    # Exact-tie vertices take precedence, lowest donor index first.
    obj = objective(f)
    for j in range(n):
        vertex_obj = objective(np.eye(n)[j])
        if vertex_obj <= obj + 1e-12:
            f = np.eye(n)[j]
            break

    f = np.clip(f, 0.0, None)
    f = f / f.sum()
    return DonorWeights(f=f, kind="simplex")


def sc_predict(weights: DonorWeights, donors_post: np.ndarray) -> np.ndarray:
    """Project weights onto post-intervention donor columns: f' donors_post."""
    donors_post = np.asarray(donors_post, dtype=float)
    if donors_post.shape[0] != weights.f.size:
        raise ConfigError("donor count mismatch between weights and matrix")
    return weights.f @ donors_post


def hsvt(Y: np.ndarray, d: int) -> np.ndarray:
    """Hard singular-value thresholding: keep the top-d components of Y."""
    Y = np.asarray(Y, dtype=float)
    if not 1 <= d <= min(Y.shape):
        raise ConfigError(f"kept rank d={d} must be in [1, {min(Y.shape)}]")
    u, s, vt = np.linalg.svd(Y, full_matrices=False)
    return (u[:, :d] * s[:d]) @ vt[:d]


def _ridge_solve(X_pre: np.ndarray, y_pre: np.ndarray, lam: float) -> np.ndarray:
    n = X_pre.shape[0]
    normal = X_pre @ X_pre.T + lam * np.eye(n)
    vals = np.linalg.eigvalsh(normal)
    if vals[0] <= 0 or vals[-1] / vals[0] > _RIDGE_COND_LIMIT:
        raise SolverError(
            "ridge normal matrix is singular; use lambda > 0", residual=float(vals[0])
        )
    return np.linalg.solve(normal, X_pre @ y_pre)


def rsc_fit(panel: PanelData, config: RscConfig) -> RscFit:
    """Denoise donors with HSVT, then ridge-regress the target on the result.

    The full donor block (pre and post columns, target row excluded) is
    denoised; weights are fit on the denoised pre columns against the raw
    target.  With a CV grid, the ridge coefficient minimizing validation RMSE
    on the last ceil(t0/5) pre periods is selected, then weights are refit on
    the whole pre period.
    """
    t0 = panel.t0
    donors = panel.donors
    if config.d > min(donors.shape):
        raise ConfigError(f"kept rank d={config.d} exceeds donor matrix rank bound")
    denoised = hsvt(donors, config.d)
    y1 = panel.values[0, :t0]
    X_pre = denoised[:, :t0]

    cv_errors: dict[float, float] | None = None
    lam = config.lambda_
    if config.cv_grid is not None:
        grid = tuple(config.cv_grid)
        if not grid:
            raise ConfigError("cv_grid must be nonempty when provided")
        k = math.ceil(t0 / 5)
        if t0 - k < 1:
            raise ConfigError("too few pre periods for leave-last-k validation")
        X_train, X_val = X_pre[:, : t0 - k], X_pre[:, t0 - k :]
        y_train, y_val = y1[: t0 - k], y1[t0 - k :]
        cv_errors = {}
        for cand in grid:
            try:
                f_cand = _ridge_solve(X_train, y_train, float(cand))
                err = float(np.sqrt(np.mean((y_val - f_cand @ X_val) ** 2)))
            except SolverError:
                err = np.inf
            cv_errors[float(cand)] = err
        lam = min(cv_errors, key=lambda c: (cv_errors[c], c))

    f = _ridge_solve(X_pre, y1, float(lam))
    weights = DonorWeights(f=f, kind="ridge", lambda_=float(lam), d=config.d)
    return RscFit(weights=weights, denoised=denoised, lambda_=float(lam), cv_errors=cv_errors)


def rsc_predict(weights: DonorWeights, denoised_post: np.ndarray) -> np.ndarray:
    """Project ridge weights onto denoised post-intervention donor columns."""
    return sc_predict(weights, denoised_post)


def weights_to_json(weights: DonorWeights, dest: str | Path | None = None) -> str:
    doc = {
        "kind": weights.kind,
        "f": weights.f.tolist(),
        "lambda": weights.lambda_,
        "d": weights.d,
    }
    text = json.dumps(doc, indent=2)
    if dest is not None:
        Path(dest).write_text(text + "\n")
    return text


def weights_from_json(source: str | Path) -> DonorWeights:
    if isinstance(source, Path):
        text = source.read_text()
    elif isinstance(source, str) and source.lstrip().startswith("{"):
        text = source
    else:
        text = Path(source).read_text()
    doc = json.loads(text)
    return DonorWeights(
        f=np.array(doc["f"], dtype=float),
        kind=doc["kind"],
        lambda_=doc.get("lambda"),
        d=doc.get("d"),
    )
