"""Small linear-algebra and seeding helpers used across modules."""

from __future__ import annotations

import logging

import numpy as np
from scipy.linalg import cho_solve, cholesky

from .errors import NumericalError

logger = logging.getLogger("tasc")

# A Cholesky factor whose squared diagonal ratio exceeds this is treated as
# numerically singular (the ratio lower-bounds the condition number).
COND_LIMIT = 1e12


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def spd_cholesky(m: np.ndarray, what: str, step: int | None = None) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    Raises NumericalError when factorization fails or the factor's diagonal
    ratio shows the matrix is ill-conditioned beyond COND_LIMIT.
    """
    try:
        low = cholesky(m, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"{what} is not positive definite", step=step) from exc
    diag = np.diag(low)
    if not np.all(np.isfinite(diag)):
        raise NumericalError(f"{what} produced a non-finite factor", step=step)
    ratio = (diag.max() / diag.min()) ** 2
    if ratio > COND_LIMIT:
        raise NumericalError(
            f"{what} condition number exceeds {COND_LIMIT:.0e}", step=step
        )
    return low


def spd_solve(low: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve M x = b given the lower Cholesky factor of M."""
    return cho_solve((low, True), b, check_finite=False)


def ensure_spd(m: np.ndarray, what: str, jitter: float = 1e-9) -> np.ndarray:
    """Symmetrize and, only if a Cholesky check fails, add jitter on the diagonal."""
    m = symmetrize(m)
    try:
        cholesky(m, lower=True, check_finite=False)
        return m
    except np.linalg.LinAlgError:
        logger.warning("adding %.0e jitter to non-PD %s", jitter, what)
        return m + jitter * np.eye(m.shape[0])


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """A square root L with L @ L.T = m, tolerating semidefinite input."""
    try:
        return cholesky(m, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(symmetrize(m))
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def min_eig(m: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(symmetrize(m)).min())


def derive_seed(*parts: int) -> int:
    """Counter-style derivation of an independent child seed from integer parts."""
    seq = np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts])
    return int(seq.generate_state(1, np.uint64)[0])
