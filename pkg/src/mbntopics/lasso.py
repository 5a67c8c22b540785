"""Per-word L1-regularized regression against the document-topic design.

Every vocabulary word i solves

    min over beta of  0.5 * ||beta W - d_i||_2^2 + lambda_eff * ||beta||_1

where W is the shared c x N document-topic matrix and d_i the word's TF-IDF
row. The solver is ADMM (alternating direction method of multipliers): a
ridge solve against the shared Cholesky factor of (W W^T + rho I), a
soft-threshold shrinkage, and a dual update, stopped by combined
absolute/relative primal and dual tolerances.

In relative mode (the default) lambda_eff = lambda * ||W d_i||_inf per row,
which makes the regularization invariant to the document norms; lambda >= 1
then provably zeroes the whole row. Rows are independent; the batched solver
runs them as vectorized columns and is bit-identical to solving rows one at
a time (all per-iteration operations are column-independent, including the
unblocked triangular solves below).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .corpus import TfidfMatrix
from .linalg import DimensionMismatch, cholesky, dense_matrix
from .spectral import DocTopicMatrix

logger = logging.getLogger(__name__)

_LAM_MODES = ("relative", "absolute")


@dataclass(frozen=True)
class LassoConfig:
    lam: float = 1.0 / 3.0
    lam_mode: str = "relative"
    rho: float = 1.0
    abs_tol: float = 1e-4
    rel_tol: float = 1e-2
    max_iters: int = 1000
    nonneg: bool = False

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.lam_mode not in _LAM_MODES:
            raise ValueError(f"lam_mode must be one of {_LAM_MODES}")
        if self.rho <= 0:
            raise ValueError("rho must be > 0")
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class TopicWordMatrix:
    """Topic scores per word (v x c) with per-row solver diagnostics."""

    coefficients: np.ndarray
    iterations: np.ndarray
    primal_residuals: np.ndarray
    dual_residuals: np.ndarray
    converged: np.ndarray
    lambda_effective: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.coefficients).all():
            raise ValueError("coefficients must be finite")

    @property
    def n_words(self) -> int:
        return self.coefficients.shape[0]

    @property
    def n_topics(self) -> int:
        return self.coefficients.shape[1]


def soft_threshold(x, t) -> np.ndarray:
    """Componentwise sign(x) * max(|x| - t, 0)."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if (t < 0).any():
        raise ValueError("threshold must be >= 0")
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _chol_solve_columns(ell: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve L L^T X = B column-wise with unblocked substitution.

    The explicit elementwise loops keep the per-column arithmetic identical
    for any batch width, which is what makes batched solves bit-identical to
    per-row solves.
    """
    c = ell.shape[0]
    y = np.empty_like(b)
    for i in range(c):
        acc = b[i].copy()
        for t in range(i):
            acc -= ell[i, t] * y[t]
        y[i] = acc / ell[i, i]
    x = np.empty_like(b)
    for i in range(c - 1, -1, -1):
        acc = y[i].copy()
        for t in range(i + 1, c):
            acc -= ell[t, i] * x[t]
        x[i] = acc / ell[i, i]
    return x


def _admm_batch(
    ell: np.ndarray, linear: np.ndarray, lam_eff: np.ndarray, config: LassoConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Run ADMM on a batch of rows (columns of ``linear``).

    Returns (z, iterations, primal_norms, dual_norms, converged); rows that
    hit max_iters come back flagged non-converged rather than raising.
    """
    c, m = linear.shape
    x = np.zeros((c, m))
    z = np.zeros((c, m))
    u = np.zeros((c, m))
    kappa = lam_eff / config.rho
    iters = np.zeros(m, dtype=np.int64)
    primal = np.zeros(m)
    dual = np.zeros(m)
    done = np.zeros(m, dtype=bool)
    active = np.arange(m)
    sqrt_c = math.sqrt(c)

    for it in range(1, config.max_iters + 1):
        ta = linear[:, active]
        za = z[:, active]
        ua = u[:, active]
        xa = _chol_solve_columns(ell, ta + config.rho * (za - ua))
        arg = xa + ua
        if config.nonneg:
            z_new = np.maximum(arg - kappa[active], 0.0)
        else:
            z_new = soft_threshold(arg, kappa[active])
        ua = ua + xa - z_new
        r = xa - z_new
        s = config.rho * (z_new - za)
        r_norm = np.sqrt((r * r).sum(axis=0))
        s_norm = np.sqrt((s * s).sum(axis=0))
        x_norm = np.sqrt((xa * xa).sum(axis=0))
        z_norm = np.sqrt((z_new * z_new).sum(axis=0))
        u_scaled = config.rho * np.sqrt((ua * ua).sum(axis=0))
        eps_pri = sqrt_c * config.abs_tol + config.rel_tol * np.maximum(x_norm, z_norm)
        eps_dual = sqrt_c * config.abs_tol + config.rel_tol * u_scaled

        x[:, active] = xa
        z[:, active] = z_new
        u[:, active] = ua
        iters[active] = it
        primal[active] = r_norm
        dual[active] = s_norm

        finished = (r_norm <= eps_pri) & (s_norm <= eps_dual)
        if finished.any():
            done[active[finished]] = True
            active = active[~finished]
            if active.size == 0:
                break
    return z, iters, primal, dual, done


def _as_design(w) -> np.ndarray:
    if isinstance(w, DocTopicMatrix):
        w = w.weights
    w = dense_matrix(w)
    if not w.any():
        raise ValueError("design matrix W must be non-zero")
    return w


def effective_lambda(w: np.ndarray, linear: np.ndarray, config: LassoConfig) -> np.ndarray:
    """Per-row regularization weight under the configured mode."""
    if config.lam_mode == "relative":
        return config.lam * np.abs(linear).max(axis=0)
    return np.full(linear.shape[1], config.lam)


def lasso_row(w, d, config: LassoConfig = LassoConfig()) -> np.ndarray:
    """Solve one word's lasso row; returns the sparse iterate z (length c)."""
    w = _as_design(w)
    d = np.asarray(d, dtype=np.float64).ravel()
    if d.shape[0] != w.shape[1]:
        raise DimensionMismatch("lasso_row", w.shape, (d.shape[0], 1))
    ell = cholesky(w @ w.T + config.rho * np.eye(w.shape[0]))
    linear = (w @ d)[:, None]
    lam_eff = effective_lambda(w, linear, config)
    z, _, _, _, _ = _admm_batch(ell, linear, lam_eff, config)
    return z[:, 0]


def solve_topic_words(w, d, config: LassoConfig = LassoConfig()) -> TopicWordMatrix:
    """Solve every vocabulary row against the shared design.

    The Cholesky factor of (W W^T + rho I) is computed once and shared; the
    linear terms are computed row by row with the same kernel the standalone
    row solver uses, so the batch is bit-identical to per-row calls.
    """
    w = _as_design(w)
    matrix = d.matrix if isinstance(d, TfidfMatrix) else d
    if matrix.shape[1] != w.shape[1]:
        raise DimensionMismatch("solve_topic_words", w.shape, matrix.shape)
    v = matrix.shape[0]
    rows = sp.csr_array(matrix) if sp.issparse(matrix) else dense_matrix(matrix)

    ell = cholesky(w @ w.T + config.rho * np.eye(w.shape[0]))
    linear = np.empty((w.shape[0], v), dtype=np.float64)
    for i in range(v):
        if sp.issparse(rows):
            di = rows[[i], :].toarray().ravel()
        else:
            di = rows[i]
        linear[:, i] = w @ di
    lam_eff = effective_lambda(w, linear, config)
    z, iters, primal, dual, done = _admm_batch(ell, linear, lam_eff, config)
    if not done.all():
        logger.warning("%d of %d lasso rows hit max_iters", int((~done).sum()), v)
    return TopicWordMatrix(
        coefficients=np.ascontiguousarray(z.T),
        iterations=iters,
        primal_residuals=primal,
        dual_residuals=dual,
        converged=done,
        lambda_effective=lam_eff,
    )


def lasso_objective(w, d, coef, lam_eff: float) -> float:
    """0.5 * ||coef W - d||^2 + lam_eff * ||coef||_1 for one row."""
    w = _as_design(w)
    d = np.asarray(d, dtype=np.float64).ravel()
    coef = np.asarray(coef, dtype=np.float64).ravel()
    r = coef @ w - d
    return 0.5 * float(r @ r) + float(lam_eff) * float(np.abs(coef).sum())


def kkt_violation(w, d, coef, lam_eff: float) -> tuple[float, float]:
    """Stationarity violations of one solved row.

    Returns (zero_gap, active_gap): for zero coefficients the excess of
    |W r^T| over lam_eff, for non-zero coefficients |W r^T + lam_eff sign|.
    Both are ~0 at the exact solution. Not meaningful under nonneg mode.
    """
    w = _as_design(w)
    d = np.asarray(d, dtype=np.float64).ravel()
    coef = np.asarray(coef, dtype=np.float64).ravel()
    grad = w @ (coef @ w - d)
    zero = coef == 0.0
    zero_gap = float(np.maximum(np.abs(grad[zero]) - lam_eff, 0.0).max(initial=0.0))
    active_gap = float(
        np.abs(grad[~zero] + lam_eff * np.sign(coef[~zero])).max(initial=0.0)
    )
    return zero_gap, active_gap


def top_words(c, vocabulary, m: int) -> list[list[str]]:
    """Per-topic word lists ranked by signed coefficient, ties by vocab index.

    All-zero topic columns are flagged and fall back to vocabulary order.
    """
    coef = c.coefficients if isinstance(c, TopicWordMatrix) else dense_matrix(c)
    if coef.shape[0] != len(vocabulary):
        raise ValueError(
            f"coefficients have {coef.shape[0]} rows but vocabulary has "
            f"{len(vocabulary)} words"
        )
    if not 0 <= m <= len(vocabulary):
        raise ValueError(f"m={m} outside 0..{len(vocabulary)}")
    out = []
    for g in range(coef.shape[1]):
        column = coef[:, g]
        if not column.any():
            logger.warning("topic %d has an all-zero coefficient column", g)
        order = np.argsort(-column, kind="stable")[:m]
        out.append([vocabulary[i] for i in order])
    return out
