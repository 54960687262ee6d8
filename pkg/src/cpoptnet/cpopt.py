"""CP fitting by nonlinear conjugate gradient over the stacked factor vector.

The objective is the full-tensor least squares fit

    f(x) = 1/2 ||X||^2 - <X, K(x)> + 1/2 ||K(x)||^2

where ``K(x)`` is the Kruskal tensor unpacked from ``x``. Unstored cells of
the sparse input count as zeros. Search directions use the Hestenes-Stiefel
update and steps come from a strong Wolfe line search.
"""

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from cpoptnet import kernels
from cpoptnet.errors import DimensionError, NonDescentDirection, NumericalError
from cpoptnet.linesearch import strong_wolfe_search, wolfe_search
from cpoptnet.tensor import (
    KruskalTensor,
    flatten,
    gram_matrices,
    inner_product_sparse_kruskal,
    kruskal_norm_sq,
    param_length,
    unflatten,
)
from cpoptnet.trace import (
    CONVERGED_GRADIENT,
    CONVERGED_OBJECTIVE,
    MAX_ITERS,
    SolveTrace,
)

log = logging.getLogger(__name__)

_BETA_DENOM_EPS = 1e-14


@dataclass(frozen=True)
class NcgConfig:
    rank: int
    max_iters: int = 1000
    grad_tol: float = 1e-8
    f_tol: float = 1e-12
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.1
    max_line_search_steps: int = 50
    seed: int = 0
    init_scale: float = 0.1
    restart_threshold: float = 0.1

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be at least 1")
        if not 0 < self.wolfe_c1 < self.wolfe_c2 < 1:
            raise ValueError("need 0 < wolfe_c1 < wolfe_c2 < 1")
        if min(self.grad_tol, self.f_tol, self.init_scale) <= 0:
            raise ValueError("tolerances and init_scale must be positive")
        if self.max_iters < 0 or self.max_line_search_steps < 1:
            raise ValueError("iteration limits must be positive")
        if not 0 <= self.restart_threshold < 1:
            raise ValueError("restart_threshold must lie in [0, 1)")


def _check_length(x, t, rank):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    expected = param_length(t.shape, rank)
    if x.shape[0] != expected:
        raise DimensionError(f"parameter vector has length {x.shape[0]}, expected {expected}")
    return x


def objective(x, t, rank, norm_sq=None):
    """Fit value at ``x`` from the three-summand expansion.

    ``norm_sq`` is ``||t||^2`` if already known.
    """
    x = _check_length(x, t, rank)
    k = unflatten(x, t.shape, rank)
    if norm_sq is None:
        norm_sq = t.norm_sq()
    val = 0.5 * norm_sq - inner_product_sparse_kruskal(t, k) + 0.5 * kruskal_norm_sq(k)
    if not math.isfinite(val):
        raise NumericalError("objective is not finite")
    return val


def _objective_and_gradient(x, t, rank, norm_sq):
    k = unflatten(x, t.shape, rank)
    A, B, C = k.factors
    GA, GB, GC = gram_matrices(k)
    idx, vals = t.indices, t.values
    M_A = kernels.sparse_mttkrp(idx, vals, A, B, C, 0)
    M_B = kernels.sparse_mttkrp(idx, vals, A, B, C, 1)
    M_C = kernels.sparse_mttkrp(idx, vals, A, B, C, 2)
    # <X, K> is recovered from the mode-3 product, so no separate inner kernel pass.
    inner = float(np.sum(M_C * C))
    model_sq = float(np.sum(GA * GB * GC))
    f = 0.5 * norm_sq - inner + 0.5 * model_sq
    grad = np.concatenate(
        [
            (A @ (GB * GC) - M_A).ravel(order="F"),
            (B @ (GA * GC) - M_B).ravel(order="F"),
            (C @ (GA * GB) - M_C).ravel(order="F"),
        ]
    )
    return f, grad


def gradient(x, t, rank):
    """Analytic gradient with respect to the stacked factors.

    For factor A the block is ``A (B^T B * C^T C) - X_(1) (C kr B)``, and
    analogously for B and C; the sparse products cost O(nnz R).
    """
    x = _check_length(x, t, rank)
    _, grad = _objective_and_gradient(x, t, rank, 0.0)
    return grad


def initial_factors(shape, rank, seed, init_scale=0.1):
    rng = np.random.default_rng(seed)
    return KruskalTensor(
        tuple(rng.uniform(-init_scale, init_scale, size=(n, rank)) for n in shape)
    )


def solve(t, cfg, init=None):
    """Fit a rank ``cfg.rank`` CP model to ``t`` with nonlinear conjugate gradient.

    Parameters
    ----------
    t : SparseTensor3
        Observed tensor; must have at least one stored entry.
    cfg : NcgConfig
    init : KruskalTensor, optional
        Starting factors. Defaults to seeded uniform draws in
        ``[-init_scale, init_scale]``.

    Returns
    -------
    factors : KruskalTensor
    trace : SolveTrace

    Raises
    ------
    NumericalError
        If the objective or gradient becomes non-finite.
    """
    if t.nnz == 0:
        raise ValueError("cannot decompose a tensor with no stored entries")
    rank = cfg.rank
    if init is None:
        init = initial_factors(t.shape, rank, cfg.seed, cfg.init_scale)
    elif init.shape != t.shape or init.rank != rank:
        raise DimensionError("initial factors do not match tensor shape and rank")

    started = time.perf_counter()
    norm_sq = t.norm_sq()
    trace = SolveTrace("cpopt")

    def fg(x):
        f, g = _objective_and_gradient(x, t, rank, norm_sq)
        if not (math.isfinite(f) and np.isfinite(g).all()):
            raise NumericalError("non-finite objective or gradient", trace)
        return f, g

    x = flatten(init)
    f, g = fg(x)
    gnorm = float(np.linalg.norm(g))
    g0norm = gnorm
    trace.append(0, f, gnorm)

    if g0norm == 0.0:
        trace.status = CONVERGED_GRADIENT
        trace.wall_time = time.perf_counter() - started
        return unflatten(x, t.shape, rank), trace

    s = -g
    slope = -gnorm * gnorm
    restarted = True
    prev_alpha = None
    prev_slope = None
    trace.status = MAX_ITERS

    for it in range(1, cfg.max_iters + 1):
        if restarted or prev_alpha is None:
            alpha0 = 1.0
        else:
            alpha0 = prev_alpha * prev_slope / slope

        def phi(a, x=x, s=s):
            fa, ga = _objective_and_gradient(x + a * s, t, rank, norm_sq)
            return fa, float(np.dot(ga, s)), ga

        res = wolfe_search(
            phi, f, slope, alpha0, cfg.wolfe_c1, cfg.wolfe_c2, cfg.max_line_search_steps
        )
        if res.alpha == 0.0 or not res.value < f:
            if restarted:
                log.debug("iteration %d: no decrease along steepest descent, stopping", it)
                trace.status = CONVERGED_OBJECTIVE
                break
            log.debug("iteration %d: line search failed, restarting", it)
            s = -g
            slope = -gnorm * gnorm
            restarted = True
            continue

        x_new = x + res.alpha * s
        f_new, g_new = res.value, res.payload
        if not (math.isfinite(f_new) and np.isfinite(g_new).all()):
            raise NumericalError("non-finite objective or gradient", trace)
        gnorm_new = float(np.linalg.norm(g_new))
        trace.append(it, f_new, gnorm_new, res.alpha, res.evals)

        decrease = f - f_new
        f_old = f
        prev_alpha, prev_slope = res.alpha, slope
        s_old, g_old = s, g
        x, f, g, gnorm = x_new, f_new, g_new, gnorm_new

        if gnorm <= cfg.grad_tol * g0norm:
            trace.status = CONVERGED_GRADIENT
            break
        if decrease <= cfg.f_tol * max(abs(f_old), np.finfo(float).tiny):
            trace.status = CONVERGED_OBJECTIVE
            break

        # Hestenes-Stiefel: the negated differences in the textbook form cancel.
        y = g - g_old
        denom = float(np.dot(s_old, y))
        restarted = False
        if abs(denom) < _BETA_DENOM_EPS:
            restarted = True
        else:
            beta = float(np.dot(g, y)) / denom
            s = -g + beta * s_old
            slope = float(np.dot(g, s))
            snorm = float(np.linalg.norm(s))
            if not slope < 0 or -slope < cfg.restart_threshold * gnorm * snorm:
                restarted = True
        if restarted:
            s = -g
            slope = -gnorm * gnorm
    trace.wall_time = time.perf_counter() - started
    return unflatten(x, t.shape, rank), trace


def relative_residual(t, k, norm_sq=None):
    """``sqrt(2 f) / ||t||`` for factors ``k``."""
    if norm_sq is None:
        norm_sq = t.norm_sq()
    f = objective(flatten(k), t, k.rank, norm_sq)
    return math.sqrt(max(2.0 * f, 0.0) / norm_sq)


__all__ = [
    "NcgConfig",
    "NonDescentDirection",
    "gradient",
    "initial_factors",
    "objective",
    "relative_residual",
    "solve",
    "strong_wolfe_search",
]
