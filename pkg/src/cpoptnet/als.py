"""Alternating least squares for the same full-tensor CP fit.

Each sweep solves the three factor subproblems in turn; every update is an
exact least squares solve (up to the ridge term). After a factor is solved,
its columns are scaled to unit norm and the norms are pushed into the next
factor in the cycle, which leaves the reconstruction unchanged.
"""

import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from cpoptnet import kernels
from cpoptnet.cpopt import initial_factors
from cpoptnet.errors import DimensionError, NumericalError
from cpoptnet.tensor import KruskalTensor
from cpoptnet.trace import CONVERGED_OBJECTIVE, MAX_ITERS, SolveTrace


@dataclass(frozen=True)
class AlsConfig:
    rank: int
    max_iters: int = 200
    fit_tol: float = 1e-8
    seed: int = 0
    ridge: float = 1e-12
    init_scale: float = 0.1

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be at least 1")
        if self.fit_tol <= 0 or self.ridge < 0 or self.init_scale <= 0:
            raise ValueError("fit_tol and init_scale must be positive, ridge nonnegative")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")


def _fit_state(t, factors, norm_sq):
    """Objective and gradient norm for the current factors."""
    A, B, C = factors
    grams = [f.T @ f for f in factors]
    idx, vals = t.indices, t.values
    mttkrps = [kernels.sparse_mttkrp(idx, vals, A, B, C, m) for m in range(3)]
    inner = float(np.sum(mttkrps[2] * C))
    f = 0.5 * norm_sq - inner + 0.5 * float(np.sum(grams[0] * grams[1] * grams[2]))
    blocks = []
    for m in range(3):
        g_other = np.ones_like(grams[0])
        for o in range(3):
            if o != m:
                g_other = g_other * grams[o]
        blocks.append(factors[m] @ g_other - mttkrps[m])
    gnorm = math.sqrt(sum(float(np.sum(b * b)) for b in blocks))
    return f, gnorm


def solve_als(t, cfg, init=None):
    """Fit a rank ``cfg.rank`` CP model by cyclic least squares sweeps.

    The trace records the objective once per sweep, computed exactly as in
    :func:`cpoptnet.cpopt.objective`, so it is directly comparable with the
    conjugate gradient solver. Iteration stops after ``max_iters`` sweeps or
    when the relative fit ``1 - sqrt(2 f)/||t||`` changes by less than
    ``fit_tol``.
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
    norm = math.sqrt(norm_sq)
    trace = SolveTrace("als")
    factors = [np.array(f) for f in init.factors]

    f, gnorm = _fit_state(t, factors, norm_sq)
    trace.append(0, f, gnorm)
    fit = 1.0 - math.sqrt(max(2.0 * f, 0.0)) / norm
    trace.status = MAX_ITERS
    eye = np.eye(rank)

    for sweep in range(1, cfg.max_iters + 1):
        for m in range(3):
            others = [o for o in range(3) if o != m]
            gram = (factors[others[0]].T @ factors[others[0]]) * (
                factors[others[1]].T @ factors[others[1]]
            )
            rhs = kernels.sparse_mttkrp(t.indices, t.values, *factors, m)
            try:
                # gram is symmetric, so solve gram @ F^T = rhs^T.
                new = scipy.linalg.solve(gram + cfg.ridge * eye, rhs.T, assume_a="pos").T
            except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
                raise NumericalError(f"singular Gram matrix in sweep {sweep}", trace) from exc
            if not np.isfinite(new).all():
                raise NumericalError(f"non-finite factor in sweep {sweep}", trace)
            norms = np.linalg.norm(new, axis=0)
            norms[norms == 0] = 1.0
            factors[m] = new / norms
            factors[(m + 1) % 3] = factors[(m + 1) % 3] * norms

        f, gnorm = _fit_state(t, factors, norm_sq)
        if not math.isfinite(f):
            raise NumericalError("non-finite objective", trace)
        trace.append(sweep, f, gnorm)
        new_fit = 1.0 - math.sqrt(max(2.0 * f, 0.0)) / norm
        if abs(new_fit - fit) < cfg.fit_tol:
            trace.status = CONVERGED_OBJECTIVE
            fit = new_fit
            break
        fit = new_fit

    trace.wall_time = time.perf_counter() - started
    return KruskalTensor(tuple(factors)), trace


__all__ = ["AlsConfig", "solve_als"]
