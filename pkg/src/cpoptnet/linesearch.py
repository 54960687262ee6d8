"""Strong Wolfe line search (bracketing phase followed by zoom).

The search works on the one-dimensional restriction
``phi(alpha) = f(x + alpha * d)``; callers pass a function returning
``(phi(alpha), phi'(alpha), payload)`` where ``payload`` is whatever the
caller wants handed back for the accepted point (typically the gradient).
"""

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from cpoptnet.errors import NonDescentDirection


@dataclass
class LineSearchResult:
    alpha: float
    value: float
    slope: float
    payload: Any
    evals: int
    wolfe: bool  # False when the best-decrease fallback was returned


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic interpolating two points and their slopes, or None."""
    if a == b:
        return None
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0:
        return None
    d2 = math.copysign(math.sqrt(rad), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    x = b - (b - a) * (db + d2 - d1) / denom
    return x if math.isfinite(x) else None


def wolfe_search(phi, f0, d0, alpha0=1.0, c1=1e-4, c2=0.1, max_steps=50, alpha_max=1e10):
    """Find a step satisfying the strong Wolfe conditions.

    Parameters
    ----------
    phi : callable
        ``phi(alpha) -> (value, slope, payload)``.
    f0, d0 : float
        ``phi(0)`` and ``phi'(0)``; ``d0`` must be negative.
    alpha0 : float
        First trial step.

    Returns
    -------
    LineSearchResult
        If no Wolfe point is found within ``max_steps`` evaluations, the
        trial with the lowest value is returned with ``wolfe=False``. If no
        trial decreased the objective, ``alpha`` is 0.
    """
    if not d0 < 0:
        raise NonDescentDirection(f"directional derivative {d0!r} is not negative")
    if not alpha0 > 0:
        raise ValueError("initial step must be positive")

    evals = 0
    best = LineSearchResult(0.0, f0, d0, None, 0, False)

    def evaluate(a):
        nonlocal evals, best
        fa, da, payload = phi(a)
        evals += 1
        if math.isfinite(fa) and fa < best.value:
            best = LineSearchResult(a, fa, da, payload, 0, False)
        return fa, da, payload

    def done(a, fa, da, payload):
        return LineSearchResult(a, fa, da, payload, evals, True)

    def fallback():
        best.evals = evals
        return best

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi):
        while evals < max_steps:
            left, right = min(lo, hi), max(lo, hi)
            width = right - left
            trial = None
            if math.isfinite(f_hi) and math.isfinite(d_hi):
                trial = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            if trial is None or not (left + 0.1 * width <= trial <= right - 0.1 * width):
                trial = 0.5 * (lo + hi)
            if width <= 1e-16 * max(1.0, right):
                break
            fa, da, payload = evaluate(trial)
            if not math.isfinite(fa) or fa > f0 + c1 * trial * d0 or fa >= f_lo:
                hi, f_hi, d_hi = trial, fa, da
            else:
                if abs(da) <= -c2 * d0:
                    return done(trial, fa, da, payload)
                if da * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = trial, fa, da
        return fallback()

    a_prev, f_prev, d_prev = 0.0, f0, d0
    a = float(alpha0)
    first = True
    while evals < max_steps:
        fa, da, payload = evaluate(a)
        if not math.isfinite(fa) or fa > f0 + c1 * a * d0 or (not first and fa >= f_prev):
            return zoom(a_prev, f_prev, d_prev, a, fa, da)
        if abs(da) <= -c2 * d0:
            return done(a, fa, da, payload)
        if da >= 0:
            return zoom(a, fa, da, a_prev, f_prev, d_prev)
        if a >= alpha_max:
            break
        a_prev, f_prev, d_prev = a, fa, da
        a = min(2.0 * a, alpha_max)
        first = False
    return fallback()


def strong_wolfe_search(x, direction, f, g, alpha0=1.0, c1=1e-4, c2=0.1, max_steps=50):
    """Strong Wolfe step length along ``direction`` from ``x``.

    Parameters
    ----------
    x, direction : ndarray
    f, g : callable
        Objective and gradient.
    alpha0 : float
        Initial trial step.

    Returns
    -------
    alpha : float
    evals : int
        Number of objective/gradient evaluations used.

    Raises
    ------
    NonDescentDirection
        If ``g(x) . direction >= 0``; the caller should restart from the
        steepest descent direction.
    """
    x = np.asarray(x, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    f0 = float(f(x))
    d0 = float(np.dot(g(x), direction))

    def phi(a):
        xa = x + a * direction
        return float(f(xa)), float(np.dot(g(xa), direction)), None

    res = wolfe_search(phi, f0, d0, alpha0, c1, c2, max_steps)
    return res.alpha, res.evals
