"""Limited-memory BFGS with a strong-Wolfe line search."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteLoss


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    history: list[float] = field(default_factory=list)
    n_iter: int = 0
    n_eval: int = 0
    converged: bool = False
    message: str = ""


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic through (a, fa, da), (b, fb, db), or None."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


# relative size of objective changes treated as rounding noise
F_NOISE = 1e-12


def _approx_wolfe(f0, d0, fa, da, c1, c2):
    """Approximate Wolfe test for steps whose decrease is lost in rounding.

    Used only when ``fa`` is within ``F_NOISE`` of ``f0`` and not above it;
    then the curvature window ``c2 d0 <= da <= (2 c1 - 1) d0`` replaces the
    sufficient-decrease test, which cannot be resolved at that precision.
    """
    return (fa <= f0 and abs(fa - f0) <= F_NOISE * max(abs(f0), 1e-300)
            and c2 * d0 <= da <= (2.0 * c1 - 1.0) * d0)


def wolfe_line_search(phi, f0, d0, alpha, c1=1e-4, c2=0.9, max_eval=40):
    """Step length satisfying the strong Wolfe conditions.

    ``phi(alpha)`` returns ``(f, dphi, payload)``. Returns
    ``(alpha, f, payload, n_eval)`` or ``None`` when no acceptable step was found.
    """
    n_eval = 0
    a_prev, f_prev, d_prev = 0.0, f0, d0
    a = alpha
    while n_eval < max_eval:
        fa, da, pay = phi(a)
        n_eval += 1
        if math.isfinite(fa) and _approx_wolfe(f0, d0, fa, da, c1, c2):
            return a, fa, pay, n_eval
        if not math.isfinite(fa) or fa > f0 + c1 * a * d0 or (n_eval > 1 and fa >= f_prev):
            return _zoom(phi, f0, d0, a_prev, f_prev, d_prev, a, fa, da, c1, c2, max_eval - n_eval, n_eval)
        if abs(da) <= -c2 * d0:
            return a, fa, pay, n_eval
        if da >= 0:
            return _zoom(phi, f0, d0, a, fa, da, a_prev, f_prev, d_prev, c1, c2, max_eval - n_eval, n_eval)
        a_prev, f_prev, d_prev = a, fa, da
        a *= 2.0
    return None


def _zoom(phi, f0, d0, lo, f_lo, d_lo, hi, f_hi, d_hi, c1, c2, budget, n_eval):
    for _ in range(max(budget, 0)):
        lo_b, hi_b = min(lo, hi), max(lo, hi)
        width = hi_b - lo_b
        trial = None
        if math.isfinite(f_hi) and math.isfinite(d_hi):
            trial = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
        if trial is None or not (lo_b + 0.1 * width <= trial <= hi_b - 0.1 * width):
            trial = 0.5 * (lo + hi)
        ft, dt, pay = phi(trial)
        n_eval += 1
        if math.isfinite(ft) and _approx_wolfe(f0, d0, ft, dt, c1, c2):
            return trial, ft, pay, n_eval
        if not math.isfinite(ft) or ft > f0 + c1 * trial * d0 or ft >= f_lo:
            hi, f_hi, d_hi = trial, ft, dt
        else:
            if abs(dt) <= -c2 * d0:
                return trial, ft, pay, n_eval
            if dt * (hi - lo) >= 0:
                hi, f_hi, d_hi = lo, f_lo, d_lo
            lo, f_lo, d_lo = trial, ft, dt
        if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
            break
    return None


def lbfgs(fun_grad, x0, max_iter=200, memory=10, tol=1e-6, c1=1e-4, c2=0.9) -> LbfgsResult:
    """Minimize ``fun_grad(x) -> (f, g)`` by L-BFGS (two-loop recursion).

    Stops when ``max|g| < tol``, after ``max_iter`` accepted steps, or when the
    line search cannot find a strong-Wolfe step. ``history`` holds the
    objective after every accepted step, so it never increases.
    """
    x = np.array(x0, dtype=float)
    f, g = fun_grad(x)
    n_eval = 1
    if not math.isfinite(f):
        raise NonFiniteLoss(f"objective is not finite at the starting point: {f}")
    result = LbfgsResult(x, f)
    if max_iter <= 0:
        result.message = "max_iter reached"
        return result
    pairs: deque = deque(maxlen=max(memory, 1))
    history: list[float] = []

    for it in range(max_iter):
        if np.max(np.abs(g)) < tol:
            result.converged = True
            result.message = "gradient tolerance reached"
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, yv, rho in reversed(pairs):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * yv
        if pairs:
            s, yv, _ = pairs[-1]
            q *= (s @ yv) / (yv @ yv)
        for (s, yv, rho), a in zip(pairs, reversed(alphas)):
            b = rho * (yv @ q)
            q += (a - b) * s
        d = -q
        slope = float(g @ d)
        if not slope < 0:
            pairs.clear()
            d = -g
            slope = float(g @ d)
        step0 = 1.0 if pairs else min(1.0, 1.0 / max(float(np.linalg.norm(g)), 1e-300))

        def phi(alpha, x=x, d=d):
            xt = x + alpha * d
            ft, gt = fun_grad(xt)
            return ft, float(gt @ d), (xt, gt)

        found = wolfe_line_search(phi, f, slope, step0, c1, c2)
        if found is None:
            result.message = "line search failed"
            break
        _, f_new, (x_new, g_new), used = found
        n_eval += used
        s = x_new - x
        yv = g_new - g
        sy = float(s @ yv)
        if sy > 1e-12 * float(yv @ yv):
            pairs.append((s, yv, 1.0 / sy))
        x, f, g = x_new, f_new, g_new
        history.append(f)
        result.n_iter = it + 1
    else:
        result.message = "max_iter reached"
        result.converged = bool(np.max(np.abs(g)) < tol)

    result.x, result.f, result.history, result.n_eval = x, f, history, n_eval
    return result
