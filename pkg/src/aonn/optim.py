"""Full-batch minimizers: L-BFGS / BFGS with a strong Wolfe line search, and Adam.

The evaluator is any callable ``x -> (loss, gradient)`` on flat float64 vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .jets import DivergenceError

__all__ = ["OptimOptions", "OptimStats", "StepRecord", "minimize", "strong_wolfe"]

DENSE_BFGS_LIMIT = 5000

Evaluator = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


@dataclass(frozen=True)
class OptimOptions:
    method: str = "lbfgs"  # "lbfgs" | "bfgs" | "adam"
    max_iterations: int = 100
    c1: float = 1e-4
    c2: float = 0.9
    memory: int = 20
    grad_tol: float = 1e-9
    max_line_search: int = 25
    adam_rate: float = 1e-3
    adam_betas: tuple[float, float] = (0.9, 0.999)

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.memory < 1:
            raise ValueError("memory must be at least 1")
        if self.method not in ("lbfgs", "bfgs", "adam"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")


@dataclass(frozen=True)
class StepRecord:
    """One accepted line-search step along direction ``d`` with length ``t``."""

    step: float
    loss_before: float
    loss_after: float
    slope_before: float  # grad(x) . d
    slope_after: float   # grad(x + t d) . d

    def sufficient_decrease(self, c1: float) -> bool:
        return self.loss_after <= self.loss_before + c1 * self.step * self.slope_before

    def curvature(self, c2: float) -> bool:
        return abs(self.slope_after) <= c2 * abs(self.slope_before)


@dataclass
class OptimStats:
    iterations: int = 0
    evaluations: int = 0
    final_loss: float = math.nan
    grad_norm: float = math.nan
    line_search_failures: int = 0
    best_loss: list[float] = field(default_factory=list)
    steps: list[StepRecord] = field(default_factory=list)
    message: str = ""


class _Counted:
    def __init__(self, fn: Evaluator, stats: OptimStats):
        self.fn = fn
        self.stats = stats

    def __call__(self, x):
        self.stats.evaluations += 1
        f, g = self.fn(x)
        return float(f), np.asarray(g, dtype=np.float64)

    def trial(self, x):
        """Evaluate a line-search trial point; divergence there just means 'step too long'."""
        try:
            f, g = self(x)
        except DivergenceError:
            return math.inf, None
        if not math.isfinite(f) or not np.all(np.isfinite(g)):
            return math.inf, None
        return f, g


def _cubic_min(t1, f1, d1, t2, f2, d2, lo, hi):
    """Minimizer of the cubic through two points with slopes, clamped to [lo, hi]."""
    if not (math.isfinite(f1) and math.isfinite(f2)):
        return 0.5 * (lo + hi)
    a = d1 + d2 - 3 * (f1 - f2) / (t1 - t2)
    disc = a * a - d1 * d2
    if disc < 0:
        return 0.5 * (lo + hi)
    b = math.sqrt(disc)
    if t1 <= t2:
        t = t2 - (t2 - t1) * ((d2 + b - a) / (d2 - d1 + 2 * b))
    else:
        t = t1 - (t1 - t2) * ((d1 + b - a) / (d1 - d2 + 2 * b))
    if not math.isfinite(t):
        return 0.5 * (lo + hi)
    return min(max(t, lo), hi)


def strong_wolfe(fun: _Counted, x, f0, g0, d, t, c1, c2, max_evals):
    """Bracketing + zoom line search.

    Returns ``(t, f, g, ok, best)`` where ``best`` is the lowest ``(f, t, g)`` tried.
    """
    slope0 = float(g0 @ d)
    best = (f0, 0.0, g0)
    t_prev, f_prev, s_prev = 0.0, f0, slope0
    evals = 0
    lo = hi = None
    while evals < max_evals:
        f, g = fun.trial(x + t * d)
        evals += 1
        s = float(g @ d) if g is not None else math.nan
        if f < best[0]:
            best = (f, t, g)
        if f > f0 + c1 * t * slope0 or (evals > 1 and f >= f_prev):
            lo, hi = (t_prev, f_prev, s_prev), (t, f, s)
            break
        if abs(s) <= -c2 * slope0:
            return t, f, g, True, best
        if s >= 0:
            lo, hi = (t, f, s), (t_prev, f_prev, s_prev)
            break
        t_next = _cubic_min(t_prev, f_prev, s_prev, t, f, s, t + 0.01 * (t - t_prev), 10 * t)
        t_prev, f_prev, s_prev = t, f, s
        t = t_next
    else:
        return t, None, None, False, best

    # zoom: lo always satisfies sufficient decrease and has the lower loss of the pair
    while evals < max_evals:
        (tl, fl, sl), (th, fh, sh) = lo, hi
        width = abs(th - tl)
        if width * float(np.max(np.abs(d))) < 1e-14:
            break
        a, b = min(tl, th), max(tl, th)
        t = _cubic_min(tl, fl, sl, th, fh, sh, a, b)
        margin = 0.1 * width
        if t - a < margin or b - t < margin:
            t = 0.5 * (a + b)
        f, g = fun.trial(x + t * d)
        evals += 1
        s = float(g @ d) if g is not None else math.nan
        if f < best[0]:
            best = (f, t, g)
        if f > f0 + c1 * t * slope0 or f >= fl:
            hi = (t, f, s)
        else:
            if abs(s) <= -c2 * slope0:
                return t, f, g, True, best
            if s * (th - tl) >= 0:
                hi = lo
            lo = (t, f, s)
    return t, None, None, False, best


def _lbfgs_direction(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def _adam(fun: _Counted, x, f, g, opts: OptimOptions, stats: OptimStats):
    b1, b2 = opts.adam_betas
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    best_x, best_f = x.copy(), f
    for k in range(1, opts.max_iterations + 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - opts.adam_rate * (m / (1 - b1 ** k)) / (np.sqrt(v / (1 - b2 ** k)) + 1e-12)
        try:
            f, g = fun(x)
        except DivergenceError as err:
            err.iteration = k
            raise
        stats.iterations = k
        if f < best_f:
            best_x, best_f = x.copy(), f
        stats.best_loss.append(best_f)
    stats.final_loss = best_f
    stats.message = "iteration limit"
    return best_x


def minimize(evaluator: Evaluator, x0, opts: OptimOptions | None = None) -> tuple[np.ndarray, OptimStats]:
    """Minimize ``evaluator`` from ``x0``; returns the final (or best-seen) iterate and statistics."""
    opts = opts or OptimOptions()
    stats = OptimStats()
    fun = _Counted(evaluator, stats)
    x = np.array(x0, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 has non-finite entries")
    if opts.method == "bfgs" and x.size > DENSE_BFGS_LIMIT:
        raise ValueError(f"dense BFGS refused above {DENSE_BFGS_LIMIT} parameters ({x.size} given)")
    f, g = fun(x)
    if not math.isfinite(f):
        raise DivergenceError("loss is not finite at the starting point", iteration=0)
    stats.final_loss = f
    stats.grad_norm = float(np.max(np.abs(g))) if g.size else 0.0
    if opts.max_iterations == 0:
        stats.message = "iteration limit"
        return x, stats
    if opts.method == "adam":
        x = _adam(fun, x, f, g, opts, stats)
        return x, stats

    pairs: list[tuple[np.ndarray, np.ndarray, float]] = []
    inv_hess = None if opts.method == "lbfgs" else np.eye(x.size)
    stats.message = "iteration limit"
    for k in range(1, opts.max_iterations + 1):
        if stats.grad_norm <= opts.grad_tol:
            stats.message = "gradient tolerance"
            break
        fresh = not pairs if inv_hess is None else k == 1
        d = _lbfgs_direction(g, pairs) if inv_hess is None else -(inv_hess @ g)
        if not float(g @ d) < 0:
            pairs.clear()
            if inv_hess is not None:
                inv_hess = np.eye(x.size)
            d, fresh = -g, True
        t0 = min(1.0, 1.0 / float(np.sum(np.abs(g)))) if fresh else 1.0
        t, f_new, g_new, ok, best = strong_wolfe(fun, x, f, g, d, t0, opts.c1, opts.c2, opts.max_line_search)
        if not ok:
            stats.line_search_failures += 1
            if not fresh:
                # retry once from steepest descent with a cleared memory
                pairs.clear()
                if inv_hess is not None:
                    inv_hess = np.eye(x.size)
                d = -g
                t0 = min(1.0, 1.0 / float(np.sum(np.abs(g))))
                t, f_new, g_new, ok, best = strong_wolfe(fun, x, f, g, d, t0, opts.c1, opts.c2,
                                                         opts.max_line_search)
                if not ok:
                    stats.line_search_failures += 1
            if not ok:
                f_best, t_best, g_best = best
                if t_best > 0 and f_best < f:
                    x, f, g = x + t_best * d, f_best, g_best
                stats.message = "line search failed"
                stats.best_loss.append(f)
                break
        s = t * d
        y = g_new - g
        stats.steps.append(StepRecord(t, f, f_new, float(g @ d), float(g_new @ d)))
        sy = float(s @ y)
        if sy > 1e-10 * float(np.sqrt((s @ s) * (y @ y))):
            if inv_hess is None:
                pairs.append((s, y, 1.0 / sy))
                if len(pairs) > opts.memory:
                    pairs.pop(0)
            else:
                if k == 1:
                    inv_hess *= sy / float(y @ y)
                rho = 1.0 / sy
                hy = inv_hess @ y
                inv_hess += (rho * rho * float(y @ hy) + rho) * np.outer(s, s) - rho * (
                    np.outer(hy, s) + np.outer(s, hy))
        x = x + s
        f, g = f_new, g_new
        stats.iterations = k
        stats.grad_norm = float(np.max(np.abs(g)))
        stats.best_loss.append(f)
    stats.final_loss = f
    stats.grad_norm = float(np.max(np.abs(g)))
    return x, stats
