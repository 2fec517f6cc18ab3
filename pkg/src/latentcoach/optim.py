"""Gradient ascent with backtracking line search.

One optimiser serves both back-constrained training and patient adaptation.
The search direction is either the raw gradient (``method="gd"``) or a
limited-memory BFGS estimate built from the same gradients
(``method="lbfgs"``); every accepted step satisfies the Armijo condition, so
the objective trace is strictly increasing at accepted steps.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NumericalError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimConfig:
    max_iters: int = 200
    grad_tolerance: float = 1e-5
    f_tolerance: float = 1e-10
    method: str = "lbfgs"
    initial_step: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 40
    memory: int = 10

    def __post_init__(self):
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be >= 1")
        if self.grad_tolerance <= 0 or self.f_tolerance < 0 or self.initial_step <= 0:
            raise InvalidInputError("tolerances and step must be positive")
        if not 0 < self.shrink < 1:
            raise InvalidInputError("shrink must lie in (0, 1)")
        if self.method not in ("lbfgs", "gd"):
            raise InvalidInputError(f"unknown method {self.method!r}")


@dataclass
class OptimResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    n_iter: int
    converged: bool
    reason: str
    trace: list = field(default_factory=list)


def _safe_eval(fun, x):
    try:
        f, g = fun(x)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError):
        return -np.inf, None
    if not np.isfinite(f) or g is None or not np.all(np.isfinite(g)):
        return -np.inf, None
    return float(f), np.asarray(g, dtype=float)


def _lbfgs_direction(g, s_hist, y_hist):
    # two-loop recursion on the negated objective, returned as an ascent direction
    q = -g.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), a in zip(zip(s_hist, y_hist), reversed(alphas)):
        rho = 1.0 / (y @ s)
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def maximize(fun, x0, cfg: OptimConfig | None = None, callback=None) -> OptimResult:
    """Maximise ``fun`` starting at ``x0``.

    Parameters
    ----------
    fun : callable
        ``fun(x) -> (value, gradient)``.  Numerical failures inside a trial
        step count as ``-inf`` and cause backtracking.
    x0 : array_like
    cfg : OptimConfig
    callback : callable, optional
        Called as ``callback(iteration, x, f)`` after every accepted step.

    Raises
    ------
    NumericalError
        If the starting point is non-finite, or if every trial step along a
        direction is non-finite.
    """
    cfg = cfg or OptimConfig()
    x = np.array(x0, dtype=float)
    f, g = _safe_eval(fun, x)
    if not np.isfinite(f):
        raise NumericalError("non-finite objective at iteration 0")
    trace = [f]
    s_hist: deque = deque(maxlen=cfg.memory)
    y_hist: deque = deque(maxlen=cfg.memory)
    step = cfg.initial_step
    reason = "max_iters"
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        gnorm = np.max(np.abs(g)) if g.size else 0.0
        if gnorm < cfg.grad_tolerance:
            converged, reason, it = True, "grad_tolerance", it - 1
            break
        if cfg.method == "lbfgs" and s_hist:
            d = _lbfgs_direction(g, s_hist, y_hist)
            if g @ d <= 0:
                s_hist.clear()
                y_hist.clear()
                d = g.copy()
            alpha = 1.0
        else:
            d = g.copy()
            alpha = step if cfg.method == "gd" else min(1.0, cfg.initial_step / np.linalg.norm(g))
        slope = g @ d
        accepted = False
        saw_finite = False
        for _ in range(cfg.max_backtracks):
            x_new = x + alpha * d
            f_new, g_new = _safe_eval(fun, x_new)
            if np.isfinite(f_new):
                saw_finite = True
                if f_new >= f + cfg.armijo * alpha * slope and f_new > f:
                    accepted = True
                    break
            alpha *= cfg.shrink
        if not accepted:
            if not saw_finite:
                raise NumericalError(f"non-finite objective at iteration {it}")
            if cfg.method == "lbfgs" and s_hist:
                # retry once along the plain gradient before giving up
                s_hist.clear()
                y_hist.clear()
                continue
            converged, reason, it = True, "line_search", it - 1
            break
        s_vec, y_vec = x_new - x, g - g_new
        if s_vec @ y_vec > 1e-12 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            s_hist.append(s_vec)
            y_hist.append(y_vec)
        improvement = f_new - f
        x, f, g = x_new, f_new, g_new
        trace.append(f)
        step = alpha * 2.0
        if callback is not None:
            callback(it, x, f)
        if improvement <= cfg.f_tolerance * max(1.0, abs(f)):
            converged, reason = True, "f_tolerance"
            break
    log.debug("maximize stopped after %d iterations: %s (f=%.6g)", it, reason, f)
    return OptimResult(x, f, g, it, converged, reason, trace)
