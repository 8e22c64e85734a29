"""Bound-constrained limited-memory quasi-Newton minimization (SciPy's L-BFGS-B)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .errors import NumericalError


@dataclass(frozen=True)
class OptimOptions:
    max_iters: int = 500
    grad_tol: float = 1e-6
    f_tol: float = 1e-10
    history: int = 10
    lower_bounds: Sequence | None = None

    def __post_init__(self):
        if not (self.grad_tol > 0 and self.f_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.history < 1 or self.max_iters < 1:
            raise ValueError("history and max_iters must be >= 1")


@dataclass
class Diagnostics:
    iterations: int
    evaluations: int
    reason: str
    converged: bool
    projected_grad_norm: float
    value: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def projected_gradient(x, g, lower) -> np.ndarray:
    """Gradient with components pushing into an active lower bound zeroed."""
    pg = np.array(g, dtype=float)
    if lower is not None:
        lo = np.array([-np.inf if b is None else b for b in lower])
        pg[(x <= lo) & (pg > 0)] = 0.0
    return pg


def minimize(fun: Callable, x0, opts: OptimOptions = OptimOptions()):
    """Minimize ``fun(x) -> (value, gradient)`` from ``x0`` subject to ``x >= lower_bounds``.

    Raises :class:`NumericalError` as soon as a non-finite value or gradient
    shows up, carrying the offending iterate.
    """
    x0 = np.asarray(x0, dtype=float)
    lower = opts.lower_bounds
    if lower is not None and len(lower) != x0.size:
        raise ValueError("lower_bounds length does not match x0")
    bounds = None if lower is None else [(lo, None) for lo in lower]

    def checked(x):
        val, grad = fun(x)
        if not np.isfinite(val) or not np.all(np.isfinite(grad)):
            raise NumericalError(f"non-finite objective or gradient (value={val})", iterate=x.copy())
        return val, grad

    res = _scipy_minimize(
        checked, x0, jac=True, method="L-BFGS-B", bounds=bounds,
        options=dict(maxiter=opts.max_iters, maxfun=max(15000, 20 * opts.max_iters),
                     gtol=opts.grad_tol, ftol=opts.f_tol, maxcor=opts.history))
    x = res.x
    pg = projected_gradient(x, res.jac, lower)
    reason = res.message if isinstance(res.message, str) else res.message.decode()
    diag = Diagnostics(int(res.nit), int(res.nfev), reason, bool(res.success),
                       float(np.max(np.abs(pg), initial=0.0)), float(res.fun))
    return x, diag
