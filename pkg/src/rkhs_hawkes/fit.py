"""Fitting driver: one bound-constrained minimization per dimension."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .events import EventData
from .kernelmath import KernelConfig
from .model import LinkSpec, RkhsParams
from .objective import (LinearDesign, ObjectiveConfig, default_grid_size, design_value_grad, unpack_parts)
from .optimizer import OptimOptions, minimize
from .precompute import build_matrices

FIT_OPTIONS = OptimOptions(max_iters=500, grad_tol=1e-6, f_tol=1e-10, history=10)


@dataclass
class FitResult:
    model: object
    objective: float
    diagnostics: list
    seconds: float
    settings: dict = field(default_factory=dict)


def initial_baselines(events: EventData) -> np.ndarray:
    """Poisson rates ``N_j / T``; ``1 / T`` for empty dimensions."""
    return np.maximum(events.counts, 1) / events.horizon


def column_scales(design) -> np.ndarray:
    """Diagonal preconditioner: ``1 / sqrt(diag)`` of each penalty Gram block, else 1."""
    scale = np.ones(design.size)
    for sl, mat in design.penalty:
        if mat is None:
            continue
        diag = np.diag(mat)
        s = np.ones(diag.size)
        pos = diag > 1e-12
        s[pos] = 1.0 / np.sqrt(diag[pos])
        scale[1:][sl] = s
    return scale


def minimize_design(design, x0, link: LinkSpec, opts: OptimOptions, scale=None):
    """Minimize one dimension's objective, optimizing over ``x / scale``."""
    scale = np.ones(design.size) if scale is None else scale

    def fun(z):
        val, grad = design_value_grad(design, z * scale, link)
        return val, grad * scale

    lower = [lo if lo is None else lo / s for (lo, _), s in zip(design.bounds(), scale)]
    opts = OptimOptions(opts.max_iters, opts.grad_tol, opts.f_tol, opts.history, lower)
    z, diag = minimize(fun, x0 / scale, opts)
    return z * scale, diag


@dataclass(eq=False)
class Whitening:
    """Change of variables ``alpha_jl = V diag(s)^(-1/2) z_jl`` with ``Kfull_jl = V diag(s) V'``.

    In ``z`` the penalty is ``eta/2 |z|^2`` and a unit step moves ``h_jl`` by
    one unit of RKHS norm, which bounds the curvature of the data term.
    Eigen-directions with ``s <= rel_tol * max(s)`` represent the zero function
    up to rounding and are dropped.
    """

    blocks: list  # (full slice of w, reduced slice of w, expand matrix, reduce matrix, penalized)
    full_size: int
    size: int
    grid: np.ndarray
    events: np.ndarray

    def expand(self, z) -> np.ndarray:
        x = np.zeros(self.full_size)
        x[0] = z[0]
        for full, red, up, _, _ in self.blocks:
            x[1:][full] = up @ z[1:][red]
        return x

    def reduce(self, x) -> np.ndarray:
        z = np.zeros(self.size)
        z[0] = x[0]
        for full, red, _, down, _ in self.blocks:
            z[1:][red] = down @ x[1:][full]
        return z

    def design(self, weight: float, eta: float) -> LinearDesign:
        pen = [(red, None) for _, red, _, _, penalized in self.blocks if penalized]
        return LinearDesign(self.grid, self.events, weight, eta, pen)


def whiten(design: LinearDesign, rel_tol: float = 1e-12) -> Whitening:
    penalized = {(sl.start, sl.stop): mat for sl, mat in design.penalty}
    width = design.size - 1
    cuts = sorted({0, width, *[e for key in penalized for e in key]})
    blocks, grid_cols, event_cols, pos = [], [], [], 0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mat = penalized.get((lo, hi))
        if mat is None:
            up = down = np.eye(hi - lo)
        else:
            s, V = np.linalg.eigh(mat)
            keep = s > rel_tol * max(s.max(), 0.0) if s.max() > 0 else np.zeros(s.size, bool)
            root = np.sqrt(s[keep])
            up = V[:, keep] / root
            down = V[:, keep].T * root[:, None]
        k = up.shape[1]
        blocks.append((slice(lo, hi), slice(pos, pos + k), up, down, mat is not None))
        grid_cols.append(design.grid[:, lo:hi] @ up)
        event_cols.append(design.events[:, lo:hi] @ up)
        pos += k
    return Whitening(blocks, design.size, pos + 1, np.hstack(grid_cols), np.hstack(event_cols))


def whitened(mats, j: int, design: LinearDesign) -> Whitening:
    """:func:`whiten` for dimension ``j`` of ``mats``, computed once and cached (it does not depend on eta)."""
    key = ("whiten", j)
    if key not in mats.cache:
        mats.cache[key] = whiten(design)
    return mats.cache[key]


def fit_rkhs(events: EventData, gamma: float, eta: float, omega: float = 100.0,
             criterion: str = "mle", support: float = 5.0, m: int | None = None,
             opts: OptimOptions = FIT_OPTIONS, matrices=None) -> FitResult:
    """Minimize the kernelized objective over ``(mu, alpha, b)``.

    Starts from ``mu_j = N_j / T``, ``alpha = 0``, ``b = 0``.
    """
    start = time.perf_counter()
    cfg = KernelConfig(gamma, support)
    link = LinkSpec(omega, criterion)
    m = default_grid_size(events) if m is None else m
    mats = matrices if matrices is not None else build_matrices(events, cfg, m)
    ocfg = ObjectiveConfig(link, eta, mats)
    mu0 = initial_baselines(events)
    xs, diags, total = [], [], 0.0
    for j, design in enumerate(ocfg.designs()):
        wh = whitened(mats, j, design)
        z0 = np.zeros(wh.size)
        z0[0] = mu0[j]
        z, diag = minimize_design(wh.design(design.weight, eta), z0, link, opts)
        x = wh.expand(z)
        xs.append(x)
        diags.append(diag)
        total += diag.value
    mu, alpha, b = unpack_parts(np.concatenate(xs), events.counts)
    settings = {"gamma": gamma, "eta": eta, "omega": omega, "criterion": criterion,
                "support": support, "m": m}
    model = RkhsParams(np.maximum(mu, 0.0), alpha, b, cfg, events, meta=dict(settings))
    return FitResult(model, total, diags, time.perf_counter() - start, settings)
