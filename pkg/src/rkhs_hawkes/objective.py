"""Smoothed, discretized and regularized estimation objective with analytic gradient.

For each dimension ``j`` the objective is

    (T/M) 1' phi1(mu_j + G_j w_j) - 1' phi2(mu_j + X_j w_j) + penalty(w_j)

where ``G_j`` (grid rows) and ``X_j`` (event rows) are design matrices and
``w_j`` gathers every coefficient of dimension ``j``. The dimensions are
independent, so the total is a plain sum. For the kernel model
``G_j = [Q_j | B]``, ``X_j = [K_j | E_j]`` and the penalty is
``eta/2 sum_l alpha_jl' Kfull_jl alpha_jl``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ShapeError
from .events import EventData
from .intensity import neg_log_likelihood
from .model import (LinkSpec, RkhsParams, log_softplus, log_softplus_prime, softplus,
                    softplus_prime)
from .precompute import PrecomputedMatrices


def link_pair(link: LinkSpec):
    """``(phi1, phi2, phi1', phi2')`` for the chosen criterion."""
    w = link.omega
    if link.criterion == "mle":
        return (lambda x: softplus(x, w), lambda x: log_softplus(x, w),
                lambda x: softplus_prime(x, w), lambda x: log_softplus_prime(x, w))
    return (lambda x: softplus(x, w) ** 2, lambda x: 2.0 * softplus(x, w),
            lambda x: 2.0 * softplus(x, w) * softplus_prime(x, w),
            lambda x: 2.0 * softplus_prime(x, w))


@dataclass(eq=False)
class LinearDesign:
    """One dimension's problem: parameters are ``(mu, w)`` with ``w`` multiplying the designs.

    ``penalty`` lists ``(slice, matrix)`` pairs over ``w``; a ``None`` matrix
    means the identity. ``lower`` holds the lower bounds of ``w`` (``None``
    entries are unbounded); ``mu`` is always bounded below by 0.
    """

    grid: np.ndarray
    events: np.ndarray
    weight: float
    eta: float
    penalty: list
    lower: list | None = None

    @property
    def size(self) -> int:
        return 1 + self.grid.shape[1]

    def bounds(self):
        lower = self.lower or [None] * (self.size - 1)
        return [(0.0, None)] + [(lo, None) for lo in lower]

    def predict(self, x):
        mu, w = x[0], x[1:]
        return mu + self.grid @ w, mu + self.events @ w

    def backprop(self, dgrid, devents):
        g = np.empty(self.size)
        g[0] = dgrid.sum() + devents.sum()
        g[1:] = self.grid.T @ dgrid + self.events.T @ devents
        return g

    def penalty_value_grad(self, x):
        w = x[1:]
        val = 0.0
        grad = np.zeros(self.size)
        for sl, mat in self.penalty:
            v = w[sl]
            kv = v if mat is None else mat @ v
            val += 0.5 * self.eta * float(v @ kv)
            grad[1:][sl] += self.eta * kv
        return val, grad


def design_value_grad(design, x, link: LinkSpec, need_grad: bool = True):
    phi1, phi2, dphi1, dphi2 = link_pair(link)
    on_grid, on_events = design.predict(x)
    pen, pen_grad = design.penalty_value_grad(x)
    val = design.weight * float(phi1(on_grid).sum()) - float(phi2(on_events).sum()) + pen
    if not need_grad:
        return val, None
    grad = design.backprop(design.weight * dphi1(on_grid), -dphi2(on_events)) + pen_grad
    return val, grad


def rkhs_designs(mats: PrecomputedMatrices, eta: float) -> list[LinearDesign]:
    d = mats.dims
    designs = []
    for j in range(d):
        n = int(mats.counts[j]) + 1
        penalty = [(slice(l * n, (l + 1) * n), mats.Kfull[j][l]) for l in range(d)]
        designs.append(LinearDesign(
            grid=np.hstack([mats.Q[j], mats.B]),
            events=np.hstack([mats.K[j], mats.E[j]]),
            weight=mats.horizon / mats.m, eta=eta, penalty=penalty))
    return designs


def pack_dimension(theta: RkhsParams, j: int) -> np.ndarray:
    return np.concatenate([[theta.mu[j]], *theta.alpha[j], theta.b[j]])


def pack(theta: RkhsParams) -> np.ndarray:
    """All parameters, dimension after dimension: ``(mu_j, alpha_j1..alpha_jd, b_j.)``."""
    return np.concatenate([pack_dimension(theta, j) for j in range(theta.dims)])


def dimension_sizes(counts) -> list[int]:
    d = len(counts)
    return [1 + d * (int(n) + 1) + d for n in counts]


def unpack_parts(x, counts):
    """Split a packed vector into ``(mu, alpha, b)`` arrays."""
    d = len(counts)
    x = np.asarray(x, dtype=float)
    if x.size != sum(dimension_sizes(counts)):
        raise ShapeError(f"vector of length {x.size} does not match event counts {list(counts)}")
    mu, alpha, b = np.zeros(d), [], np.zeros((d, d))
    start = 0
    for j, n in enumerate(counts):
        n = int(n) + 1
        mu[j] = x[start]
        alpha.append([x[start + 1 + l * n:start + 1 + (l + 1) * n].copy() for l in range(d)])
        b[j] = x[start + 1 + d * n:start + 1 + d * n + d]
        start += 1 + d * n + d
    return mu, alpha, b


def unpack(x, template: RkhsParams) -> RkhsParams:
    mu, alpha, b = unpack_parts(x, template.anchor_events.counts)
    return RkhsParams(mu, alpha, b, template.cfg, template.anchor_events)


@dataclass(eq=False)
class ObjectiveConfig:
    link: LinkSpec
    eta: float
    matrices: PrecomputedMatrices

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be > 0")

    @property
    def m(self) -> int:
        return self.matrices.m

    def designs(self) -> list[LinearDesign]:
        if not hasattr(self, "_designs"):
            self._designs = rkhs_designs(self.matrices, self.eta)
        return self._designs


class Gradient(NamedTuple):
    mu: np.ndarray
    alpha: list
    b: np.ndarray


def _check(theta: RkhsParams, cfg: ObjectiveConfig):
    mats = cfg.matrices
    if theta.dims != mats.dims or not np.array_equal(theta.anchor_events.counts, mats.counts):
        raise ShapeError("parameters and matrices come from different event sets")
    if theta.cfg != mats.cfg:
        raise ShapeError("parameters and matrices use different kernel settings")


def objective_value(theta: RkhsParams, cfg: ObjectiveConfig) -> float:
    _check(theta, cfg)
    return float(sum(design_value_grad(des, pack_dimension(theta, j), cfg.link, need_grad=False)[0]
                     for j, des in enumerate(cfg.designs())))


def objective_gradient(theta: RkhsParams, cfg: ObjectiveConfig) -> Gradient:
    _check(theta, cfg)
    parts = [design_value_grad(des, pack_dimension(theta, j), cfg.link)[1]
             for j, des in enumerate(cfg.designs())]
    mu, alpha, b = unpack_parts(np.concatenate(parts), theta.anchor_events.counts)
    return Gradient(mu, alpha, b)


def value_and_grad(x, cfg: ObjectiveConfig):
    """Objective and gradient over the packed vector of :func:`pack`."""
    designs = cfg.designs()
    total, grads, start = 0.0, [], 0
    for des in designs:
        v, g = design_value_grad(des, x[start:start + des.size], cfg.link)
        total += v
        grads.append(g)
        start += des.size
    return total, np.concatenate(grads)


def default_grid_size(events: EventData) -> int:
    """``max(1000, 2 max_j N_j)`` Riemann nodes."""
    return int(max(1000, 2 * int(events.counts.max(initial=0))))


def exact_neg_log_likelihood(model, events: EventData, m_score: int | None = None):
    """ReLU negative log-likelihood of ``events`` with the model's curves held fixed.

    Returns ``(value, n_floored)`` where ``n_floored`` counts event intensities
    floored at 1e-10 inside the log.
    """
    return neg_log_likelihood(model, events, m_score)
