"""Intensity and compensator evaluation for any model seen as fixed curves.

A "curve model" exposes ``dims``, ``support``, ``mu`` and a vectorised
``interaction_at(j, l, lags)`` returning ``g_jl`` on ``[0, support]``.
Models whose curves are expensive to evaluate may also provide
``curve_table()``, returning a :class:`CurveTable` used in its place.
"""

from __future__ import annotations

import numpy as np

from .events import EventData
from .kernelmath import active_lags

LOG_FLOOR = 1e-10


class CurveTable:
    """Piecewise-linear tabulation of all ``g_jl`` on a uniform lag grid."""

    def __init__(self, model, n_points: int = 20001):
        self.dims = model.dims
        self.support = float(model.support)
        self.mu = np.asarray(model.mu, dtype=float)
        self.grid = np.linspace(0.0, self.support, n_points)
        self.values = np.array([[np.asarray(model.interaction_at(j, l, self.grid), dtype=float)
                                 for l in range(self.dims)] for j in range(self.dims)])

    def interaction_at(self, j, l, lags):
        return np.interp(lags, self.grid, self.values[j, l])


def curve_evaluator(model):
    table = getattr(model, "curve_table", None)
    return table() if callable(table) else model


def pre_intensities(model, events: EventData, points, tabulate: bool = True) -> np.ndarray:
    """Un-rectified intensities at ``points`` for every dimension, shape ``(d, n)``.

    Only events strictly before each point contribute.
    """
    points = np.asarray(points, dtype=float).reshape(-1)
    if tabulate:
        model = curve_evaluator(model)
    d = model.dims
    out = np.tile(np.asarray(model.mu, dtype=float)[:, None], (1, points.size))
    for l in range(d):
        pidx, _, lag = active_lags(points, events.times[l], model.support)
        if lag.size == 0:
            continue
        for j in range(d):
            vals = model.interaction_at(j, l, lag)
            out[j] += np.bincount(pidx, weights=vals, minlength=points.size)
    return out


def default_resolution(events: EventData) -> int:
    """Uniform node count used when scoring: at least 20 nodes per time unit."""
    n_max = int(events.counts.max()) if events.dims else 0
    return int(max(1000, 2 * n_max, np.ceil(20 * events.horizon)))


def integration_nodes(events: EventData, support: float, m: int) -> np.ndarray:
    """Uniform nodes merged with event times and support end points, clipped to ``[0, T]``."""
    T = events.horizon
    parts = [np.linspace(0.0, T, m + 1)]
    for t in events.times:
        parts.append(t)
        parts.append(t + support)
    nodes = np.unique(np.concatenate(parts))
    return nodes[(nodes >= 0) & (nodes <= T)]


def compensator(model, events: EventData, m: int | None = None):
    """Cumulative ReLU intensity ``Lambda_j`` at the integration nodes.

    Returns ``(nodes, Lambda)`` with ``Lambda`` of shape ``(d, len(nodes))``,
    integrated with the midpoint rule on each node interval. Intensities are
    smooth between nodes since every event and support end is a node.
    """
    m = default_resolution(events) if m is None else int(m)
    nodes = integration_nodes(events, model.support, m)
    mids = 0.5 * (nodes[1:] + nodes[:-1])
    lam = np.maximum(pre_intensities(model, events, mids), 0.0)
    cum = np.concatenate([np.zeros((lam.shape[0], 1)), np.cumsum(lam * np.diff(nodes), axis=1)], axis=1)
    return nodes, cum


def neg_log_likelihood(model, events: EventData, m: int | None = None, floor: float = LOG_FLOOR):
    """ReLU negative log-likelihood of ``events`` under ``model``.

    Intensities below ``floor`` at event times are floored inside the log;
    returns ``(value, n_floored)``.
    """
    nodes, cum = compensator(model, events, m)
    model_eval = curve_evaluator(model)
    total = float(cum[:, -1].sum())
    floored = 0
    for j, t in enumerate(events.times):
        if t.size == 0:
            continue
        lam = np.maximum(pre_intensities(model_eval, events, t)[j], 0.0)
        low = lam < floor
        floored += int(low.sum())
        total -= float(np.log(np.where(low, floor, lam)).sum())
    return total, floored


def rescaled_residuals(model, events: EventData, m: int | None = None) -> list[np.ndarray]:
    """Compensator increments between successive events of each dimension."""
    nodes, cum = compensator(model, events, m)
    out = []
    for j, t in enumerate(events.times):
        idx = np.searchsorted(nodes, t)
        at_events = np.concatenate([[0.0], cum[j, idx]])
        out.append(np.diff(at_events))
    return out
