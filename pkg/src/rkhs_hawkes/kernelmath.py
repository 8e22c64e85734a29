"""Gaussian reproducing kernel and the closed-form integrals built on it.

Every aggregate here sums over "active" events of one dimension: an event
``T_i`` is active at ``x`` when ``0 < x - T_i <= A`` (open at 0, closed at A).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import erf, erfc

from .errors import ValidationError

SQRT_PI = np.sqrt(np.pi)


@dataclass(frozen=True)
class KernelConfig:
    gamma: float
    support: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValidationError(f"gamma must be > 0, got {self.gamma}")
        if not self.support > 0:
            raise ValidationError(f"support must be > 0, got {self.support}")


def gauss_kernel(x, y, cfg: KernelConfig):
    d = np.subtract(x, y)
    return np.exp(-cfg.gamma * d * d)


def erf_gamma(x, gamma: float):
    """``gamma**-0.5 * erf(sqrt(gamma) * x)``; its derivative is ``2/sqrt(pi) * exp(-gamma x^2)``."""
    s = np.sqrt(gamma)
    return erf(s * np.asarray(x, dtype=float)) / s


def erf_gamma_diff(a, b, gamma: float):
    """``erf_gamma(a) - erf_gamma(b)`` without cancellation when ``a`` and ``b`` lie in the same tail."""
    s = np.sqrt(gamma)
    a, b = np.broadcast_arrays(s * np.asarray(a, dtype=float), s * np.asarray(b, dtype=float))
    shape = a.shape
    a, b = a.reshape(-1), b.reshape(-1)
    out = erf(a) - erf(b)
    pos = (a > 0) & (b > 0)
    neg = (a < 0) & (b < 0)
    out[pos] = erfc(b[pos]) - erfc(a[pos])
    out[neg] = erfc(-a[neg]) - erfc(-b[neg])
    return (out / s).reshape(shape)


def G_gamma(x, gamma: float):
    """Antiderivative of :func:`erf_gamma` vanishing at 0."""
    x = np.asarray(x, dtype=float)
    return x * erf_gamma(x, gamma) + (np.exp(-gamma * x * x) - 1.0) / (gamma * SQRT_PI)


def active_lags(points, events, support: float):
    """All pairs ``(point index, event index, lag)`` with ``0 < lag <= support``.

    Pairs come out grouped by point index, in ascending order.
    """
    points = np.asarray(points, dtype=float).reshape(-1)
    events = np.asarray(events, dtype=float).reshape(-1)
    if points.size == 0 or events.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty.copy(), np.zeros(0)
    # widened window, then filtered with the exact lag test below
    pad = 1e-9 * max(1.0, support, float(np.abs(events).max()))
    lo = np.searchsorted(events, points - support - pad, side="left")
    hi = np.searchsorted(events, points + pad, side="right")
    n = np.maximum(hi - lo, 0)
    total = int(n.sum())
    pidx = np.repeat(np.arange(points.size), n)
    starts = np.repeat(lo - np.cumsum(n) + n, n)
    eidx = starts + np.arange(total)
    lag = points[pidx] - events[eidx]
    keep = (lag > 0) & (lag <= support)
    return pidx[keep], eidx[keep], lag[keep]


def active_counts(points, events, support: float) -> np.ndarray:
    """Number of active events at each point."""
    pidx, _, _ = active_lags(points, events, support)
    return np.bincount(pidx, minlength=np.size(points)).astype(float)


def _incidence(pidx, n_points) -> sp.csr_matrix:
    data = np.ones(pidx.size)
    return sp.csr_matrix((data, (pidx, np.arange(pidx.size))), shape=(n_points, pidx.size))


def gaussian_sum_matrix(x, centers, weights_incidence, gamma, chunk=4_000_000):
    """``out[a, b] = sum_p W[b, p] exp(-gamma (x_a - c_p)^2)`` for a sparse ``W``."""
    x = np.asarray(x, dtype=float)
    n_out = weights_incidence.shape[0]
    out = np.zeros((x.size, n_out))
    if x.size == 0 or centers.size == 0:
        return out
    step = max(1, chunk // centers.size)
    for start in range(0, x.size, step):
        block = x[start:start + step, None] - centers[None, :]
        out[start:start + step] = (weights_incidence @ np.exp(-gamma * block * block).T).T
    return out


def s_matrix(xs, ys, events_ell, cfg: KernelConfig) -> np.ndarray:
    """``s_l(x_a, y_b)`` for all pairs of points."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    px, _, lx = active_lags(xs, events_ell, cfg.support)
    py, _, ly = active_lags(ys, events_ell, cfg.support)
    if lx.size == 0 or ly.size == 0:
        return np.zeros((xs.size, ys.size))
    # inner[a_pair, b] = sum over active pairs at y_b of k(lag_a, lag_b)
    inner = gaussian_sum_matrix(lx, ly, _incidence(py, ys.size), cfg.gamma)
    return _incidence(px, xs.size) @ inner


def s_ell(x, y, events_ell, cfg: KernelConfig) -> float:
    return float(s_matrix([x], [y], events_ell, cfg)[0, 0])


def _clipped_reach(horizon, events_ell, support):
    """``max(0, min(T - T_v, A))`` for every event."""
    return np.clip(np.minimum(horizon - np.asarray(events_ell, dtype=float), support), 0.0, None)


def r_ell_at(x, horizon: float, events_ell, cfg: KernelConfig):
    """Pointwise value of ``r_l = sum_v int_0^T k(., t - T_v) 1{0 < t - T_v <= A} dt``."""
    x = np.asarray(x, dtype=float)
    reach = _clipped_reach(horizon, events_ell, cfg.support)
    if reach.size == 0:
        return np.zeros_like(x)
    vals, counts = np.unique(reach, return_counts=True)
    flat = x.reshape(-1)
    total = np.zeros(flat.size)
    for c, n in zip(vals, counts):
        total += n * erf_gamma_diff(c - flat, -flat, cfg.gamma)
    out = 0.5 * SQRT_PI * total
    return out.reshape(x.shape) if x.ndim else float(out[0])


def int_s(x, horizon: float, events_ell, cfg: KernelConfig):
    """``int_0^T s_l(x, t) dt``, vectorised over ``x``."""
    x = np.asarray(x, dtype=float)
    flat = np.atleast_1d(x).reshape(-1)
    pidx, _, lag = active_lags(flat, events_ell, cfg.support)
    vals = r_ell_at(lag, horizon, events_ell, cfg) if lag.size else np.zeros(0)
    out = np.bincount(pidx, weights=vals, minlength=flat.size)
    return out.reshape(x.shape) if x.ndim else float(out[0])


def double_int_s(horizon: float, events_ell, cfg: KernelConfig) -> float:
    """``int_0^T int_0^T s_l(t, t') dt dt'``."""
    reach = _clipped_reach(horizon, events_ell, cfg.support)
    if reach.size == 0:
        return 0.0
    vals, counts = np.unique(reach, return_counts=True)
    n = float(reach.size)
    first = 2.0 * n * float(np.dot(counts, G_gamma(vals, cfg.gamma)))
    cross = float(counts @ G_gamma(vals[:, None] - vals[None, :], cfg.gamma) @ counts)
    return 0.5 * SQRT_PI * (first - cross)


def q_ujl_at(x, t_u: float, events_ell, cfg: KernelConfig):
    """``sum_v k(x, t_u - T_v) 1{0 < t_u - T_v <= A}``, vectorised over ``x``."""
    _, _, lag = active_lags([t_u], events_ell, cfg.support)
    x = np.asarray(x, dtype=float)
    out = gauss_kernel(x[..., None], lag, cfg).sum(axis=-1)
    return out if x.ndim else float(out)
