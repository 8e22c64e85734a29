"""Competitor models: interaction functions expanded on small parametric feature maps.

Three kinds are available:

* ``gaussian_basis``: ``g(t) = sum_u a_u exp(-gamma (t - c_u)^2)`` with centers
  ``c_u = (u - 1) A / (U - 1)`` and ``a >= 0``;
* ``bernstein``: ``g(t) = sum_u a_u exp(-gamma u t)``;
* ``exponential``: ``g(t) = a exp(-beta t)`` with one decay ``beta`` per pair,
  fitted jointly with ``a`` and started at ``gamma``.

All are fitted with the same smoothed, discretized objective as the kernel
model, with a ridge penalty ``eta/2 |a|^2`` on the coefficients.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError
from .events import EventData
from .fit import FIT_OPTIONS, FitResult, initial_baselines, minimize_design
from .intensity import CurveTable
from .kernelmath import active_lags
from .model import MODEL_FORMAT, MODEL_VERSION, LinkSpec
from .objective import LinearDesign, default_grid_size
from .optimizer import OptimOptions
from .precompute import riemann_grid

KINDS = ("exponential", "gaussian_basis", "bernstein")
DEFAULT_BASIS_SIZE = 10


def basis_centers(u: int, support: float) -> np.ndarray:
    if u == 1:
        return np.zeros(1)
    return np.arange(u) * (support / (u - 1))


def basis_values(kind: str, u: int, gamma: float, support: float, t) -> np.ndarray:
    """Feature values, shape ``t.shape + (U,)``, for the linear kinds."""
    t = np.asarray(t, dtype=float)[..., None]
    if kind == "gaussian_basis":
        return np.exp(-gamma * (t - basis_centers(u, support)) ** 2)
    if kind == "bernstein":
        return np.exp(-gamma * np.arange(1, u + 1) * t)
    raise ValidationError(f"no fixed basis for kind {kind!r}")


@dataclass(eq=False)
class FeatureBasisModel:
    """Fitted competitor. ``coeffs`` has shape ``(d, d, U)``; ``beta`` is ``(d, d)`` for exponential."""

    kind: str
    u: int
    gamma: float
    coeffs: np.ndarray
    mu: np.ndarray
    support: float
    beta: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    _table: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"kind must be one of {', '.join(KINDS)}, got {self.kind!r}")
        self.mu = np.asarray(self.mu, dtype=float).reshape(-1)
        d = self.mu.size
        self.coeffs = np.asarray(self.coeffs, dtype=float).reshape(d, d, self.u)
        if self.kind == "exponential":
            if self.u != 1:
                raise ValidationError("the exponential model has one coefficient per pair")
            self.beta = np.asarray(self.beta, dtype=float).reshape(d, d)
        if self.nonneg and np.any(self.coeffs < 0):
            raise ValidationError("gaussian_basis coefficients must be nonnegative")
        if not (self.gamma > 0 and self.support > 0):
            raise ValidationError("gamma and support must be positive")

    @property
    def nonneg(self) -> bool:
        return self.kind == "gaussian_basis"

    @property
    def dims(self) -> int:
        return self.mu.size

    def interaction_at(self, j, l, t):
        t = np.asarray(t, dtype=float)
        if np.any((t < 0) | (t > self.support)):
            raise DomainError(f"lag outside [0, {self.support}]")
        if self.kind == "exponential":
            return self.coeffs[j, l, 0] * np.exp(-self.beta[j, l] * t)
        return basis_values(self.kind, self.u, self.gamma, self.support, t) @ self.coeffs[j, l]

    def curve_table(self):
        if self._table is None:
            self._table = CurveTable(self)
        return self._table

    def to_dict(self) -> dict:
        out = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": self.kind,
            "u": self.u,
            "gamma": self.gamma,
            "support": self.support,
            "mu": self.mu.tolist(),
            "coeffs": self.coeffs.tolist(),
            "meta": self.meta,
        }
        if self.beta is not None:
            out["beta"] = self.beta.tolist()
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "FeatureBasisModel":
        return cls(payload["kind"], int(payload["u"]), float(payload["gamma"]), payload["coeffs"],
                   payload["mu"], float(payload["support"]), payload.get("beta"), payload.get("meta", {}))


def basis_interaction_at(model: FeatureBasisModel, j: int, l: int, t):
    return model.interaction_at(j, l, t)


def feature_matrix(points, events: EventData, kind: str, u: int, gamma: float, support: float) -> np.ndarray:
    """``F[n, l U + u] = sum_i phi_u(x_n - T_i^(l))`` over events of ``l`` active at ``x_n``."""
    points = np.asarray(points, dtype=float)
    d = events.dims
    out = np.zeros((points.size, d * u))
    for l in range(d):
        pidx, _, lag = active_lags(points, events.times[l], support)
        vals = basis_values(kind, u, gamma, support, lag)
        for k in range(u):
            out[:, l * u + k] = np.bincount(pidx, weights=vals[:, k], minlength=points.size)
    return out


@dataclass(eq=False)
class ExponentialDesign:
    """Dimension ``j`` of the exponential model; parameters are ``(mu, a_j., beta_j.)``."""

    grid_pairs: list
    event_pairs: list
    n_grid: int
    n_events: int
    weight: float
    eta: float

    @property
    def dims(self) -> int:
        return len(self.grid_pairs)

    @property
    def size(self) -> int:
        return 1 + 2 * self.dims

    def bounds(self):
        d = self.dims
        return [(0.0, None)] + [(None, None)] * d + [(0.0, None)] * d

    def _apply(self, pairs, n, a, beta):
        out = np.zeros(n)
        for l, (pidx, lag) in enumerate(pairs):
            out += np.bincount(pidx, weights=a[l] * np.exp(-beta[l] * lag), minlength=n)
        return out

    def predict(self, x):
        # backprop needs the point of the last prediction
        self._x = np.array(x, dtype=float)
        d = self.dims
        a, beta = x[1:1 + d], x[1 + d:]
        return (x[0] + self._apply(self.grid_pairs, self.n_grid, a, beta),
                x[0] + self._apply(self.event_pairs, self.n_events, a, beta))

    def backprop(self, dgrid, devents):
        d = self.dims
        g = np.zeros(self.size)
        g[0] = dgrid.sum() + devents.sum()
        a, beta = self._x[1:1 + d], self._x[1 + d:]
        for pairs, dout in ((self.grid_pairs, dgrid), (self.event_pairs, devents)):
            for l, (pidx, lag) in enumerate(pairs):
                e = np.exp(-beta[l] * lag) * dout[pidx]
                g[1 + l] += e.sum()
                g[1 + d + l] -= a[l] * (lag * e).sum()
        return g

    def penalty_value_grad(self, x):
        a = np.asarray(x, dtype=float)[1:1 + self.dims]
        grad = np.zeros(self.size)
        grad[1:1 + self.dims] = self.eta * a
        return 0.5 * self.eta * float(a @ a), grad


def _lag_pairs(points, events: EventData, support: float) -> list:
    pairs = []
    for src in events.times:
        pidx, _, lag = active_lags(points, src, support)
        pairs.append((pidx, lag))
    return pairs


def fit_basis(events: EventData, kind: str, u: int = DEFAULT_BASIS_SIZE, gamma: float = 1.0, eta: float = 1.0,
              link: LinkSpec = LinkSpec(), m: int | None = None, support: float = 5.0,
              opts: OptimOptions = FIT_OPTIONS) -> FitResult:
    """Fit a competitor model, one dimension at a time, from ``mu = N / T`` and zero coefficients."""
    if kind not in KINDS:
        raise ValidationError(f"kind must be one of {', '.join(KINDS)}, got {kind!r}")
    if not (gamma > 0 and eta > 0):
        raise ValidationError("gamma and eta must be positive")
    start = time.perf_counter()
    u = 1 if kind == "exponential" else int(u)
    if u < 1:
        raise ValidationError("basis size must be >= 1")
    d = events.dims
    T = events.horizon
    m = default_grid_size(events) if m is None else int(m)
    grid = riemann_grid(T, m)
    mu0 = initial_baselines(events)
    mu = np.zeros(d)
    coeffs = np.zeros((d, d, u))
    beta = np.zeros((d, d)) if kind == "exponential" else None
    diags, total = [], 0.0
    if kind == "exponential":
        grid_pairs = _lag_pairs(grid, events, support)
    else:
        grid_feats = feature_matrix(grid, events, kind, u, gamma, support)
    for j in range(d):
        tgt = events.times[j]
        if kind == "exponential":
            design = ExponentialDesign(grid_pairs, _lag_pairs(tgt, events, support), m, tgt.size, T / m, eta)
            x0 = np.concatenate([[mu0[j]], np.zeros(d), np.full(d, gamma)])
        else:
            lower = [0.0] * (d * u) if kind == "gaussian_basis" else None
            design = LinearDesign(grid_feats, feature_matrix(tgt, events, kind, u, gamma, support),
                                  T / m, eta, [(slice(None), None)], lower)
            x0 = np.concatenate([[mu0[j]], np.zeros(d * u)])
        x, diag = minimize_design(design, x0, link, opts)
        diags.append(diag)
        total += diag.value
        mu[j] = max(x[0], 0.0)
        coeffs[j] = x[1:1 + d * u].reshape(d, u)
        if kind == "exponential":
            beta[j] = x[1 + d:]
    if kind == "gaussian_basis":
        coeffs = np.maximum(coeffs, 0.0)
    settings = {"kind": kind, "u": u, "gamma": gamma, "eta": eta, "omega": link.omega,
                "criterion": link.criterion, "support": support, "m": m}
    model = FeatureBasisModel(kind, u, gamma, coeffs, mu, support, beta, meta=dict(settings))
    return FitResult(model, total, diags, time.perf_counter() - start, settings)
