"""Ground-truth nonlinear Hawkes models and exact simulation by thinning.

Random numbers come from numpy's PCG64 bit generator seeded with the given
integer, so a seed identifies a trajectory on every platform.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import stats

from .curves import build_curve
from .errors import ConfigError, DomainError, SimulationError
from .events import EventData
from .intensity import rescaled_residuals

SUP_GRID = 10_000
SUP_SAFETY = 1.05
BUILTIN_MODELS = ("paper3d",)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


class GroundTruthModel:
    """Baselines ``mu`` and interaction curves ``kernels[j][l]`` supported on ``[0, support]``.

    ``sup_bounds[j, l]`` must dominate the positive part of ``g_jl``; when
    omitted it is set to 1.05 times the maximum over a 10 000 point grid.
    """

    def __init__(self, mu, kernels, support, sup_bounds=None, name=None):
        # how to rebuild the model in another process (curves are closures)
        self.source = None
        self.mu = np.asarray(mu, dtype=float).reshape(-1)
        self.dims = self.mu.size
        self.support = float(support)
        self.name = name
        if self.support <= 0:
            raise ConfigError("support must be positive")
        if np.any(self.mu < 0):
            raise ConfigError("baselines must be nonnegative")
        if len(kernels) != self.dims or any(len(row) != self.dims for row in kernels):
            raise ConfigError(f"kernels must be a {self.dims}x{self.dims} table")
        self.kernels = [list(row) for row in kernels]
        grid = np.linspace(0.0, self.support, SUP_GRID)
        grid_max = np.array([[max(0.0, float(np.max(g(grid)))) for g in row] for row in self.kernels])
        if sup_bounds is None:
            self.sup_bounds = SUP_SAFETY * grid_max
        else:
            self.sup_bounds = np.asarray(sup_bounds, dtype=float)
            if self.sup_bounds.shape != (self.dims, self.dims):
                raise ConfigError("sup_bounds has the wrong shape")
            if np.any(self.sup_bounds < grid_max):
                j, l = np.argwhere(self.sup_bounds < grid_max)[0]
                raise ConfigError(f"sup bound of g[{j}][{l}] is below its grid maximum {grid_max[j, l]:.6g}")

    def interaction_at(self, j, l, t):
        t = np.asarray(t, dtype=float)
        if np.any((t < 0) | (t > self.support)):
            raise DomainError(f"lag outside [0, {self.support}]")
        return self.kernels[j][l](t)

    def __reduce__(self):
        if self.source is None:
            raise TypeError("only built-in or spec-defined ground truths can be pickled")
        kind, value = self.source
        if kind == "builtin":
            return builtin_kernels, (value,)
        return GroundTruthModel.from_spec, (value,)

    @classmethod
    def from_spec(cls, spec: dict) -> "GroundTruthModel":
        try:
            kernels = [[build_curve(c) for c in row] for row in spec["kernels"]]
            model = cls(spec["mu"], kernels, spec["support"], spec.get("sup_bounds"), spec.get("name"))
        except KeyError as exc:
            raise ConfigError(f"model spec is missing {exc}") from None
        model.source = ("spec", spec)
        return model

    @classmethod
    def from_file(cls, path) -> "GroundTruthModel":
        try:
            spec = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_spec(spec)


def _refractory(decay):
    def g(t):
        t = np.asarray(t, dtype=float)
        return np.where(t <= 0.5, 8 * t * t - 1, np.exp(-decay * (t - 0.5)))
    return g


def paper3d_kernels():
    """The nine interaction curves of the three-neuron benchmark."""
    g11 = _refractory(2.5)
    g22 = g33 = _refractory(1.0)

    def g12(t):
        return np.exp(-10 * (np.asarray(t, dtype=float) - 1) ** 2)

    def g13(t):
        t = np.asarray(t, dtype=float)
        return -0.6 * np.exp(-3 * t * t) - 0.4 * np.exp(-3 * (t - 1) ** 2)

    def g21(t):
        return np.power(2.0, -5 * np.asarray(t, dtype=float))

    def g23(t):
        return -np.exp(-2 * (np.asarray(t, dtype=float) - 3) ** 2)

    def g31(t):
        return -np.exp(-5 * (np.asarray(t, dtype=float) - 2) ** 2)

    def g32(t):
        t = np.asarray(t, dtype=float)
        return (1 + np.cos(np.pi * t)) * np.exp(-t) / 2

    return [[g11, g12, g13], [g21, g22, g23], [g31, g32, g33]]


def builtin_kernels(name: str) -> GroundTruthModel:
    """Named ground truth, or a path to a JSON model spec."""
    if name == "paper3d":
        model = GroundTruthModel([0.05, 0.05, 0.05], paper3d_kernels(), 5.0, name="paper3d")
        model.source = ("builtin", name)
        return model
    if Path(name).suffix == ".json" and Path(name).exists():
        return GroundTruthModel.from_file(name)
    raise ConfigError(f"unknown model {name!r}; valid models: {', '.join(BUILTIN_MODELS)} or a JSON spec file")


def paper3d_spec() -> dict:
    return json.loads(resources.files("rkhs_hawkes").joinpath("data/paper3d.json").read_text())


def simulate_thinning(model: GroundTruthModel, horizon: float, burn_in: float | None = None,
                      seed: int = 0) -> EventData:
    """Simulate on ``[-burn_in, horizon]`` and keep the events in ``(0, horizon]``.

    The dominating rate of dimension ``j`` is ``mu_j + sum_l n_l sup g+_jl``
    where ``n_l`` counts events of ``l`` that can still act; it is refreshed
    after every candidate. A candidate whose intensity exceeds it raises
    :class:`SimulationError`.
    """
    if not horizon > 0:
        raise ConfigError("horizon must be positive")
    A = model.support
    burn_in = 10 * A if burn_in is None else float(burn_in)
    rng = _rng(seed)
    d = model.dims
    mu = model.mu
    sup = model.sup_bounds
    kernels = model.kernels
    history: list[list[float]] = [[] for _ in range(d)]
    recent: list[np.ndarray] = [np.zeros(0) for _ in range(d)]
    t = -burn_in
    while True:
        recent = [r[r >= t - A] for r in recent]
        counts = np.array([r.size for r in recent], dtype=float)
        bound = np.maximum(mu + sup @ counts, 0.0)
        total = float(bound.sum())
        if total <= 0:
            break
        t = t + rng.exponential(1.0 / total)
        if t > horizon:
            break
        lam = mu.copy()
        for l in range(d):
            lags = t - recent[l]
            lags = lags[(lags > 0) & (lags <= A)]
            if lags.size:
                for j in range(d):
                    lam[j] += float(kernels[j][l](lags).sum())
        lam = np.maximum(lam, 0.0)
        if np.any(lam > bound):
            j = int(np.argmax(lam - bound))
            raise SimulationError(f"intensity {lam[j]:.6g} of dimension {j} exceeds its bound {bound[j]:.6g} at t={t:.6g}")
        u = rng.random() * total
        cum = np.cumsum(lam)
        if u < cum[-1]:
            k = int(np.searchsorted(cum, u, side="right"))
            history[k].append(t)
            recent[k] = np.append(recent[k], t)
    kept = [np.array([x for x in h if x > 0]) for h in history]
    return EventData(kept, horizon)


def time_rescaling_residuals(events: EventData, model, m: int | None = None) -> list[np.ndarray]:
    """Compensator increments between successive events; unit exponential under the true model."""
    return rescaled_residuals(model, events, m)


def ks_exponential_pvalue(residuals) -> float:
    """KS p-value of pooled residuals against the unit exponential law."""
    pooled = np.concatenate([np.asarray(r) for r in residuals])
    if pooled.size == 0:
        return 1.0
    return float(stats.kstest(pooled, "expon").pvalue)
