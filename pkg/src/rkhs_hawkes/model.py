"""Representer-form parameters, link functions and the fitted interaction curves."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import DomainError, FormatError, ShapeError, ValidationError
from .events import EventData
from .intensity import CurveTable, pre_intensities
from .kernelmath import KernelConfig, active_lags, r_ell_at

MODEL_FORMAT = "rkhs-hawkes-model"
MODEL_VERSION = 1


def softplus(x, omega: float):
    """``log(1 + exp(omega x)) / omega``, overflow-free and never below ``max(0, x)``."""
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-omega * np.abs(x))) / omega


def softplus_prime(x, omega: float):
    return expit(omega * np.asarray(x, dtype=float))


def log_softplus(x, omega: float):
    """``log(softplus(x))`` without underflow for very negative ``omega x``."""
    z = omega * np.asarray(x, dtype=float)
    out = np.empty_like(z)
    deep = z < -30.0
    # log(log1p(e^z)) = z - e^z / 2 + O(e^2z) once e^z is negligible
    out[deep] = z[deep] - 0.5 * np.exp(z[deep])
    out[~deep] = np.log(np.logaddexp(0.0, z[~deep]))
    return out - np.log(omega)


def log_softplus_prime(x, omega: float):
    """Derivative of :func:`log_softplus`, i.e. ``sigmoid(omega x) / softplus(x)``."""
    z = omega * np.asarray(x, dtype=float)
    out = np.empty_like(z)
    deep = z < -30.0
    out[deep] = omega * (1.0 - 0.5 * np.exp(z[deep]))
    zz = z[~deep]
    out[~deep] = omega * expit(zz) / np.logaddexp(0.0, zz)
    return out


@dataclass(frozen=True)
class LinkSpec:
    omega: float = 100.0
    criterion: str = "mle"

    def __post_init__(self):
        if not self.omega > 0:
            raise ValidationError("omega must be > 0")
        if self.criterion not in ("mle", "ls"):
            raise ValidationError(f"criterion must be 'mle' or 'ls', got {self.criterion!r}")


@dataclass(eq=False)
class RkhsParams:
    """``mu``, per-pair representer coefficients ``alpha[j][l]`` and offsets ``b``.

    ``alpha[j][l][0]`` multiplies ``r_l``; ``alpha[j][l][u]`` multiplies
    ``q_ujl``, both anchored on ``anchor_events``.
    """

    mu: np.ndarray
    alpha: list
    b: np.ndarray
    cfg: KernelConfig
    anchor_events: EventData
    meta: dict = field(default_factory=dict)
    _centers: dict = field(default_factory=dict, repr=False)

    kind = "rkhs"

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float).reshape(-1)
        d = self.anchor_events.dims
        self.b = np.asarray(self.b, dtype=float).reshape(d, d)
        if self.mu.size != d:
            raise ShapeError(f"mu has {self.mu.size} entries for {d} dimensions")
        if np.any(self.mu < 0):
            raise ValidationError("baselines must be nonnegative")
        if len(self.alpha) != d or any(len(row) != d for row in self.alpha):
            raise ShapeError("alpha must be a d x d table of vectors")
        counts = self.anchor_events.counts
        self.alpha = [[np.asarray(a, dtype=float).reshape(-1) for a in row] for row in self.alpha]
        for j in range(d):
            for l in range(d):
                if self.alpha[j][l].size != counts[j] + 1:
                    raise ShapeError(f"alpha[{j}][{l}] must have {counts[j] + 1} entries")

    @property
    def dims(self) -> int:
        return self.anchor_events.dims

    @property
    def support(self) -> float:
        return self.cfg.support

    @classmethod
    def zeros(cls, events: EventData, cfg: KernelConfig, mu=None) -> "RkhsParams":
        d = events.dims
        mu = np.zeros(d) if mu is None else mu
        alpha = [[np.zeros(int(n) + 1) for _ in range(d)] for n in events.counts]
        return cls(mu, alpha, np.zeros((d, d)), cfg, events)

    def _anchor_centers(self, j, l):
        key = (j, l)
        if key not in self._centers:
            ev = self.anchor_events
            uidx, _, lag = active_lags(ev.times[j], ev.times[l], self.cfg.support)
            self._centers[key] = (uidx, lag)
        return self._centers[key]

    def functional_part(self, j, l, t):
        """``h_jl(t) = alpha_0 r_l(t) + sum_u alpha_u q_ujl(t)``."""
        t = np.asarray(t, dtype=float)
        flat = t.reshape(-1)
        a = self.alpha[j][l]
        ev = self.anchor_events
        out = a[0] * r_ell_at(flat, ev.horizon, ev.times[l], self.cfg) if a[0] != 0 else np.zeros(flat.size)
        uidx, lag = self._anchor_centers(j, l)
        w = a[1:][uidx]
        nz = w != 0
        w, lag = w[nz], lag[nz]
        if w.size:
            step = max(1, 2_000_000 // w.size)
            for s in range(0, flat.size, step):
                diff = flat[s:s + step, None] - lag[None, :]
                out[s:s + step] += np.exp(-self.cfg.gamma * diff * diff) @ w
        return out.reshape(t.shape)

    def interaction_at(self, j, l, t):
        t = np.asarray(t, dtype=float)
        if np.any((t < 0) | (t > self.cfg.support)):
            raise DomainError(f"lag outside [0, {self.cfg.support}]")
        return self.functional_part(j, l, t) + self.b[j, l]

    def curve_table(self):
        if "_table" not in self._centers:
            self._centers["_table"] = CurveTable(self)
        return self._centers["_table"]

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": self.kind,
            "gamma": self.cfg.gamma,
            "support": self.cfg.support,
            "mu": self.mu.tolist(),
            "b": self.b.tolist(),
            "alpha": [[a.tolist() for a in row] for row in self.alpha],
            "anchor_events": self.anchor_events.to_dict(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RkhsParams":
        cfg = KernelConfig(payload["gamma"], payload["support"])
        events = EventData.from_dict(payload["anchor_events"])
        return cls(payload["mu"], payload["alpha"], payload["b"], cfg, events, meta=payload.get("meta", {}))


def pre_intensity(theta: RkhsParams, events: EventData, j: int, t):
    """Argument of the link function for dimension ``j`` at time(s) ``t`` (strict past)."""
    t = np.asarray(t, dtype=float)
    return pre_intensities(theta, events, t.reshape(-1), tabulate=False)[j].reshape(t.shape)


def intensity(theta: RkhsParams, events: EventData, j: int, t):
    return np.maximum(pre_intensity(theta, events, j, t), 0.0)


def interaction_at(theta, j: int, l: int, t):
    """Fitted ``g_jl(t) = h_jl(t) + b_jl`` for ``t`` in ``[0, A]``."""
    return theta.interaction_at(j, l, t)


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def load_model(path):
    """Load any model written by :func:`save_model`, dispatching on its ``kind``."""
    from .baselines import FeatureBasisModel

    try:
        payload = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: not a model file ({exc})") from None
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise FormatError(f"{path}: not a model file")
    if payload.get("version") != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported model version {payload.get('version')!r}")
    try:
        if payload.get("kind") == "rkhs":
            return RkhsParams.from_dict(payload)
        return FeatureBasisModel.from_dict(payload)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed model ({exc})") from None
