"""Small JSON grammar for interaction curves of ground-truth models.

A curve is a JSON object with exactly one key naming its kind::

    {"const": 0.3}
    {"poly": [c0, c1, c2]}                          # c0 + c1 t + c2 t^2
    {"exp": {"scale": a, "rate": r, "shift": s}}    # a exp(-r (t - s))
    {"gauss": {"scale": a, "width": w, "center": c}}  # a exp(-w (t - c)^2)
    {"cosdamp": {"scale": a, "offset": o, "freq": f, "phase": p, "rate": r}}
                                                    # a (o + cos(f t + p)) exp(-r t)
    {"sum": [curve, ...]}
    {"shift": {"by": s, "curve": curve}}            # curve(t - s)
    {"window": {"lo": a, "hi": b, "curve": curve}}  # curve(t) 1{a < t <= b}

``lo``/``hi`` may be omitted (or null) for an open side; ``"lo_closed": true``
turns the left end into ``a <= t``. All curves are vectorised over ``t``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ConfigError

Curve = Callable[[np.ndarray], np.ndarray]


def _get(params: dict, key: str, default=None):
    if key in params:
        return float(params[key])
    if default is None:
        raise ConfigError(f"missing parameter {key!r}")
    return default


def build_curve(spec) -> Curve:
    if isinstance(spec, (int, float)):
        spec = {"const": spec}
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigError(f"a curve must be an object with a single kind key, got {spec!r}")
    (kind, params), = spec.items()

    if kind == "const":
        c = float(params)
        return lambda t: np.full(np.shape(t), c)
    if kind == "poly":
        coeffs = [float(c) for c in params][::-1]
        return lambda t: np.polyval(coeffs, np.asarray(t, dtype=float))
    if kind == "exp":
        a, r, s = _get(params, "scale", 1.0), _get(params, "rate"), _get(params, "shift", 0.0)
        return lambda t: a * np.exp(-r * (np.asarray(t, dtype=float) - s))
    if kind == "gauss":
        a, w, c = _get(params, "scale", 1.0), _get(params, "width"), _get(params, "center", 0.0)
        return lambda t: a * np.exp(-w * (np.asarray(t, dtype=float) - c) ** 2)
    if kind == "cosdamp":
        a, o = _get(params, "scale", 1.0), _get(params, "offset", 0.0)
        f, p, r = _get(params, "freq"), _get(params, "phase", 0.0), _get(params, "rate", 0.0)

        def cosdamp(t):
            t = np.asarray(t, dtype=float)
            return a * (o + np.cos(f * t + p)) * np.exp(-r * t)
        return cosdamp
    if kind == "sum":
        parts = [build_curve(p) for p in params]
        if not parts:
            raise ConfigError("empty sum")

        def total(t):
            return sum(p(t) for p in parts)
        return total
    if kind == "shift":
        by, inner = _get(params, "by"), build_curve(params["curve"])
        return lambda t: inner(np.asarray(t, dtype=float) - by)
    if kind == "window":
        lo = params.get("lo")
        hi = params.get("hi")
        lo_closed = bool(params.get("lo_closed", False))
        inner = build_curve(params["curve"])

        def window(t):
            t = np.asarray(t, dtype=float)
            mask = np.ones(t.shape, dtype=bool)
            if lo is not None:
                mask &= (t >= lo) if lo_closed else (t > lo)
            if hi is not None:
                mask &= t <= hi
            return np.where(mask, inner(t), 0.0)
        return window
    raise ConfigError(f"unknown curve kind {kind!r}")
