"""Design matrices of the kernelized objective, assembled once per (events, kernel, grid).

Block layout for dimension ``j`` (``N_j`` events) and source dimension ``l``:

* ``Q[j]``: ``M x d(N_j + 1)``, blocks ``[Q^(j1) | ... | Q^(jd)]`` with
  ``Q^(jl)[n, 0] = int_0^T s_l(tau_n, t) dt`` and ``Q^(jl)[n, u] = s_l(tau_n, T_u^(j))``;
* ``Kfull[j][l]``: ``(N_j + 1) x (N_j + 1)`` Gram matrix of the representer functions;
* ``K[j]``: rows ``1..N_j`` of the ``Kfull[j][l]`` blocks, concatenated;
* ``B``: ``M x d`` active-event counts at grid points; ``E[j]``: ``N_j x d`` counts at events of ``j``.

The optional on-disk cache stores these arrays in a ``.npz`` file named by a
SHA-256 of the event times, horizon, ``gamma``, ``A`` and ``M``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .events import EventData
from .kernelmath import (KernelConfig, active_lags, double_int_s, int_s, s_matrix)


@dataclass(eq=False)
class PrecomputedMatrices:
    horizon: float
    cfg: KernelConfig
    m: int
    counts: np.ndarray
    grid: np.ndarray
    Q: list
    Kfull: list
    K: list
    B: np.ndarray
    E: list
    # derived quantities reused across fits on the same matrices
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def dims(self) -> int:
        return len(self.counts)

    def block(self, j: int, l: int) -> slice:
        """Columns of ``alpha^(jl)`` inside ``Q[j]`` and ``K[j]``."""
        n = int(self.counts[j]) + 1
        return slice(l * n, (l + 1) * n)


def riemann_grid(horizon: float, m: int) -> np.ndarray:
    """Left Riemann nodes ``tau_n = (n - 1) T / M``; ``T`` itself is never a node."""
    return np.arange(m) * (horizon / m)


def _cache_key(events: EventData, cfg: KernelConfig, m: int) -> str:
    h = hashlib.sha256()
    h.update(np.float64(events.horizon).tobytes())
    for t in events.times:
        h.update(np.int64(t.size).tobytes())
        h.update(np.ascontiguousarray(t).tobytes())
    h.update(np.array([cfg.gamma, cfg.support], dtype=np.float64).tobytes())
    h.update(np.int64(m).tobytes())
    return h.hexdigest()


def _assemble(events: EventData, cfg: KernelConfig, m: int) -> PrecomputedMatrices:
    d = events.dims
    T = events.horizon
    grid = riemann_grid(T, m)
    counts = events.counts
    B = np.zeros((m, d))
    E = [np.zeros((int(counts[j]), d)) for j in range(d)]
    Q = [np.zeros((m, d * (int(counts[j]) + 1))) for j in range(d)]
    Kfull = [[None] * d for _ in range(d)]
    for l in range(d):
        src = events.times[l]
        pg, _, _ = active_lags(grid, src, cfg.support)
        B[:, l] = np.bincount(pg, minlength=m)
        grid_integral = int_s(grid, T, src, cfg)
        total = double_int_s(T, src, cfg)
        for j in range(d):
            tgt = events.times[j]
            n = tgt.size
            pe, _, _ = active_lags(tgt, src, cfg.support)
            E[j][:, l] = np.bincount(pe, minlength=n)
            cols = slice(l * (n + 1), (l + 1) * (n + 1))
            Q[j][:, cols.start] = grid_integral
            Q[j][:, cols.start + 1:cols.stop] = s_matrix(grid, tgt, src, cfg)
            Kjl = np.empty((n + 1, n + 1))
            Kjl[0, 0] = total
            event_integral = int_s(tgt, T, src, cfg)
            Kjl[0, 1:] = event_integral
            Kjl[1:, 0] = event_integral
            Kjl[1:, 1:] = s_matrix(tgt, tgt, src, cfg)
            Kfull[j][l] = Kjl
    K = [np.hstack([Kfull[j][l][1:] for l in range(d)]) for j in range(d)]
    return PrecomputedMatrices(T, cfg, m, counts, grid, Q, Kfull, K, B, E)


def build_matrices(events: EventData, cfg: KernelConfig, m: int, cache_dir=None) -> PrecomputedMatrices:
    if m < 2:
        raise ValueError("grid size must be at least 2")
    if cache_dir is None:
        return _assemble(events, cfg, m)
    path = Path(cache_dir) / f"{_cache_key(events, cfg, m)}.npz"
    d = events.dims
    if path.exists():
        z = np.load(path)
        return PrecomputedMatrices(
            events.horizon, cfg, m, events.counts, z["grid"],
            [z[f"Q{j}"] for j in range(d)],
            [[z[f"K{j}_{l}"] for l in range(d)] for j in range(d)],
            [z[f"Kj{j}"] for j in range(d)], z["B"], [z[f"E{j}"] for j in range(d)])
    mats = _assemble(events, cfg, m)
    arrays = {"grid": mats.grid, "B": mats.B}
    for j in range(d):
        arrays[f"Q{j}"] = mats.Q[j]
        arrays[f"Kj{j}"] = mats.K[j]
        arrays[f"E{j}"] = mats.E[j]
        for l in range(d):
            arrays[f"K{j}_{l}"] = mats.Kfull[j][l]
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **arrays)
    return mats


def spectral_floor(K: np.ndarray, jitter: float | None = None) -> np.ndarray:
    """``K + jitter * I``; default jitter is ``1e-10 * trace(K) / dim(K)``."""
    K = np.asarray(K, dtype=float)
    if jitter is None:
        jitter = 1e-10 * np.trace(K) / K.shape[0]
    return K + jitter * np.eye(K.shape[0])
