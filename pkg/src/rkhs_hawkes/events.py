"""Multivariate event sequences: validation, file I/O and windowing."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParseError, ValidationError


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=np.float64).reshape(-1)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class EventData:
    """Sorted event times of a ``dims``-variate point process observed on ``(0, horizon]``.

    Each entry of ``times`` is a read-only float64 array. Times must be
    strictly increasing within a dimension; equal times across dimensions
    are allowed.
    """

    horizon: float
    times: tuple

    def __init__(self, times: Sequence, horizon: float):
        horizon = float(horizon)
        if not np.isfinite(horizon) or horizon <= 0:
            raise ValidationError(f"horizon must be positive and finite, got {horizon}")
        seqs = tuple(_frozen(t) for t in times)
        if not seqs:
            raise ValidationError("at least one dimension is required")
        for j, t in enumerate(seqs):
            if t.size == 0:
                continue
            if not np.all(np.isfinite(t)):
                raise ValidationError(f"dimension {j}: non-finite event time")
            if t[0] <= 0 or t[-1] > horizon:
                bad = t[0] if t[0] <= 0 else t[-1]
                raise ValidationError(f"dimension {j}: time {bad!r} outside (0, {horizon!r}]")
            steps = np.diff(t)
            if np.any(steps <= 0):
                k = int(np.argmax(steps <= 0))
                kind = "duplicate" if steps[k] == 0 else "unsorted"
                raise ValidationError(f"dimension {j}: {kind} times at positions {k}, {k + 1}")
        object.__setattr__(self, "horizon", horizon)
        object.__setattr__(self, "times", seqs)

    @property
    def dims(self) -> int:
        return len(self.times)

    @property
    def counts(self) -> np.ndarray:
        return np.array([t.size for t in self.times], dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        if not isinstance(other, EventData):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and self.dims == other.dims
            and all(np.array_equal(a, b) for a, b in zip(self.times, other.times))
        )

    def __repr__(self):
        return f"EventData(dims={self.dims}, horizon={self.horizon}, counts={self.counts.tolist()})"

    def to_dict(self) -> dict:
        return {"dims": self.dims, "horizon": self.horizon, "times": [t.tolist() for t in self.times]}

    @classmethod
    def from_dict(cls, payload: dict) -> "EventData":
        try:
            times = payload["times"]
            horizon = payload["horizon"]
        except (KeyError, TypeError) as exc:
            raise ParseError(f"missing field {exc}") from None
        dims = payload.get("dims", len(times))
        if dims != len(times):
            raise ValidationError(f"dims={dims} but {len(times)} sequences given")
        return cls(times, horizon)


def _infer_format(path: Path, fmt: str | None) -> str:
    fmt = fmt or path.suffix.lstrip(".").lower()
    if fmt not in ("csv", "json"):
        raise ParseError(f"unknown events format {fmt!r} (expected csv or json)")
    return fmt


def load_events(path, fmt: str | None = None, *, horizon: float | None = None,
                dims: int | None = None, header: bool = False) -> EventData:
    """Read events from ``path``.

    CSV rows are ``dim_index,time`` with no header unless ``header`` is set;
    the horizon must then be given by the caller. JSON files carry their own
    ``dims`` and ``horizon`` (explicit arguments override them).
    """
    path = Path(path)
    fmt = _infer_format(path, fmt)
    if fmt == "json":
        try:
            payload = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(str(exc), line=exc.lineno) from None
        if horizon is not None:
            payload = {**payload, "horizon": horizon}
        events = EventData.from_dict(payload)
        if dims is not None and dims != events.dims:
            raise ValidationError(f"file has {events.dims} dimensions, expected {dims}")
        return events

    if horizon is None:
        raise ValidationError("CSV events need an explicit horizon")
    rows: list[tuple[int, float]] = []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 columns, got {len(row)}", line=lineno)
            try:
                dim = int(row[0])
                t = float(row[1])
            except ValueError:
                raise ParseError(f"cannot parse {row!r}", line=lineno) from None
            if dim < 0:
                raise ParseError(f"negative dim_index {dim}", line=lineno)
            rows.append((dim, t))
    n_dims = max((d for d, _ in rows), default=-1) + 1
    if dims is not None:
        if n_dims > dims:
            raise ValidationError(f"dim_index {n_dims - 1} out of range for dims={dims}")
        n_dims = dims
    if n_dims == 0:
        raise ValidationError("empty file and no dims given")
    seqs: list[list[float]] = [[] for _ in range(n_dims)]
    for d, t in rows:
        seqs[d].append(t)
    return EventData(seqs, horizon)


def save_events(events: EventData, path, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = _infer_format(path, fmt)
    if fmt == "json":
        path.write_text(json.dumps(events.to_dict()))
        return
    # one dimension after another, each ascending
    with path.open("w", newline="") as fh:
        for j, t in enumerate(events.times):
            for x in t.tolist():
                fh.write(f"{j},{x!r}\n")


def concat_recordings(recordings: Sequence[EventData], shuffle_seed: int | None = None) -> EventData:
    """Lay recordings end to end, optionally in a seeded random order."""
    if not recordings:
        raise ValidationError("no recordings given")
    dims = recordings[0].dims
    if any(r.dims != dims for r in recordings):
        raise ValidationError("recordings do not share the same number of dimensions")
    order = list(range(len(recordings)))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(recordings)).tolist()
    if len(order) == 1:
        return recordings[order[0]]
    offset = 0.0
    parts: list[list[np.ndarray]] = [[] for _ in range(dims)]
    for k in order:
        rec = recordings[k]
        for j in range(dims):
            parts[j].append(rec.times[j] + offset)
        offset += rec.horizon
    return EventData([np.concatenate(p) for p in parts], offset)


def restrict_window(events: EventData, a: float, b: float) -> EventData:
    """Keep times in ``(a, b]`` and shift them by ``-a``."""
    if not a < b:
        raise ValidationError(f"empty window ({a}, {b}]")
    if a < 0 or b > events.horizon:
        raise ValidationError(f"window ({a}, {b}] not inside [0, {events.horizon}]")
    if a == 0 and b == events.horizon:
        return events
    seqs = []
    for t in events.times:
        kept = t[(t > a) & (t <= b)] - a
        # shifting can round a time onto 0 or past the new horizon
        seqs.append(kept[(kept > 0) & (kept <= b - a)])
    return EventData(seqs, b - a)
