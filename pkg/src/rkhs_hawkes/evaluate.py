"""Metrics and experiment drivers: L1 kernel error, validation grid search, sweeps and horizon studies.

Tables are lists of flat dicts; :func:`write_table` and :func:`read_table`
store them as CSV with floats written at full precision. Wall-clock timings
never enter tables so that repeated runs give byte-identical files.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import DEFAULT_BASIS_SIZE, KINDS, fit_basis
from .errors import NumericalError, SearchError, ValidationError
from .events import EventData, restrict_window
from .fit import FIT_OPTIONS, fit_rkhs
from .intensity import neg_log_likelihood
from .kernelmath import KernelConfig
from .model import LinkSpec
from .objective import default_grid_size
from .optimizer import OptimOptions
from .precompute import build_matrices
from .simulate import simulate_thinning

METHODS = ("rkhs",) + KINDS


@dataclass(frozen=True)
class GridSpec:
    """Candidate ``gamma`` and ``eta`` values plus everything else a fit needs.

    ``m`` fixes the Riemann grid size; ``None`` means ``max(1000, 2 max_j N_j)``
    computed from the training data.
    """

    gammas: tuple = (1.0, 10.0, 100.0)
    etas: tuple = (0.1, 1.0, 10.0, 100.0)
    omega: float = 100.0
    m: int | None = None
    criterion: str = "mle"
    method: str = "rkhs"
    support: float = 5.0
    basis_size: int = DEFAULT_BASIS_SIZE
    max_iters: int = FIT_OPTIONS.max_iters

    def __post_init__(self):
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        object.__setattr__(self, "etas", tuple(float(e) for e in self.etas))
        if not self.gammas or not self.etas:
            raise ValidationError("gamma and eta grids must be nonempty")
        if min(self.gammas) <= 0 or min(self.etas) <= 0:
            raise ValidationError("grid values must be positive")
        if self.m is not None and self.m < 2:
            raise ValidationError("grid size must be at least 2")
        if self.method not in METHODS:
            raise ValidationError(f"method must be one of {', '.join(METHODS)}, got {self.method!r}")
        LinkSpec(self.omega, self.criterion)

    def grid_size(self, events: EventData) -> int:
        return default_grid_size(events) if self.m is None else int(self.m)

    @property
    def link(self) -> LinkSpec:
        return LinkSpec(self.omega, self.criterion)

    @property
    def opts(self) -> OptimOptions:
        return replace(FIT_OPTIONS, max_iters=self.max_iters)


@dataclass
class FitReport:
    params: object
    objective: float
    gamma: float
    eta: float
    val_loglik: float | None = None
    val_floored: int | None = None
    test_loglik: float | None = None
    test_floored: int | None = None
    l1_errors: np.ndarray | None = None
    timing: float = 0.0
    diagnostics: list = field(default_factory=list)

    @property
    def l1_total(self) -> float | None:
        return None if self.l1_errors is None else float(self.l1_errors.sum())

    def summary(self) -> dict:
        """JSON-ready metrics (no timing)."""
        return {
            "gamma": self.gamma,
            "eta": self.eta,
            "objective": self.objective,
            "val_loglik": self.val_loglik,
            "val_floored": self.val_floored,
            "test_loglik": self.test_loglik,
            "test_floored": self.test_floored,
            "l1_errors": None if self.l1_errors is None else self.l1_errors.tolist(),
            "l1_total": self.l1_total,
            "diagnostics": [d.to_dict() for d in self.diagnostics],
        }


def l1_error(truth, fitted, j: int, l: int, grid_points: int = 2001) -> float:
    """Trapezoid approximation of ``int_0^A |g_true - g_fit|`` on a uniform grid."""
    A = float(truth.support)
    t = np.linspace(0.0, A, grid_points)
    gap = np.abs(np.asarray(truth.interaction_at(j, l, t)) - np.asarray(fitted.interaction_at(j, l, t)))
    return float(np.trapezoid(gap, t))


def l1_matrix(truth, fitted, grid_points: int = 2001) -> np.ndarray:
    d = truth.dims
    return np.array([[l1_error(truth, fitted, j, l, grid_points) for l in range(d)] for j in range(d)])


def loglik(model, events: EventData) -> tuple[float, int]:
    """Log-likelihood (higher is better) and the number of floored event intensities."""
    nll, floored = neg_log_likelihood(model, events)
    return -nll, floored


def _fit_cells(train: EventData, spec: GridSpec, gamma: float):
    """All ``eta`` fits for one ``gamma``; kernel matrices are built once and shared."""
    m = spec.grid_size(train)
    mats = None
    if spec.method == "rkhs":
        mats = build_matrices(train, KernelConfig(gamma, spec.support), m)
    out = []
    for eta in spec.etas:
        try:
            if spec.method == "rkhs":
                res = fit_rkhs(train, gamma, eta, spec.omega, spec.criterion, spec.support, m, spec.opts, mats)
            else:
                res = fit_basis(train, spec.method, spec.basis_size, gamma, eta, spec.link, m, spec.support, spec.opts)
            out.append((eta, res, None))
        except NumericalError as exc:
            out.append((eta, None, str(exc)))
    return out


def _score_cell(res, gamma, eta, val, test, truth) -> FitReport:
    rep = FitReport(res.model, res.objective, gamma, eta, timing=res.seconds, diagnostics=res.diagnostics)
    rep.val_loglik, rep.val_floored = loglik(res.model, val)
    if test is not None:
        rep.test_loglik, rep.test_floored = loglik(res.model, test)
    if truth is not None:
        rep.l1_errors = l1_matrix(truth, res.model)
    return rep


def _search_task(args):
    train, val, spec, gamma, truth, test = args
    rows = []
    for eta, res, err in _fit_cells(train, spec, gamma):
        rows.append((eta, None if res is None else _score_cell(res, gamma, eta, val, test, truth), err))
    return rows


def _map(fn, tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def _cell_row(gamma, eta, rep: FitReport | None, err: str | None) -> dict:
    row = {"gamma": gamma, "eta": eta, "status": "ok" if err is None else "numerical_error"}
    row["objective"] = rep.objective if rep else math.nan
    row["val_loglik"] = rep.val_loglik if rep else math.nan
    row["val_floored"] = rep.val_floored if rep else -1
    row["test_loglik"] = rep.test_loglik if rep and rep.test_loglik is not None else math.nan
    row["test_floored"] = rep.test_floored if rep and rep.test_floored is not None else -1
    row["l1_total"] = rep.l1_total if rep and rep.l1_errors is not None else math.nan
    row["iterations"] = sum(d.iterations for d in rep.diagnostics) if rep else -1
    row["converged"] = all(d.converged for d in rep.diagnostics) if rep else False
    row["error"] = err or ""
    return row


def select_best(rows: list[dict]) -> dict:
    """Row with the largest validation log-likelihood; ties go to smaller ``eta``, then smaller ``gamma``."""
    ok = [r for r in rows if r["status"] == "ok" and not math.isnan(r["val_loglik"])]
    if not ok:
        raise SearchError("every grid cell failed")
    return min(ok, key=lambda r: (-r["val_loglik"], r["eta"], r["gamma"]))


def grid_search(train: EventData, val: EventData, spec: GridSpec = GridSpec(), *, truth=None,
                test: EventData | None = None, jobs: int = 1):
    """Fit every ``(gamma, eta)`` cell on ``train``, score on ``val``, keep the best.

    Returns ``(best_report, table)``. When ``truth`` or ``test`` are given,
    every row also carries the L1 error and the test log-likelihood.
    Cells raising :class:`NumericalError` are recorded and skipped.
    """
    if train.dims != val.dims or (test is not None and test.dims != train.dims):
        raise ValidationError("train, validation and test data must share dims")
    tasks = [(train, val, spec, g, truth, test) for g in spec.gammas]
    reports, rows = {}, []
    for g, cells in zip(spec.gammas, _map(_search_task, tasks, jobs)):
        for eta, rep, err in cells:
            rows.append(_cell_row(g, eta, rep, err))
            reports[(g, eta)] = rep
    best = select_best(rows)
    return reports[(best["gamma"], best["eta"])], rows


def _sweep_task(args):
    train, val, truth, spec, omega, m = args
    cell = replace(spec, omega=omega, m=m)
    reports = []
    for g in cell.gammas:
        for eta, rep, err in _search_task((train, val, cell, g, truth, None)):
            reports.append((g, eta, rep, err))
    ok = [(rep.l1_total, eta, g, rep) for g, eta, rep, err in reports if rep is not None]
    if not ok:
        raise SearchError(f"every grid cell failed for omega={omega}, M={m}")
    l1, eta, g, rep = min(ok, key=lambda x: x[:3])
    return {"omega": omega, "m": m, "l1_min": l1, "gamma": g, "eta": eta, "val_loglik": rep.val_loglik,
            "failed_cells": sum(err is not None for *_, err in reports)}


def approximation_sweep(train: EventData, val: EventData, truth, omegas, ms, spec: GridSpec = GridSpec(),
                        jobs: int = 1) -> list[dict]:
    """Smallest L1 error over the ``(gamma, eta)`` grid for each ``(omega, M)`` pair."""
    tasks = [(train, val, truth, spec, float(w), int(m)) for w in omegas for m in ms]
    return _map(_sweep_task, tasks, jobs)


def replication_seeds(seed: int, r: int) -> tuple[int, int, int]:
    """Train, validation and test seeds of replication ``r``."""
    base = seed + 100 * r
    return base, base + 1, base + 2


def simulate_splits(truth, horizon: float, seed: int, r: int) -> tuple[EventData, EventData, EventData]:
    return tuple(simulate_thinning(truth, horizon, seed=s) for s in replication_seeds(seed, r))


def _horizon_task(args):
    truth, method, horizon, seed, r, spec, longest = args
    # a shorter horizon is exactly a prefix of the longest simulation with the same seed
    splits = simulate_splits(truth, longest, seed, r)
    train, val, test = (restrict_window(ev, 0.0, horizon) for ev in splits)
    row = {"method": method, "horizon": horizon, "replication": r, "seed": replication_seeds(seed, r)[0]}
    try:
        best, table = grid_search(train, val, replace(spec, method=method), truth=truth, test=test)
    except SearchError as exc:
        row.update(status="failed", gamma=math.nan, eta=math.nan, l1_total=math.nan, test_loglik=math.nan,
                   test_floored=-1, val_loglik=math.nan, error=str(exc))
        return row, []
    row.update(status="ok", gamma=best.gamma, eta=best.eta, l1_total=best.l1_total, test_loglik=best.test_loglik,
               test_floored=best.test_floored, val_loglik=best.val_loglik, error="")
    cells = [{"method": method, "horizon": horizon, "replication": r, **c} for c in table]
    return row, cells


def horizon_study(truth, horizons, methods, replications: int = 1, seed: int = 0, spec: GridSpec = GridSpec(),
                  jobs: int = 1, on_row=None):
    """Grid-searched fits per ``(method, horizon, replication)`` and their seed statistics.

    Returns ``(rows, stats, cells)``: one row per run, one stats row per
    ``(method, horizon)`` with mean and 95% normal interval, and the full
    grid tables. ``on_row`` is called with each finished run, in order.
    """
    longest = max(float(h) for h in horizons)
    tasks = [(truth, m, float(h), seed, r, spec, longest)
             for m in methods for h in horizons for r in range(replications)]
    rows, cells = [], []
    if jobs <= 1:
        results = map(_horizon_task, tasks)
        for row, c in results:
            rows.append(row)
            cells.extend(c)
            if on_row:
                on_row(row)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for row, c in pool.map(_horizon_task, tasks):
                rows.append(row)
                cells.extend(c)
                if on_row:
                    on_row(row)
    return rows, summarize(rows), cells


def mean_ci(values) -> tuple[float, float, float]:
    """Mean and ``mean -/+ 1.96 sd / sqrt(n)``; the interval collapses for a single value."""
    x = np.asarray([v for v in values if not math.isnan(v)], dtype=float)
    if x.size == 0:
        return math.nan, math.nan, math.nan
    mean = float(x.mean())
    half = 1.96 * float(x.std(ddof=1)) / math.sqrt(x.size) if x.size > 1 else 0.0
    return mean, mean - half, mean + half


def summarize(rows: list[dict]) -> list[dict]:
    keys = []
    for r in rows:
        if (r["method"], r["horizon"]) not in keys:
            keys.append((r["method"], r["horizon"]))
    stats = []
    for method, horizon in keys:
        group = [r for r in rows if r["method"] == method and r["horizon"] == horizon]
        l1 = mean_ci(r["l1_total"] for r in group)
        ll = mean_ci(r["test_loglik"] for r in group)
        stats.append({"method": method, "horizon": horizon, "n": sum(r["status"] == "ok" for r in group),
                      "l1_mean": l1[0], "l1_lo": l1[1], "l1_hi": l1[2],
                      "test_loglik_mean": ll[0], "test_loglik_lo": ll[1], "test_loglik_hi": ll[2]})
    return stats


def _cell_text(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(rows: list[dict], path, columns: list[str] | None = None) -> None:
    """CSV with a header row; floats use ``repr`` so reading them back is lossless."""
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell_text(r[c]) for c in columns])


def append_row(row: dict, path, columns: list[str]) -> None:
    new = not Path(path).exists()
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(columns)
        w.writerow([_cell_text(row[c]) for c in columns])


def _parse_cell(text: str):
    if text in ("true", "false"):
        return text == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def read_table(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: _parse_cell(v) for k, v in row.items()} for row in csv.DictReader(fh)]
