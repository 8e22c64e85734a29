"""Command-line entry point: simulate, fit, score, eval-l1, sweep and bench.

Every command writes its outputs plus a ``manifest.json`` holding the
effective configuration into ``--out``. Wall-clock timings go to a separate
``timing.json`` so that all other files are byte-identical across reruns.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import DEFAULT_BASIS_SIZE, fit_basis
from .errors import (ConfigError, FormatError, NumericalError, ParseError, SearchError, ShapeError,
                     SimulationError, ValidationError)
from .evaluate import (METHODS, GridSpec, append_row, approximation_sweep, horizon_study, l1_matrix, loglik,
                       mean_ci, replication_seeds, simulate_splits, write_table)
from .events import EventData, load_events, save_events
from .fit import FIT_OPTIONS, fit_rkhs
from .intensity import LOG_FLOOR, default_resolution, neg_log_likelihood
from .model import LinkSpec, load_model, save_model
from .simulate import BUILTIN_MODELS, builtin_kernels, simulate_thinning

log = logging.getLogger("rkhs_hawkes")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

EPILOG = f"""\
built-in defaults:
  support A = 5, softplus sharpness omega = 100, criterion = mle,
  Riemann grid M = max(1000, 2 max_j N_j), gamma grid 1,10,100, eta grid 0.1,1,10,100,
  basis size U = {DEFAULT_BASIS_SIZE}, optimizer: max_iters {FIT_OPTIONS.max_iters}, grad_tol {FIT_OPTIONS.grad_tol},
  f_tol {FIT_OPTIONS.f_tol}, memory {FIT_OPTIONS.history}; fit starts at mu = N/T, alpha = 0, b = 0.
  scoring: ReLU intensity, log floor {LOG_FLOOR}, integral resolution max(1000, 2 max_j N_j, 20 T) nodes.
  simulation: burn-in 10 A, PCG64 generator.
seeds: train = seed, validation = seed + 1, test = seed + 2, replication r uses seed + 100 r.
config precedence: command-line flags > --config JSON file > built-in defaults.
exit codes: 0 success, 2 usage or configuration, 3 numerical failure, 4 input/output.
"""


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _methods(text: str) -> list[str]:
    out = [x.strip() for x in text.split(",") if x.strip()]
    bad = [m for m in out if m not in METHODS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown method(s) {', '.join(bad)}; valid: {', '.join(METHODS)}")
    return out


def _events_args(p, name="--events", required=True):
    p.add_argument(name, required=required, help="events file (.csv rows 'dim,time' or .json)")
    p.add_argument("--horizon", type=float, default=None, help="observation horizon (required for CSV events)")
    p.add_argument("--dims", type=int, default=None, help="number of dimensions (CSV; default: inferred)")
    p.add_argument("--header", action="store_true", default=False, help="CSV file has a header line")


def _fit_args(p):
    p.add_argument("--method", choices=METHODS, default="rkhs", help="estimator")
    p.add_argument("--omega", type=float, default=100.0, help="softplus sharpness")
    p.add_argument("--criterion", choices=("mle", "ls"), default="mle", help="likelihood or least-squares link pair")
    p.add_argument("--m", type=int, default=None, help="Riemann grid size (default max(1000, 2 max_j N_j))")
    p.add_argument("--support", type=float, default=5.0, help="interaction support bound A")
    p.add_argument("--basis-size", type=int, default=DEFAULT_BASIS_SIZE, help="U for the basis competitors")
    p.add_argument("--max-iters", type=int, default=FIT_OPTIONS.max_iters, help="optimizer iteration cap")


def _grid_args(p):
    p.add_argument("--gammas", type=_floats, default=[1.0, 10.0, 100.0], help="gamma grid")
    p.add_argument("--etas", type=_floats, default=[0.1, 1.0, 10.0, 100.0], help="eta grid")


def build_parser(suppress: bool = False) -> argparse.ArgumentParser:
    """The full parser; ``suppress`` drops every default so that only explicit flags survive."""
    parser = argparse.ArgumentParser(prog="rkhs-hawkes", description="Nonlinear Hawkes processes: simulation, "
                                     "kernel estimation and benchmarks.", epilog=EPILOG,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON file of option values (keys as in --help, '-' -> '_')")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=0, help="root seed")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("simulate", parents=[common], formatter_class=fmt, epilog=EPILOG,
                       help="simulate train/validation/test trajectories")
    p.add_argument("--model", default="paper3d", help=f"ground truth: {', '.join(BUILTIN_MODELS)} or a JSON spec")
    p.add_argument("--horizon", type=float, default=1000.0, help="trajectory length T")
    p.add_argument("--burn-in", type=float, default=None, help="discarded warm-up length (default 10 A)")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="events file format")

    p = sub.add_parser("fit", parents=[common], formatter_class=fmt, epilog=EPILOG,
                       help="fit one model on an events file")
    _events_args(p)
    _fit_args(p)
    p.add_argument("--gamma", type=float, default=10.0, help="kernel width / basis rate")
    p.add_argument("--eta", type=float, default=1.0, help="ridge weight")

    p = sub.add_parser("score", parents=[common], formatter_class=fmt, epilog=EPILOG,
                       help="log-likelihood of events under a fitted or ground-truth model")
    p.add_argument("--model", required=True, help="model file written by 'fit', or a ground-truth name/spec")
    _events_args(p)
    p.add_argument("--m-score", type=int, default=None, help="uniform integration nodes "
                   "(default max(1000, 2 max_j N_j, 20 T))")

    p = sub.add_parser("eval-l1", parents=[common], formatter_class=fmt, epilog=EPILOG,
                       help="L1 distance between fitted and true interaction functions")
    p.add_argument("--model", required=True, help="model file written by 'fit'")
    p.add_argument("--truth", default="paper3d", help="ground truth name or JSON spec")
    p.add_argument("--grid-points", type=int, default=2001, help="trapezoid nodes on [0, A]")

    p = sub.add_parser("sweep", parents=[common], formatter_class=fmt, epilog=EPILOG,
                       help="smallest L1 error over the (gamma, eta) grid for each (omega, M)")
    p.add_argument("--model", default="paper3d", help="ground truth name or JSON spec")
    p.add_argument("--horizon", type=float, default=500.0, help="trajectory length T")
    p.add_argument("--replications", type=int, default=1, help="independent seeds")
    p.add_argument("--omegas", type=_floats, default=[1.0, 10.0, 100.0], help="softplus sharpness values")
    p.add_argument("--ms", type=_ints, default=[100, 1000], help="Riemann grid sizes")
    _grid_args(p)
    p.add_argument("--criterion", choices=("mle", "ls"), default="mle", help="link pair")
    p.add_argument("--support", type=float, default=5.0, help="interaction support bound A")
    p.add_argument("--max-iters", type=int, default=FIT_OPTIONS.max_iters, help="optimizer iteration cap")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")

    p = sub.add_parser("bench", parents=[common], formatter_class=fmt, epilog=EPILOG,
                       help="grid-searched fits of several methods over horizons and seeds")
    p.add_argument("--model", default="paper3d", help="ground truth name or JSON spec")
    p.add_argument("--horizons", type=_floats, default=[250.0, 500.0, 1000.0, 2000.0], help="trajectory lengths")
    p.add_argument("--methods", type=_methods, default=list(METHODS), help="estimators")
    p.add_argument("--replications", type=int, default=10, help="independent seeds")
    _grid_args(p)
    p.add_argument("--omega", type=float, default=100.0, help="softplus sharpness")
    p.add_argument("--criterion", choices=("mle", "ls"), default="mle", help="link pair")
    p.add_argument("--m", type=int, default=None, help="Riemann grid size (default max(1000, 2 max_j N_j))")
    p.add_argument("--support", type=float, default=5.0, help="interaction support bound A")
    p.add_argument("--basis-size", type=int, default=DEFAULT_BASIS_SIZE, help="U for the basis competitors")
    p.add_argument("--max-iters", type=int, default=FIT_OPTIONS.max_iters, help="optimizer iteration cap")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")

    if suppress:
        for action in _all_actions(parser):
            if action.dest not in ("command", "help", "version"):
                action.default = argparse.SUPPRESS
    return parser


def _all_actions(parser):
    for action in parser._actions:
        yield action
        if isinstance(action, argparse._SubParsersAction):
            for sp in action.choices.values():
                yield from _all_actions(sp)


class UsageError(Exception):
    pass


def resolve_config(argv) -> dict:
    """Merge built-in defaults, the ``--config`` file and explicit flags, in increasing priority."""
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    explicit = vars(build_parser(suppress=True).parse_args(argv))
    config = dict(args)
    path = explicit.get("config")
    if path:
        try:
            from_file = json.loads(Path(path).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(from_file, dict):
            raise UsageError("config file must hold a JSON object")
        from_file = {k.replace("-", "_"): v for k, v in from_file.items()}
        unknown = sorted(set(from_file) - set(args) - {"command"})
        if unknown:
            raise UsageError(f"unknown config keys for '{args['command']}': {', '.join(unknown)}")
        config.update({k: v for k, v in from_file.items() if k != "command"})
    config.update(explicit)
    config.pop("config", None)
    return config


def _truth(name):
    try:
        return builtin_kernels(name)
    except (OSError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot load ground truth {name!r}: {exc}") from None


def _load_events(cfg, key="events") -> EventData:
    path = Path(cfg[key])
    if not path.exists():
        raise FileNotFoundError(f"events file {path} does not exist")
    if path.suffix.lower() == ".csv" and cfg.get("horizon") is None:
        raise UsageError("CSV events need --horizon")
    return load_events(path, horizon=cfg.get("horizon"), dims=cfg.get("dims"), header=cfg.get("header", False))


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return None if math.isnan(x) or math.isinf(x) else x
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def _manifest(out: Path, cfg: dict, complete: bool, **extra) -> None:
    payload = {"command": cfg["command"], "config": {k: v for k, v in cfg.items() if k != "verbose"},
               "complete": complete, "version": __version__}
    payload.update(extra)
    _write_json(out / "manifest.json", payload)


def cmd_simulate(cfg: dict, out: Path) -> dict:
    truth = _truth(cfg["model"])
    seeds = replication_seeds(cfg["seed"], 0)
    counts, files = {}, []
    for split, s in zip(("train", "val", "test"), seeds):
        ev = simulate_thinning(truth, cfg["horizon"], burn_in=cfg["burn_in"], seed=s)
        name = f"{split}.{cfg['format']}"
        save_events(ev, out / name)
        counts[split] = ev.counts.tolist()
        files.append(name)
        log.info("%s: %s events (seed %d)", split, ev.counts.tolist(), s)
    _manifest(out, cfg, True, outputs=files, counts=counts, seeds=dict(zip(("train", "val", "test"), seeds)),
              horizon=cfg["horizon"], dims=truth.dims)
    return {}


def cmd_fit(cfg: dict, out: Path) -> dict:
    events = _load_events(cfg)
    opts = replace(FIT_OPTIONS, max_iters=cfg["max_iters"])
    try:
        if cfg["method"] == "rkhs":
            res = fit_rkhs(events, cfg["gamma"], cfg["eta"], cfg["omega"], cfg["criterion"], cfg["support"],
                           cfg["m"], opts)
        else:
            res = fit_basis(events, cfg["method"], cfg["basis_size"], cfg["gamma"], cfg["eta"],
                            LinkSpec(cfg["omega"], cfg["criterion"]), cfg["m"], cfg["support"], opts)
    except NumericalError as exc:
        if exc.iterate is not None:
            _write_json(out / "iterate.json", {"iterate": np.asarray(exc.iterate).tolist(), "error": str(exc)})
        _manifest(out, cfg, False, outputs=["iterate.json"], error=str(exc))
        raise
    save_model(res.model, out / "model.json")
    report = {"objective": res.objective, "settings": res.settings,
              "diagnostics": [d.to_dict() for d in res.diagnostics], "counts": events.counts.tolist(),
              "mu": np.asarray(res.model.mu).tolist()}
    _write_json(out / "report.json", report)
    _manifest(out, cfg, True, outputs=["model.json", "report.json"])
    log.info("objective %.6g", res.objective)
    return {"fit": res.seconds}


def _load_any_model(name):
    path = Path(name)
    if path.exists():
        try:
            return load_model(path)
        except FormatError:
            if path.suffix == ".json":
                return _truth(name)
            raise
    return _truth(name)


def cmd_score(cfg: dict, out: Path) -> dict:
    model = _load_any_model(cfg["model"])
    events = _load_events(cfg)
    if model.dims != events.dims:
        raise ConfigError(f"model has {model.dims} dimensions but the events have {events.dims}")
    m = cfg["m_score"] if cfg["m_score"] is not None else default_resolution(events)
    nll, floored = neg_log_likelihood(model, events, m)
    score = {"loglik": -nll, "neg_loglik": nll, "floored": floored, "n_events": int(events.total),
             "counts": events.counts.tolist(), "horizon": events.horizon, "m_score": m}
    _write_json(out / "score.json", score)
    _manifest(out, cfg, True, outputs=["score.json"])
    print(json.dumps(_jsonable(score)))
    return {}


def cmd_eval_l1(cfg: dict, out: Path) -> dict:
    model = load_model(cfg["model"])
    truth = _truth(cfg["truth"])
    if model.dims != truth.dims:
        raise ConfigError(f"model has {model.dims} dimensions but the ground truth has {truth.dims}")
    if not math.isclose(float(model.support), float(truth.support)):
        raise ConfigError("model and ground truth use different supports")
    mat = l1_matrix(truth, model, cfg["grid_points"])
    result = {"l1_errors": mat.tolist(), "l1_total": float(mat.sum())}
    _write_json(out / "l1.json", result)
    _manifest(out, cfg, True, outputs=["l1.json"])
    print(json.dumps(result))
    return {}


SWEEP_COLUMNS = ["replication", "seed", "omega", "m", "l1_min", "gamma", "eta", "val_loglik", "failed_cells"]


def cmd_sweep(cfg: dict, out: Path) -> dict:
    truth = _truth(cfg["model"])
    spec = GridSpec(cfg["gammas"], cfg["etas"], criterion=cfg["criterion"], support=cfg["support"],
                    max_iters=cfg["max_iters"])
    table = out / "sweep.csv"
    table.unlink(missing_ok=True)
    _manifest(out, cfg, False, outputs=["sweep.csv"], rows_written=0)
    rows = []
    for r in range(cfg["replications"]):
        train, val, _ = simulate_splits(truth, cfg["horizon"], cfg["seed"], r)
        for row in approximation_sweep(train, val, truth, cfg["omegas"], cfg["ms"], spec, cfg["jobs"]):
            row = {"replication": r, "seed": replication_seeds(cfg["seed"], r)[0], **row}
            rows.append(row)
            append_row(row, table, SWEEP_COLUMNS)
        _manifest(out, cfg, False, outputs=["sweep.csv"], rows_written=len(rows))
    summary = []
    for w in cfg["omegas"]:
        for m in cfg["ms"]:
            mean, lo, hi = mean_ci(r["l1_min"] for r in rows if r["omega"] == w and r["m"] == m)
            summary.append({"omega": float(w), "m": int(m), "l1_mean": mean, "l1_lo": lo, "l1_hi": hi})
    write_table(summary, out / "sweep_summary.csv")
    _write_json(out / "summary.json", {"sweep": summary})
    _manifest(out, cfg, True, outputs=["sweep.csv", "sweep_summary.csv", "summary.json"], rows_written=len(rows))
    return {}


RUN_COLUMNS = ["method", "horizon", "replication", "seed", "status", "gamma", "eta", "l1_total", "test_loglik",
               "test_floored", "val_loglik", "error"]


def cmd_bench(cfg: dict, out: Path) -> dict:
    truth = _truth(cfg["model"])
    spec = GridSpec(cfg["gammas"], cfg["etas"], cfg["omega"], cfg["m"], cfg["criterion"], "rkhs",
                    cfg["support"], cfg["basis_size"], cfg["max_iters"])
    runs_path = out / "runs.csv"
    runs_path.unlink(missing_ok=True)
    written = []
    _manifest(out, cfg, False, outputs=["runs.csv"], rows_written=0)

    def on_row(row):
        written.append(row)
        append_row(row, runs_path, RUN_COLUMNS)
        _manifest(out, cfg, False, outputs=["runs.csv"], rows_written=len(written))
        log.info("%s T=%g r=%d: L1 %.4g, test loglik %.6g", row["method"], row["horizon"], row["replication"],
                 row["l1_total"], row["test_loglik"])

    rows, stats, cells = horizon_study(truth, cfg["horizons"], cfg["methods"], cfg["replications"], cfg["seed"],
                                       spec, cfg["jobs"], on_row)
    write_table(stats, out / "stats.csv")
    write_table(cells, out / "cells.csv")
    _write_json(out / "summary.json", {"stats": stats})
    _manifest(out, cfg, True, outputs=["runs.csv", "stats.csv", "cells.csv", "summary.json"], rows_written=len(rows))
    return {}


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "score": cmd_score, "eval-l1": cmd_eval_l1,
            "sweep": cmd_sweep, "bench": cmd_bench}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = resolve_config(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(cfg["verbose"], 2)],
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        timing = COMMANDS[cfg["command"]](cfg, out)
        if timing:
            _write_json(out / "timing.json", timing)
        return EXIT_OK
    except (UsageError, ConfigError, ShapeError, SearchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, SimulationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, ParseError, FormatError, ValidationError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except KeyboardInterrupt:
        print("interrupted; manifest.json records the partial run", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
