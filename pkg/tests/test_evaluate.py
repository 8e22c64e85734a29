import math

import numpy as np
import pytest

import rkhs_hawkes.evaluate as evaluate
from rkhs_hawkes.errors import NumericalError, SearchError, ValidationError
from rkhs_hawkes.evaluate import (GridSpec, approximation_sweep, grid_search, horizon_study, l1_error, l1_matrix,
                                  mean_ci, read_table, replication_seeds, select_best, simulate_splits,
                                  write_table)
from rkhs_hawkes.events import EventData
from rkhs_hawkes.fit import fit_rkhs
from rkhs_hawkes.simulate import GroundTruthModel, builtin_kernels, simulate_thinning


class Curves:
    def __init__(self, fns, support=5.0):
        self.fns = fns
        self.support = support
        self.dims = len(fns)

    def interaction_at(self, j, l, t):
        return self.fns[j][l](np.asarray(t, dtype=float))


def const(c):
    return Curves([[lambda t: np.full(t.shape, c)]])


@pytest.fixture(scope="module")
def truth():
    return builtin_kernels("paper3d")


def test_l1_trivial(truth):
    assert l1_error(truth, truth, 1, 2) == 0.0
    assert l1_error(const(0.0), const(-0.3), 0, 0) == pytest.approx(1.5, rel=1e-12)
    assert np.all(l1_matrix(truth, truth) == 0)


def test_l1_refinement():
    a = Curves([[lambda t: np.sin(t) * np.exp(-t)]])
    b = Curves([[lambda t: 0.2 * np.cos(3 * t)]])
    coarse, fine = l1_error(a, b, 0, 0), l1_error(a, b, 0, 0, grid_points=4001)
    assert abs(coarse - fine) < 1e-4 * fine


def test_l1_pseudometric():
    fs = [Curves([[f]]) for f in (np.sin, np.cos, lambda t: 0.1 * t, lambda t: np.exp(-t))]
    for a in fs:
        for b in fs:
            assert l1_error(a, b, 0, 0) == pytest.approx(l1_error(b, a, 0, 0), rel=1e-14)
            for c in fs:
                assert l1_error(a, c, 0, 0) <= l1_error(a, b, 0, 0) + l1_error(b, c, 0, 0) + 1e-12


def test_grid_spec_validation():
    with pytest.raises(ValidationError):
        GridSpec(gammas=())
    with pytest.raises(ValidationError):
        GridSpec(etas=(0.0,))
    with pytest.raises(ValidationError):
        GridSpec(method="tree")
    with pytest.raises(ValidationError):
        GridSpec(omega=-1.0)


@pytest.fixture(scope="module")
def small(truth):
    return tuple(simulate_thinning(truth, 120.0, seed=s) for s in (3, 4, 5))


def test_single_cell_equals_direct_fit(small, truth):
    train, val, test = small
    best, rows = grid_search(train, val, GridSpec(gammas=(10.0,), etas=(1.0,)), truth=truth, test=test)
    direct = fit_rkhs(train, 10.0, 1.0)
    assert len(rows) == 1
    np.testing.assert_array_equal(best.params.mu, direct.model.mu)
    np.testing.assert_array_equal(best.params.b, direct.model.b)
    assert best.objective == direct.objective


def test_table_exhaustive_and_argmax_reproducible(small, truth):
    train, val, test = small
    spec = GridSpec(gammas=(1.0, 10.0), etas=(1.0, 10.0, 100.0))
    best, rows = grid_search(train, val, spec, truth=truth, test=test)
    assert len(rows) == 6
    assert {(r["gamma"], r["eta"]) for r in rows} == {(g, e) for g in spec.gammas for e in spec.etas}
    top = select_best(rows)
    assert (top["gamma"], top["eta"]) == (best.gamma, best.eta)
    assert all(best.val_loglik >= r["val_loglik"] for r in rows)
    assert np.all(best.l1_errors >= 0) and best.test_loglik is not None


def test_grid_search_jobs_identical(small, truth):
    train, val, test = small
    spec = GridSpec(gammas=(1.0, 10.0), etas=(10.0,))
    _, serial = grid_search(train, val, spec, truth=truth, test=test)
    _, pooled = grid_search(train, val, spec, truth=truth, test=test, jobs=2)
    assert serial == pooled


def test_tie_breaking():
    rows = [{"gamma": g, "eta": e, "status": "ok", "val_loglik": -5.0} for g in (10.0, 1.0) for e in (10.0, 1.0)]
    best = select_best(rows)
    assert (best["gamma"], best["eta"]) == (1.0, 1.0)
    rows.append({"gamma": 100.0, "eta": 100.0, "status": "numerical_error", "val_loglik": math.nan})
    assert select_best(rows)["eta"] == 1.0


def test_failed_cells_recorded(small, monkeypatch):
    train, val, _ = small
    real = evaluate.fit_rkhs

    def flaky(events, gamma, eta, *args, **kw):
        if eta == 1.0:
            raise NumericalError("boom", iterate=np.zeros(1))
        return real(events, gamma, eta, *args, **kw)

    monkeypatch.setattr(evaluate, "fit_rkhs", flaky)
    best, rows = grid_search(train, val, GridSpec(gammas=(10.0,), etas=(1.0, 10.0)))
    assert [r["status"] for r in rows] == ["numerical_error", "ok"]
    assert "boom" in rows[0]["error"] and best.eta == 10.0
    with pytest.raises(SearchError):
        grid_search(train, val, GridSpec(gammas=(10.0,), etas=(1.0,)))


def test_dims_mismatch(small):
    with pytest.raises(ValidationError):
        grid_search(small[0], EventData([[1.0]], 10.0), GridSpec(gammas=(1.0,), etas=(1.0,)))


def test_csv_roundtrip(tmp_path):
    rows = [{"a": 0.1 + 0.2, "b": 3, "c": True, "d": "x y", "e": math.pi * 1e-300},
            {"a": -1e17 / 3, "b": -2, "c": False, "d": "", "e": float("inf")}]
    write_table(rows, tmp_path / "t.csv")
    assert read_table(tmp_path / "t.csv") == rows
    back = read_table(tmp_path / "t.csv")
    write_table(back, tmp_path / "u.csv")
    assert (tmp_path / "t.csv").read_bytes() == (tmp_path / "u.csv").read_bytes()


def test_mean_ci():
    assert mean_ci([2.0]) == (2.0, 2.0, 2.0)
    mean, lo, hi = mean_ci([1.0, 2.0, 3.0])
    assert mean == 2.0 and hi - mean == pytest.approx(1.96 / math.sqrt(3))
    assert all(math.isnan(v) for v in mean_ci([]))


def test_seed_derivation(truth):
    assert replication_seeds(7, 0) == (7, 8, 9)
    assert replication_seeds(7, 2) == (207, 208, 209)
    train, val, test = simulate_splits(truth, 50.0, 7, 1)
    assert train == simulate_thinning(truth, 50.0, seed=107)
    assert test == simulate_thinning(truth, 50.0, seed=109)


def test_sweep_shape_and_determinism(small, truth):
    train, val, _ = small
    spec = GridSpec(gammas=(10.0,), etas=(10.0,))
    one = approximation_sweep(train, val, truth, [100.0], [200], spec)
    assert len(one) == 1 and one[0]["omega"] == 100.0 and one[0]["m"] == 200
    rows = approximation_sweep(train, val, truth, [1.0, 100.0], [100, 200], spec)
    assert [(r["omega"], r["m"]) for r in rows] == [(1.0, 100), (1.0, 200), (100.0, 100), (100.0, 200)]
    assert rows == approximation_sweep(train, val, truth, [1.0, 100.0], [100, 200], spec)


def test_horizon_study_single_row(truth):
    spec = GridSpec(gammas=(10.0,), etas=(10.0,))
    rows, stats, cells = horizon_study(truth, [60.0], ["rkhs"], 1, seed=3, spec=spec)
    assert len(rows) == 1 and len(stats) == 1 and len(cells) == 1
    assert stats[0]["n"] == 1 and stats[0]["l1_mean"] == rows[0]["l1_total"]


def test_horizon_study_deterministic_and_prefix(truth):
    spec = GridSpec(gammas=(10.0,), etas=(10.0,))
    seen = []
    a = horizon_study(truth, [40.0, 80.0], ["rkhs", "bernstein"], 2, seed=1, spec=spec, on_row=seen.append)
    b = horizon_study(truth, [40.0, 80.0], ["rkhs", "bernstein"], 2, seed=1, spec=spec, jobs=2)
    assert a == b and seen == a[0]
    assert len(a[0]) == 8 and len(a[1]) == 4
    # the shorter run sees a prefix of the longer trajectory: same result as a standalone study
    alone = horizon_study(truth, [40.0], ["rkhs"], 1, seed=1, spec=spec)
    assert alone[0][0] == a[0][0]


@pytest.fixture(scope="module")
def full_length_searches(truth):
    train, val, test = simulate_splits(truth, 1000.0, 0, 0)
    rkhs = grid_search(train, val, GridSpec(), truth=truth, test=test)
    bern = grid_search(train, val, GridSpec(method="bernstein"), truth=truth, test=test)
    return rkhs, bern


@pytest.mark.slow
@pytest.mark.xfail(reason="validation scores are dominated by floored events, so selection favours heavy "
                          "regularization over the lowest-error cell; see README", strict=False)
def test_selection_consistency(full_length_searches):
    best, rows = full_length_searches[0]
    assert all(best.val_loglik >= r["val_loglik"] for r in rows if r["status"] == "ok")
    best_l1 = min(r["l1_total"] for r in rows if r["status"] == "ok")
    assert best.l1_total <= 1.15 * best_l1


@pytest.mark.slow
def test_bernstein_scores_below_rkhs_on_validation(full_length_searches):
    (rkhs, _), (bern, _) = full_length_searches
    assert bern.val_loglik < rkhs.val_loglik
