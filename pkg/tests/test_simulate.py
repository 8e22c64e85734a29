import math
import pickle

import numpy as np
import pytest
from scipy import stats

from rkhs_hawkes.errors import ConfigError, DomainError, SimulationError
from rkhs_hawkes.events import EventData
from rkhs_hawkes.simulate import (GroundTruthModel, builtin_kernels, ks_exponential_pvalue, paper3d_spec,
                                  simulate_thinning, time_rescaling_residuals)


def zero(t):
    return np.zeros(np.shape(t))


def poisson_model(mu, d=1):
    return GroundTruthModel([mu] * d, [[zero] * d for _ in range(d)], 1.0)


@pytest.fixture(scope="module")
def truth():
    return builtin_kernels("paper3d")


def test_paper3d_values(truth):
    assert truth.interaction_at(0, 0, 0.0) == -1.0
    assert truth.interaction_at(0, 1, 1.0) == 1.0
    assert truth.interaction_at(1, 2, 3.0) == -1.0
    assert truth.interaction_at(1, 0, 0.2) == pytest.approx(2 ** -1.0)
    assert truth.interaction_at(2, 1, 0.0) == pytest.approx(1.0)
    assert truth.interaction_at(0, 0, 0.5) == pytest.approx(1.0)
    assert truth.interaction_at(1, 1, 1.5) == pytest.approx(math.exp(-1.0))
    np.testing.assert_array_equal(truth.mu, [0.05] * 3)
    assert truth.support == 5.0


def test_spec_file_matches_builtin(truth):
    from_spec = GroundTruthModel.from_spec(paper3d_spec())
    t = np.linspace(0, 5, 4001)
    for j in range(3):
        for l in range(3):
            np.testing.assert_allclose(from_spec.interaction_at(j, l, t), truth.interaction_at(j, l, t),
                                       rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(from_spec.sup_bounds, truth.sup_bounds, rtol=1e-12)


def test_sup_bounds_dominate(truth):
    t = np.linspace(0, 5, 100_001)
    for j in range(3):
        for l in range(3):
            assert truth.sup_bounds[j, l] >= max(0.0, truth.interaction_at(j, l, t).max())


def test_sup_bound_validation():
    with pytest.raises(ConfigError):
        GroundTruthModel([1.0], [[lambda t: np.ones(np.shape(t))]], 1.0, sup_bounds=[[0.5]])


def test_unknown_model():
    with pytest.raises(ConfigError) as info:
        builtin_kernels("nope")
    assert "paper3d" in str(info.value)


def test_domain(truth):
    with pytest.raises(DomainError):
        truth.interaction_at(0, 0, 5.5)
    with pytest.raises(DomainError):
        truth.interaction_at(0, 0, -0.1)


def test_pickle_roundtrip(truth):
    back = pickle.loads(pickle.dumps(truth))
    t = np.linspace(0, 5, 11)
    np.testing.assert_array_equal(back.interaction_at(2, 1, t), truth.interaction_at(2, 1, t))
    spec_model = pickle.loads(pickle.dumps(GroundTruthModel.from_spec(paper3d_spec())))
    np.testing.assert_array_equal(spec_model.interaction_at(2, 1, t), truth.interaction_at(2, 1, t))


def test_poisson_count_and_interarrivals():
    ev = simulate_thinning(poisson_model(2.0), 1000.0, seed=3)
    n = ev.total
    assert abs(n - 2000) <= 3 * math.sqrt(2000)
    gaps = np.diff(np.concatenate([[0.0], ev.times[0]]))
    assert stats.kstest(gaps, "expon", args=(0, 0.5)).pvalue > 0.01


def test_strong_inhibition_reduces_count():
    def g(t):
        return np.where(np.asarray(t) <= 1.0, -5.0, 0.0)

    model = GroundTruthModel([1.0], [[g]], 1.0)
    ev = simulate_thinning(model, 1000.0, seed=1)
    assert ev.total < stats.poisson.ppf(0.01, 1000.0)


def test_determinism(truth):
    assert simulate_thinning(truth, 200.0, seed=9) == simulate_thinning(truth, 200.0, seed=9)
    assert simulate_thinning(truth, 200.0, seed=9) != simulate_thinning(truth, 200.0, seed=10)


def test_prefix_property(truth):
    from rkhs_hawkes.events import restrict_window
    long = simulate_thinning(truth, 400.0, seed=2)
    assert simulate_thinning(truth, 150.0, seed=2) == restrict_window(long, 0.0, 150.0)


def test_bad_bound_raises():
    model = GroundTruthModel([1.0], [[lambda t: np.full(np.shape(t), 2.0)]], 1.0)
    model.sup_bounds = np.array([[0.1]])
    with pytest.raises(SimulationError):
        simulate_thinning(model, 100.0, seed=0)


def test_output_valid(truth):
    ev = simulate_thinning(truth, 300.0, burn_in=0.0, seed=5)
    assert isinstance(ev, EventData) and ev.horizon == 300.0
    for t in ev.times:
        assert np.all(np.diff(t) > 0) and np.all((t > 0) & (t <= 300.0))


def test_residuals_homogeneous():
    ev = EventData([[0.5, 1.5, 4.0]], 5.0)
    res = time_rescaling_residuals(ev, poisson_model(0.7))
    np.testing.assert_allclose(res[0], 0.7 * np.array([0.5, 1.0, 2.5]), rtol=1e-12)


def test_ks_true_model_passes(truth):
    ev = simulate_thinning(truth, 2000.0, seed=11)
    assert ks_exponential_pvalue(time_rescaling_residuals(ev, truth)) > 0.01


def test_ks_wrong_model_fails(truth):
    ev = simulate_thinning(truth, 2000.0, seed=11)
    wrong = GroundTruthModel(truth.mu * 10, truth.kernels, truth.support)
    assert ks_exponential_pvalue(time_rescaling_residuals(ev, wrong)) < 1e-6


def test_event_rate_reproducible_across_seeds(truth):
    def mean_rate(seeds):
        return np.mean([simulate_thinning(truth, 2000.0, seed=s).total / 2000.0 for s in seeds])

    first, second = mean_rate(range(10)), mean_rate(range(10, 20))
    assert abs(first - second) <= 0.1 * first


def test_curve_grammar():
    from rkhs_hawkes.curves import build_curve
    t = np.array([0.0, 0.5, 1.0, 2.0])
    np.testing.assert_allclose(build_curve(0.3)(t), 0.3)
    np.testing.assert_allclose(build_curve({"poly": [1, 0, 2]})(t), 1 + 2 * t ** 2)
    np.testing.assert_allclose(build_curve({"exp": {"scale": 2, "rate": 3, "shift": 1}})(t), 2 * np.exp(-3 * (t - 1)))
    np.testing.assert_allclose(build_curve({"shift": {"by": 1, "curve": {"gauss": {"width": 2}}}})(t),
                               np.exp(-2 * (t - 1) ** 2))
    np.testing.assert_allclose(build_curve({"window": {"lo": 0.5, "hi": 1.0, "curve": 1}})(t), [0, 0, 1, 0])
    np.testing.assert_allclose(build_curve({"window": {"lo": 0.5, "lo_closed": True, "curve": 1}})(t), [0, 1, 1, 1])
    np.testing.assert_allclose(build_curve({"cosdamp": {"offset": 1, "freq": math.pi, "rate": 1}})(t),
                               (1 + np.cos(math.pi * t)) * np.exp(-t))
    for bad in ({"spline": 1}, {"exp": {"scale": 1}}, {"sum": []}, {"a": 1, "b": 2}):
        with pytest.raises(ConfigError):
            build_curve(bad)
