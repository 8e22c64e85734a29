import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rkhs_hawkes.errors import ShapeError
from rkhs_hawkes.events import EventData
from rkhs_hawkes.kernelmath import KernelConfig
from rkhs_hawkes.model import LinkSpec, RkhsParams
from rkhs_hawkes.objective import (ObjectiveConfig, exact_neg_log_likelihood, link_pair, objective_gradient,
                                   objective_value, pack, unpack, value_and_grad)
from rkhs_hawkes.precompute import build_matrices

from oracles import direct_objective, phi_pair, r_closed, random_instance


def config_for(theta, m, eta=0.7, criterion="mle", omega=10.0):
    mats = build_matrices(theta.anchor_events, theta.cfg, m)
    return ObjectiveConfig(LinkSpec(omega, criterion), eta, mats)


def direct(theta, m, eta=0.7, criterion="mle", omega=10.0):
    ev = theta.anchor_events
    phi1, phi2 = phi_pair(criterion, omega)
    r_at = lambda x, l: r_closed(x, ev.horizon, ev.times[l], theta.cfg.gamma, theta.cfg.support)
    return direct_objective(theta, m, eta, phi1, phi2, r_at)


@pytest.mark.parametrize("criterion", ["mle", "ls"])
def test_link_pair_at_zero(criterion):
    phi1, phi2, _, _ = link_pair(LinkSpec(100.0, criterion))
    s = math.log(2) / 100
    if criterion == "mle":
        assert phi1(0.0) == pytest.approx(s, rel=1e-15)
        assert phi2(0.0) == pytest.approx(math.log(s), rel=1e-15)
    else:
        assert phi1(0.0) == pytest.approx(s * s, rel=1e-15)
        assert phi2(0.0) == pytest.approx(2 * s, rel=1e-15)


@pytest.mark.parametrize("criterion", ["mle", "ls"])
@pytest.mark.parametrize("omega", [1.0, 10.0, 100.0])
def test_link_derivatives_fd(criterion, omega):
    phi1, phi2, d1, d2 = link_pair(LinkSpec(omega, criterion))
    x = np.random.default_rng(3).uniform(-1, 1, 20)
    h = 1e-6
    np.testing.assert_allclose(d1(x), (phi1(x + h) - phi1(x - h)) / (2 * h), rtol=1e-5, atol=1e-8)
    np.testing.assert_allclose(d2(x), (phi2(x + h) - phi2(x - h)) / (2 * h), rtol=1e-5, atol=1e-8)


def test_zero_parameters_closed_form():
    ev = EventData([[0.5, 1.5, 2.5], [1.0]], 4.0)
    theta = RkhsParams.zeros(ev, KernelConfig(10.0, 1.0))
    cfg = config_for(theta, 20, omega=100.0)
    s = math.log(2) / 100
    expected = 2 * 4.0 * s - 4 * math.log(s)
    assert objective_value(theta, cfg) == pytest.approx(expected, rel=1e-13)
    grad = objective_gradient(theta, cfg)
    # the regularization gradient vanishes at alpha = 0; what is left is the data term only
    cfg_big = ObjectiveConfig(cfg.link, 1e6, cfg.matrices)
    big = objective_gradient(theta, cfg_big)
    for j in range(2):
        for l in range(2):
            np.testing.assert_array_equal(grad.alpha[j][l], big.alpha[j][l])


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("criterion", ["mle", "ls"])
def test_matrix_form_matches_direct_sum(seed, criterion):
    rng = np.random.default_rng(100 + seed)
    theta = random_instance(rng, max_events=8)
    m = int(rng.integers(5, 30))
    got = objective_value(theta, config_for(theta, m, criterion=criterion))
    want = direct(theta, m, criterion=criterion)
    assert abs(got - want) <= 1e-8 * (1 + abs(want))


def test_eta_linearity():
    theta = random_instance(np.random.default_rng(5))
    m = 25
    a = objective_value(theta, config_for(theta, m, eta=1.0))
    b = objective_value(theta, config_for(theta, m, eta=2.0))
    base = objective_value(theta, config_for(theta, m, eta=1e-300))
    assert b - a == pytest.approx(a - base, rel=1e-10)
    assert b - a > 0


def fd_gradient(x, cfg, rel=1e-5):
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (value_and_grad(xp, cfg)[0] - value_and_grad(xm, cfg)[0]) / (2 * h)
    return g


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("criterion", ["mle", "ls"])
def test_gradient_matches_finite_differences(seed, criterion):
    rng = np.random.default_rng(200 + seed)
    theta = random_instance(rng, max_events=10)
    cfg = config_for(theta, 30, criterion=criterion)
    x = pack(theta)
    _, g = value_and_grad(x, cfg)
    fd = fd_gradient(x, cfg)
    assert np.linalg.norm(g - fd) <= 1e-5 * max(1.0, np.linalg.norm(fd))


def test_structured_gradient_agrees_with_packed():
    theta = random_instance(np.random.default_rng(9))
    cfg = config_for(theta, 20)
    grad = objective_gradient(theta, cfg)
    _, flat = value_and_grad(pack(theta), cfg)
    rebuilt = pack(RkhsParams(np.zeros(theta.dims), grad.alpha, grad.b, theta.cfg, theta.anchor_events))
    rebuilt[[0]] = 0
    np.testing.assert_allclose(np.concatenate([[g] for g in grad.mu]), flat[np.cumsum([0] + [
        1 + theta.dims * (int(n) + 1) + theta.dims for n in theta.anchor_events.counts[:-1]])], rtol=1e-14)


def test_mle_and_ls_gradients_differ():
    theta = random_instance(np.random.default_rng(4))
    x = pack(theta)
    g1 = value_and_grad(x, config_for(theta, 20, criterion="mle"))[1]
    g2 = value_and_grad(x, config_for(theta, 20, criterion="ls"))[1]
    assert not np.allclose(g1, g2)


def test_pack_unpack_roundtrip():
    theta = random_instance(np.random.default_rng(2))
    back = unpack(pack(theta), theta)
    np.testing.assert_array_equal(pack(back), pack(theta))
    with pytest.raises(ShapeError):
        unpack(pack(theta)[:-1], theta)


def test_shape_mismatch_raises():
    theta = random_instance(np.random.default_rng(7))
    other = RkhsParams.zeros(EventData([[1.0, 2.0]] * 4, 3.0), theta.cfg)
    cfg = config_for(theta, 10)
    with pytest.raises(ShapeError):
        objective_value(other, cfg)
    mismatched = RkhsParams(theta.mu, theta.alpha, theta.b, KernelConfig(theta.cfg.gamma * 2, theta.cfg.support),
                            theta.anchor_events)
    with pytest.raises(ShapeError):
        objective_gradient(mismatched, cfg)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), t=st.floats(0.0, 1.0))
def test_mle_objective_midpoint_convex(seed, t):
    rng = np.random.default_rng(seed)
    theta = random_instance(rng, max_events=8)
    cfg = config_for(theta, 20, omega=float(rng.choice([1.0, 10.0, 100.0])))
    x = pack(theta)
    delta = rng.normal(size=x.size)
    delta[0] = 0.0
    f = lambda s: value_and_grad(x + s * delta, cfg)[0]
    a, b = -t, 1.0 - t
    assert f((a + b) / 2) <= (f(a) + f(b)) / 2 + 1e-10 * (1 + abs(f(a)) + abs(f(b)))


def test_exact_nll_homogeneous_poisson():
    ev = EventData([[0.5, 1.0, 3.0], [2.0]], 4.0)
    theta = RkhsParams.zeros(ev, KernelConfig(1.0, 1.0), mu=[0.8, 0.8])
    value, floored = exact_neg_log_likelihood(theta, ev)
    assert value == pytest.approx(2 * 0.8 * 4.0 - 4 * math.log(0.8), rel=1e-12)
    assert floored == 0


def test_exact_nll_floor_counts():
    ev = EventData([[1.0, 1.2]], 4.0)
    alpha = [[np.zeros(3)]]
    theta = RkhsParams([0.5], alpha, [[-1.0]], KernelConfig(1.0, 1.0), ev)
    value, floored = exact_neg_log_likelihood(theta, ev)
    assert floored == 1
    assert value > -math.log(1e-10)


def test_exact_nll_grid_refinement():
    theta = random_instance(np.random.default_rng(12), max_events=10)
    ev = theta.anchor_events
    coarse, _ = exact_neg_log_likelihood(theta, ev, 1000)
    fine, _ = exact_neg_log_likelihood(theta, ev, 2000)
    assert fine == pytest.approx(coarse, rel=0.01)


def test_objective_approaches_exact_likelihood():
    """Gap to the exact likelihood shrinks along the Riemann grid and the softplus sharpness.

    The left-rule error changes sign as nodes cross the jumps at the support
    end, so along the grid we check the first-order envelope rather than
    step-by-step decrease.
    """
    ev = EventData([[0.7, 2.1, 3.3, 5.0], [1.4, 4.2]], 6.0)
    theta = RkhsParams([0.6, 0.5], [[np.full(5, 0.05)] * 2, [np.full(3, -0.05)] * 2],
                       [[0.1, 0.05], [0.02, 0.1]], KernelConfig(1.0, 1.0), ev)
    exact, floored = exact_neg_log_likelihood(theta, ev, 200_000)
    assert floored == 0
    sizes = (50, 100, 200, 400, 800)
    gaps = [abs(exact - direct(theta, m, eta=1e-300, omega=100.0)) for m in sizes]
    assert all(g <= 2 * gaps[0] * sizes[0] / m for g, m in zip(gaps, sizes))
    assert gaps[-1] < gaps[0] / 10
    gaps = [abs(exact - direct(theta, 800, eta=1e-300, omega=w)) for w in (1.0, 10.0, 100.0)]
    assert gaps[2] <= gaps[1] <= gaps[0]
