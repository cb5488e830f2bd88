"""Problem descriptors: discount functions, reward/drift terms, and the
pointwise Hamiltonian maximizer (checked against a dense action grid)."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drifteq import (ConfigurationError, ConstantVol, DiscountFunction,
                     DomainError, LinearVol, PolyDrift, PolyReward,
                     PolyTerminal, ProblemSpec, crra_consumption, hamiltonian,
                     hamiltonian_sup, hyperbolic_lq, lq_problem, maximizer)

from oracles import grid_action_max


# -- discount functions ------------------------------------------------------

DISCOUNTS = [
    DiscountFunction.exponential(0.5),
    DiscountFunction.exponential(0.0),
    DiscountFunction.hyperbolic(1.0),
    DiscountFunction.hyperbolic(0.3),
    DiscountFunction.generalized_hyperbolic(0.8, 1.7),
    DiscountFunction.sum_of_exponentials([(0.4, 0.1), (0.6, 2.0)]),
]


@pytest.mark.parametrize("disc", DISCOUNTS)
def test_discount_normalized_positive_decreasing(disc):
    tau = np.linspace(0.0, 3.0, 301)
    vals = disc.phi(tau)
    assert abs(disc.phi(0.0) - 1.0) < 1e-14
    assert np.all(vals > 0.0)
    assert np.all(np.diff(vals) <= 1e-14)


@pytest.mark.parametrize("disc", DISCOUNTS)
def test_dphi_matches_finite_difference(disc):
    rng = np.random.default_rng(0)
    for _ in range(20):
        tau = rng.uniform(0.01, 2.0)
        h = 1e-6
        fd = (disc.phi(tau + h) - disc.phi(tau - h)) / (2.0 * h)
        assert abs(disc.dphi(tau) - fd) < 1e-6 * (1.0 + abs(fd))


@pytest.mark.parametrize("disc", DISCOUNTS)
def test_ds_kernel_matches_finite_difference(disc):
    # the reward weight is w(s, t) = phi(t - s), so d/ds w = -phi'(t - s)
    spec = lq_problem(disc)
    rng = np.random.default_rng(1)
    for _ in range(10):
        s = rng.uniform(0.0, 0.9)
        t = s + rng.uniform(0.01, 1.0 - s)
        h = 1e-6
        fd = (spec.kernel(s + h, t) - spec.kernel(s - h, t)) / (2.0 * h)
        assert abs(spec.ds_kernel(s, t) - fd) < 1e-6 * (1.0 + abs(fd))


def test_exponential_and_hyperbolic_literals():
    assert abs(DiscountFunction.exponential(0.5).phi(1.0) - np.exp(-0.5)) < 1e-15
    assert abs(DiscountFunction.hyperbolic(1.0).phi(1.0) - 0.5) < 1e-15
    assert abs(DiscountFunction.generalized_hyperbolic(1.0, 2.0).phi(1.0) - 0.25) < 1e-15


def test_kernel_is_phi_of_gap():
    disc = DiscountFunction.hyperbolic(0.7)
    spec = lq_problem(disc)
    s, t = 0.3, 0.9
    assert abs(spec.kernel(s, t) - disc.phi(t - s)) < 1e-15


def test_hyperbolic_domain_error_below_pole():
    disc = DiscountFunction.hyperbolic(2.0)
    with pytest.raises(DomainError):
        disc.phi(-0.6)


def test_discount_validation():
    with pytest.raises(ConfigurationError):
        DiscountFunction.exponential(-0.1)
    with pytest.raises(ConfigurationError):
        DiscountFunction.hyperbolic(0.0)
    with pytest.raises(ConfigurationError):
        DiscountFunction.sum_of_exponentials([(0.5, 0.1), (0.6, 1.0)])


@given(theta=st.floats(0.05, 3.0), tau=st.floats(0.0, 2.0))
@settings(max_examples=50, deadline=None)
def test_exponential_semigroup_property(theta, tau):
    disc = DiscountFunction.exponential(theta)
    half = disc.phi(tau / 2.0)
    assert abs(disc.phi(tau) - half * half) < 1e-12


# -- polynomial descriptors --------------------------------------------------

def test_poly_reward_evaluates_monomials():
    # f(t, x, a) = 2 t x^2 - a^2 + 3
    rew = PolyReward([(2.0, 1, 2, 0), (-1.0, 0, 0, 2), (3.0, 0, 0, 0)])
    t, x, a = 0.5, np.array([1.0, -2.0]), np.array([0.5, 1.0])
    want = 2.0 * t * x ** 2 - a ** 2 + 3.0
    assert np.allclose(rew.value(t, x, a), want, atol=1e-14)


def test_poly_drift_action_profile_is_linear_split():
    drift = PolyDrift([(1.5, 0, 1, 0), (-2.0, 0, 0, 1), (0.25, 1, 0, 1)])
    t = 0.75
    x = np.linspace(-1.0, 1.0, 7)
    b0, b1 = drift.action_profile(t, x)
    for a in (-1.0, 0.0, 2.0):
        assert np.allclose(drift.value(t, x, a), b0 + b1 * a, atol=1e-13)


def test_poly_terminal_coefficients():
    g = PolyTerminal([1.0, 0.0, 2.0])
    x = np.array([-1.0, 0.5, 3.0])
    assert np.allclose(g.value(x), 1.0 + 2.0 * x ** 2, atol=1e-14)


def test_volatility_descriptors():
    assert ConstantVol(0.4).sigma(0.3, 1.7) == 0.4
    lv = LinearVol(0.1, 0.3, floor=0.05)
    x = np.array([-10.0, 0.0, 2.0])
    vals = lv.sigma(0.0, x)
    assert np.all(vals >= 0.05)
    assert abs(vals[2] - (0.1 + 0.3 * 2.0)) < 1e-14
    with pytest.raises(ConfigurationError):
        ConstantVol(-1.0)


# -- problem validation ------------------------------------------------------

def test_problem_spec_validation():
    ok = lq_problem(DiscountFunction.exponential(0.5))
    assert ok.horizon == 1.0
    with pytest.raises(ConfigurationError):
        ProblemSpec(horizon=-1.0, x0=0.0, action_box=[(-1, 1)],
                    sigma=ConstantVol(1.0), drift=PolyDrift([(1.0, 0, 0, 1)]),
                    discount=DiscountFunction.exponential(0.5),
                    running_reward=PolyReward([(1.0, 0, 0, 0)]),
                    terminal_reward=PolyTerminal([0.0]))
    with pytest.raises(ConfigurationError):
        ProblemSpec(horizon=1.0, x0=0.0, action_box=[(1.0, -1.0)],
                    sigma=ConstantVol(1.0), drift=PolyDrift([(1.0, 0, 0, 1)]),
                    discount=DiscountFunction.exponential(0.5),
                    running_reward=PolyReward([(1.0, 0, 0, 0)]),
                    terminal_reward=PolyTerminal([0.0]))


def test_builtin_problems_well_formed():
    for spec in (hyperbolic_lq(), crra_consumption(DiscountFunction.hyperbolic(1.0))):
        assert spec.horizon > 0
        lo, hi = spec.action_box[0]
        assert lo < hi
        assert np.isfinite(spec.terminal_reward.value(np.array([spec.x0]))).all()


def test_state_floor_recorded():
    spec = crra_consumption(DiscountFunction.exponential(0.5))
    assert spec.state_floor is not None and spec.state_floor > 0.0


# -- Hamiltonian maximizer ---------------------------------------------------

def test_hamiltonian_matches_direct_formula():
    spec = hyperbolic_lq()
    t, x, a, z = 0.25, 0.7, 0.5, -1.2
    want = (-(a ** 2) - x ** 2) + a * 1.0 * z
    assert abs(hamiltonian(spec, t, x, z, a) - want) < 1e-14


@given(x=st.floats(-3.0, 3.0), z=st.floats(-6.0, 6.0), t=st.floats(0.0, 0.99))
@settings(max_examples=60, deadline=None)
def test_maximizer_beats_dense_grid_lq(x, z, t):
    spec = hyperbolic_lq()
    best_val, _ = grid_action_max(spec, t, x, z)
    a_star = maximizer(spec, t, x, z)
    lo, hi = spec.action_box[0]
    assert lo <= a_star <= hi
    got = hamiltonian(spec, t, x, z, a_star)
    assert got >= best_val - 1e-9


@given(x=st.floats(0.05, 4.0), z=st.floats(-8.0, 8.0))
@settings(max_examples=60, deadline=None)
def test_maximizer_beats_dense_grid_consumption(x, z):
    spec = crra_consumption(DiscountFunction.hyperbolic(1.0))
    t = 0.5
    best_val, _ = grid_action_max(spec, t, x, z)
    a_star = maximizer(spec, t, x, z)
    got = hamiltonian(spec, t, x, z, a_star)
    assert got >= best_val - 1e-7 * (1.0 + abs(best_val))


def test_hamiltonian_sup_consistent_with_maximizer():
    spec = hyperbolic_lq()
    x = np.linspace(-2.0, 2.0, 9)
    z = np.linspace(-3.0, 3.0, 9)
    val, a_star = hamiltonian_sup(spec, 0.3, x, z, u=0.25)
    assert np.allclose(val, hamiltonian(spec, 0.3, x, z, a_star) - 0.25, atol=1e-12)


def test_maximizer_clamps_to_action_box():
    spec = hyperbolic_lq()
    lo, hi = spec.action_box[0]
    # huge slope pushes the unconstrained optimum far beyond the box
    assert maximizer(spec, 0.0, 0.0, 100.0) == hi
    assert maximizer(spec, 0.0, 0.0, -100.0) == lo
