"""Path simulation and Monte Carlo reward estimation: determinism of the
seeded streams, the Euler update identity, floors/clamps, and exactness on
rewards with known values."""

import os

import numpy as np
import pytest

from drifteq import (ConfigurationError, ConstantPolicy, DiscountFunction,
                     DomainError, PolyDrift, PolyReward, PolyTerminal,
                     ConstantVol, ProblemSpec, TimeGrid, crra_consumption,
                     estimate_reward, estimate_type_derivative, hyperbolic_lq,
                     lq_problem, reward_batch, simulate_paths, sub_rng,
                     write_ensemble_csv)


def _unit_reward_problem(discount=None):
    """dX = a dt + dW with f = 1 and g = 0: J(t, t, x) = integral of phi."""
    return ProblemSpec(
        horizon=1.0, x0=0.0, action_box=[(-1.0, 1.0)],
        sigma=ConstantVol(1.0),
        drift=PolyDrift([(1.0, 0, 0, 1)]),
        discount=discount or DiscountFunction.exponential(0.0),
        running_reward=PolyReward([(1.0, 0, 0, 0)]),
        terminal_reward=PolyTerminal([0.0]),
        label="unit_reward",
    )


# -- seeded sub-streams ------------------------------------------------------

def test_sub_rng_deterministic_and_tag_sensitive():
    a = sub_rng(7, "paths", 3).standard_normal(5)
    b = sub_rng(7, "paths", 3).standard_normal(5)
    c = sub_rng(7, "paths", 4).standard_normal(5)
    d = sub_rng(8, "paths", 3).standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_sub_rng_string_tags_stable():
    a = sub_rng(0, "inner").integers(0, 1 << 30, 4)
    b = sub_rng(0, "inner").integers(0, 1 << 30, 4)
    assert np.array_equal(a, b)


# -- simulation --------------------------------------------------------------

def test_time_grid_endpoints():
    grid = TimeGrid(0.25, 1.0, 6)
    assert grid.nodes[0] == 0.25
    assert grid.nodes[-1] == 1.0
    assert len(grid.nodes) == 7
    with pytest.raises(ConfigurationError):
        TimeGrid(0.0, 1.0, 0)


def test_simulate_shapes_and_reproducibility():
    spec = hyperbolic_lq()
    grid = TimeGrid(0.0, spec.horizon, 8)
    pol = ConstantPolicy(0.3)
    ens1 = simulate_paths(spec, pol, grid, 50, seed=11)
    ens2 = simulate_paths(spec, pol, grid, 50, seed=11)
    ens3 = simulate_paths(spec, pol, grid, 50, seed=12)
    assert ens1.states.shape == (50, 9)
    assert ens1.actions.shape == (50, 8)
    assert ens1.increments.shape == (50, 8)
    assert np.array_equal(ens1.states, ens2.states)
    assert not np.array_equal(ens1.states, ens3.states)


def test_euler_update_identity():
    # X[i+1] - X[i] must equal sigma * (b dt + dW) exactly, per stored arrays
    spec = hyperbolic_lq()
    grid = TimeGrid(0.0, spec.horizon, 10)
    ens = simulate_paths(spec, ConstantPolicy(0.5), grid, 30, seed=5)
    dt = grid.dt
    for i in range(10):
        x = ens.states[:, i]
        a = ens.actions[:, i]
        drift = spec.drift.value(grid.nodes[i], x, a)
        sig = spec.sigma.sigma(grid.nodes[i], x)
        step = sig * (drift * dt + ens.increments[:, i])
        assert np.allclose(ens.states[:, i + 1], x + step, atol=1e-12)


def test_increment_moments():
    spec = hyperbolic_lq()
    grid = TimeGrid(0.0, spec.horizon, 4)
    ens = simulate_paths(spec, ConstantPolicy(0.0), grid, 40000, seed=1)
    dt = spec.horizon / 4
    dw = ens.increments
    assert abs(dw.mean()) < 4.0 * np.sqrt(dt / dw.size)
    assert abs(dw.var() - dt) < 0.01 * dt


def test_actions_clamped_to_box():
    spec = hyperbolic_lq()
    grid = TimeGrid(0.0, spec.horizon, 6)
    ens = simulate_paths(spec, ConstantPolicy(25.0), grid, 20, seed=3)
    lo, hi = spec.action_box[0]
    assert np.all(ens.actions >= lo - 1e-15)
    assert np.all(ens.actions <= hi + 1e-15)


def test_state_floor_respected():
    spec = crra_consumption(DiscountFunction.hyperbolic(1.0))
    grid = TimeGrid(0.0, spec.horizon, 40)
    # consume at the top of the box from tiny wealth: floor must catch paths
    ens = simulate_paths(spec, ConstantPolicy(4.0), grid, 200, seed=9,
                         x_init=2.0 * spec.state_floor)
    assert np.all(ens.states >= spec.state_floor - 1e-15)


def test_ensemble_csv_row_count(tmp_path):
    spec = hyperbolic_lq()
    grid = TimeGrid(0.0, spec.horizon, 3)
    ens = simulate_paths(spec, ConstantPolicy(0.0), grid, 4, seed=2)
    path = os.path.join(tmp_path, "paths.csv")
    write_ensemble_csv(ens, path)
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip()]
    assert len(lines) == 1 + 4 * 4  # header + paths * nodes


# -- reward estimation -------------------------------------------------------

def test_unit_reward_is_exact_without_discounting():
    # f = 1, g = 0, phi = 1: every path accrues exactly T
    spec = _unit_reward_problem()
    mean, stderr = estimate_reward(spec, ConstantPolicy(0.0), 0.0, 0.0, 0.0,
                                   n_paths=64, n_steps=16, seed=4)
    assert abs(mean - spec.horizon) < 1e-12
    assert stderr < 1e-12


def test_unit_reward_matches_kernel_quadrature():
    # with discounting the total is the left-endpoint quadrature of phi
    disc = DiscountFunction.hyperbolic(1.0)
    spec = _unit_reward_problem(disc)
    n = 20
    dt = spec.horizon / n
    t_nodes = np.linspace(0.0, spec.horizon, n + 1)
    expected = float(np.sum(disc.phi(t_nodes[:-1]) * dt))
    mean, stderr = estimate_reward(spec, ConstantPolicy(0.0), 0.0, 0.0, 0.0,
                                   n_paths=32, n_steps=n, seed=4)
    assert abs(mean - expected) < 1e-12
    assert stderr < 1e-12


def test_earlier_self_weighs_reward_less():
    # phi decreasing and f >= 0: J(s, t, x) <= J(t, t, x) for s < t
    disc = DiscountFunction.hyperbolic(1.0)
    spec = _unit_reward_problem(disc)
    late, _ = estimate_reward(spec, ConstantPolicy(0.0), 0.5, 0.5, 0.0,
                              n_paths=16, n_steps=8, seed=6)
    early, _ = estimate_reward(spec, ConstantPolicy(0.0), 0.0, 0.5, 0.0,
                               n_paths=16, n_steps=8, seed=6)
    assert early < late


def test_reward_domain_validation():
    spec = _unit_reward_problem()
    with pytest.raises(DomainError):
        estimate_reward(spec, ConstantPolicy(0.0), 0.5, 0.25, 0.0,
                        n_paths=8, n_steps=4, seed=0)
    with pytest.raises(DomainError):
        estimate_reward(spec, ConstantPolicy(0.0), -0.1, 0.5, 0.0,
                        n_paths=8, n_steps=4, seed=0)


def test_reward_batch_matches_pointwise():
    spec = hyperbolic_lq()
    starts = np.array([-0.5, 0.0, 0.5])
    vals = reward_batch(spec, ConstantPolicy(0.1), 0.5, starts,
                        inner_paths=2000, n_steps=20, seed=13)
    assert vals.shape == (3,)
    assert np.all(np.isfinite(vals))
    # running reward -x^2 - a^2: the centered start dominates the shifted ones
    assert vals[1] >= max(vals[0], vals[2])


def test_type_derivative_sign_for_exponential():
    # d/ds phi(t-s) = theta phi > 0 here, f = 1 > 0, so the sensitivity is > 0
    disc = DiscountFunction.exponential(0.5)
    spec = _unit_reward_problem(disc)
    val, err = estimate_type_derivative(spec, ConstantPolicy(0.0), 0.0, 0.0, 0.0,
                                        n_paths=64, n_steps=16, seed=8)
    assert val > 0.0
    assert err < 1e-12  # deterministic integrand for this problem
