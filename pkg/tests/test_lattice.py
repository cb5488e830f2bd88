"""Discrete lattice solver: stencil moment matching, agreement with classical
dynamic programming when the discount is exponential, and exact agreement with
brute-force equilibrium enumeration on a tiny instance."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drifteq import (ConfigurationError, ConstantVol, DiscountFunction,
                     Lattice, PolyDrift, PolyReward, PolyTerminal, ProblemSpec,
                     default_state_domain, export_policy, exponential_lq,
                     hyperbolic_lq, solve_classical, solve_equilibrium)

from oracles import classical_dp_dense, enumerate_micro_equilibria


def micro_problem():
    """Two-step, three-node, three-action instance small enough to enumerate
    every feedback policy exhaustively."""
    return ProblemSpec(
        horizon=1.0, x0=0.0, action_box=[(-2.0, 2.0)],
        sigma=ConstantVol(1.0),
        drift=PolyDrift([(1.0, 0, 0, 1)]),
        discount=DiscountFunction.hyperbolic(1.0),
        running_reward=PolyReward([(-1.0, 0, 0, 2), (-0.6, 0, 2, 0),
                                   (1.5, 0, 1, 1), (0.7, 0, 0, 1)]),
        terminal_reward=PolyTerminal([0.0, 0.5, 1.0]),
        label="micro",
    )


# -- stencil -----------------------------------------------------------------

def test_lattice_validation():
    spec = hyperbolic_lq()
    with pytest.raises(ConfigurationError):
        Lattice(spec, 10, 2)
    with pytest.raises(ConfigurationError):
        Lattice(spec, 0, 11)


def test_default_domain_covers_six_sigmas():
    spec = hyperbolic_lq()
    lo, hi = default_state_domain(spec)
    assert lo <= spec.x0 - 6.0 * np.sqrt(spec.horizon) + 1e-12
    assert hi >= spec.x0 + 6.0 * np.sqrt(spec.horizon) - 1e-12


@given(a=st.floats(-2.0, 2.0), i=st.integers(0, 39))
@settings(max_examples=60, deadline=None)
def test_stencil_probabilities_match_moments(a, i):
    spec = hyperbolic_lq()
    lat = Lattice(spec, 40, 61)
    actions = np.full(lat.n_x, a)
    p_dn, p_mid, p_up = lat.probabilities(i, actions)
    m, var, h = lat.moments(i, actions)
    assert np.all(p_dn >= -1e-12) and np.all(p_up >= -1e-12) and np.all(p_mid >= -1e-12)
    assert np.allclose(p_dn + p_mid + p_up, 1.0, atol=1e-12)
    #  first and second moments of the jump are matched exactly
    assert np.allclose(p_up * h - p_dn * h, m, atol=1e-12)
    assert np.allclose((p_up + p_dn) * h ** 2, var + m * m, atol=1e-12)


def test_gather_extrapolates_linearly():
    spec = hyperbolic_lq()
    lat = Lattice(spec, 10, 41)
    vals = 2.0 * lat.x_nodes + 1.0  # linear surface
    idx = np.array([-2, -1, 0, 40, 41, 43])
    got = lat.gather(vals, idx)
    x_ext = lat.x_nodes[0] + idx * lat.dx
    assert np.allclose(got, 2.0 * x_ext + 1.0, atol=1e-12)


# -- classical DP cross-checks ------------------------------------------------

def test_classical_dp_matches_dense_grid_oracle():
    spec = exponential_lq(0.5)
    lat = Lattice(spec, 30, 41)
    theta = spec.discount.params["theta"]
    factor = float(np.exp(-theta * lat.dt))
    reward_fn = lambda t, x, a: spec.running_reward.value(t, x, a)
    terminal = spec.terminal_reward.value(lat.x_nodes)
    vals, _ = solve_classical(lat, reward_fn, terminal, step_factor=factor,
                              n_actions=201)
    oracle_vals = classical_dp_dense(lat, factor, n_actions=201)
    assert np.max(np.abs(vals - oracle_vals)) < 1e-12


def test_exponential_equilibrium_collapses_to_classical():
    # with exponential discounting the game solution IS classical DP
    spec = exponential_lq(0.5)
    lat = Lattice(spec, 40, 41)
    theta = spec.discount.params["theta"]
    factor = float(np.exp(-theta * lat.dt))
    eq = solve_equilibrium(lat, n_actions=101)
    reward_fn = lambda t, x, a: spec.running_reward.value(t, x, a)
    terminal = spec.terminal_reward.value(lat.x_nodes)
    dp_vals, dp_pol = solve_classical(lat, reward_fn, terminal,
                                      step_factor=factor, n_actions=101)
    assert np.max(np.abs(eq.values - dp_vals)) < 1e-12
    assert np.max(np.abs(eq.policy_table - dp_pol)) < 1e-12


def test_hyperbolic_equilibrium_departs_from_naive_dp():
    # a one-step multiplicative surrogate cannot reproduce the game value
    spec = hyperbolic_lq()
    lat = Lattice(spec, 40, 41)
    factor = float(spec.discount.phi(lat.dt))
    eq = solve_equilibrium(lat, n_actions=101)
    reward_fn = lambda t, x, a: spec.running_reward.value(t, x, a)
    terminal = spec.terminal_reward.value(lat.x_nodes)
    dp_vals, _ = solve_classical(lat, reward_fn, terminal, step_factor=factor,
                                 n_actions=101)
    center = lat.n_x // 2
    assert abs(eq.values[0, center] - dp_vals[0, center]) > 1e-3


# -- equilibrium structure -----------------------------------------------------

def test_family_diagonal_equals_values():
    spec = hyperbolic_lq()
    lat = Lattice(spec, 24, 31)
    eq = solve_equilibrium(lat)
    # s-grid equals t-grid here, so the family diagonal is exact
    for k, s in enumerate(eq.s_nodes):
        i = int(round(s / lat.dt))
        assert np.allclose(eq.j_family[k, i], eq.values[i], atol=1e-12)
    # family is NaN strictly above the diagonal
    assert np.all(np.isnan(eq.j_family[-1, :-1]))


def test_family_terminal_row_is_discounted_terminal():
    spec = hyperbolic_lq()
    lat = Lattice(spec, 12, 21)
    eq = solve_equilibrium(lat)
    g = spec.terminal_reward.value(lat.x_nodes)
    for k, s in enumerate(eq.s_nodes):
        w = spec.discount.phi(spec.horizon - s)
        assert np.allclose(eq.j_family[k, -1], w * g, atol=1e-12)


def test_value_at_interpolates_nodes():
    spec = hyperbolic_lq()
    lat = Lattice(spec, 16, 21)
    eq = solve_equilibrium(lat)
    i, j = 4, 10
    got = eq.value_at(lat.t_nodes[i], lat.x_nodes[j])
    assert abs(got - eq.values[i, j]) < 1e-12


def test_export_policy_matches_table():
    spec = hyperbolic_lq()
    lat = Lattice(spec, 10, 31)
    eq = solve_equilibrium(lat)
    pol = export_policy(eq)
    i, j = 3, 7
    got = pol.act(lat.t_nodes[i], np.array([lat.x_nodes[j]]))
    assert abs(float(got) - eq.policy_table[i, j]) < 1e-12


def test_boundary_leak_is_small_on_wide_domain():
    spec = hyperbolic_lq()
    lat = Lattice(spec, 50, 101)
    eq = solve_equilibrium(lat)
    assert eq.max_boundary_leak < 1e-3


def test_equilibrium_deterministic():
    spec = hyperbolic_lq()
    lat = Lattice(spec, 20, 31)
    a = solve_equilibrium(lat)
    b = solve_equilibrium(lat)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.policy_table, b.policy_table)


# -- exhaustive enumeration on the micro instance ------------------------------

def test_micro_equilibrium_matches_exhaustive_enumeration():
    spec = micro_problem()
    lat = Lattice(spec, n_steps=2, n_x=3, x_min=-1.3, x_max=1.3)
    eq = solve_equilibrium(lat, n_actions=3)
    grid, found = enumerate_micro_equilibria(lat, n_actions=3)
    assert len(found) == 1
    pol_idx, diag = found[0]
    assert np.max(np.abs(diag - eq.values)) < 1e-12
    assert np.max(np.abs(grid[pol_idx] - eq.policy_table[:2])) < 1e-12
    # the instance is informative: the equilibrium policy is not constant
    assert len(np.unique(grid[pol_idx])) > 1
