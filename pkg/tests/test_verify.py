"""Simulation-based equilibrium verification: deviation windows, the
dynamic-programming residual, the exponential reduction identity, and the
adjusted-reward consistency check."""

import numpy as np
import pytest

from drifteq import (ConstantPolicy, Lattice, OffsetPolicy, VerificationError,
                     WindowPolicy, adjusted_reward_consistency, dpp_residual,
                     export_policy, exponential_lq, hyperbolic_lq,
                     reduction_check, solve_bsde, solve_equilibrium,
                     solve_pde, spike_test)


@pytest.fixture(scope="module")
def exp_candidate():
    spec = exponential_lq(0.5)
    lat = Lattice(spec, 80, 81)
    return spec, export_policy(solve_equilibrium(lat))


# -- deviation policies --------------------------------------------------------

def test_window_policy_constant_mode():
    base = ConstantPolicy(0.2)
    dev = WindowPolicy(base, 0.3, 0.5, action=1.5)
    x = np.zeros(3)
    assert np.allclose(dev.act(0.1, x), 0.2)
    assert np.allclose(dev.act(0.3, x), 1.5)
    assert np.allclose(dev.act(0.49, x), 1.5)
    assert np.allclose(dev.act(0.5, x), 0.2)


def test_window_policy_offset_mode():
    base = ConstantPolicy(0.2)
    dev = WindowPolicy(base, 0.0, 0.25, offset=-0.3)
    x = np.zeros(2)
    assert np.allclose(dev.act(0.1, x), -0.1)
    assert np.allclose(dev.act(0.7, x), 0.2)


def test_offset_policy_shifts_everywhere():
    base = ConstantPolicy(0.2)
    off = OffsetPolicy(base, 0.5)
    assert np.allclose(off.act(0.4, np.zeros(2)), 0.7)


# -- spike test ----------------------------------------------------------------

def test_spike_accepts_lattice_equilibrium(exp_candidate):
    spec, pol = exp_candidate
    res = spike_test(spec, pol, times=(0.0, 0.5), widths=(0.1,), epsilon=0.05,
                     n_paths=4000, n_steps=80, seed=21)
    assert len(res.rows) == 2 * 1 * 5
    assert res.passed
    assert res.worst_gain <= 0.05
    d = res.describe()
    assert d["passed"] and d["n_rows"] == 10


def test_spike_rejects_corrupted_policy(exp_candidate):
    spec, pol = exp_candidate
    bad = OffsetPolicy(pol, 1.0)
    res = spike_test(spec, bad, times=(0.0,), widths=(0.2,), epsilon=0.05,
                     n_paths=4000, n_steps=80, seed=22)
    assert not res.passed
    excess = [(r["gain"] - r["threshold"]) / max(r["stderr"], 1e-300)
              for r in res.rows if not r["passed"]]
    assert len(excess) >= 1
    assert max(excess) > 3.0


# -- dynamic-programming residual ------------------------------------------------

def test_dpp_residual_passes_for_candidate(exp_candidate):
    spec, pol = exp_candidate
    out = dpp_residual(spec, pol, 0.0, spec.horizon / 2.0, n_outer=1500,
                       n_inner=24, n_steps=80, seed=5)
    assert out["passed"]
    assert out["residual"] <= 3.0 * out["stderr"] + 1e-12


def test_dpp_residual_rejects_skewed_value_table(exp_candidate):
    # a time-dependent corruption cannot cancel between the two sides
    spec, pol = exp_candidate
    lat_eq = solve_equilibrium(Lattice(spec, 80, 81))
    bad_fn = lambda t, xs: np.asarray(
        [lat_eq.value_at(t, xv) for xv in np.atleast_1d(xs)]) + 0.2 * t
    out = dpp_residual(spec, pol, 0.0, spec.horizon / 2.0, n_outer=1500,
                       n_inner=24, n_steps=80, seed=5, value_fn=bad_fn)
    assert not out["passed"]


# -- exponential reduction identity ----------------------------------------------

def test_reduction_check_shrinks_for_exponential_grid():
    # the identity holds for the continuous solution, so the measured gap is
    # discretization error and must shrink under refinement
    spec = exponential_lq(0.5)
    coarse = reduction_check(solve_pde(spec, 50, 51, n_s=51))
    fine = reduction_check(solve_pde(spec, 100, 101, n_s=101))
    assert fine < coarse
    assert fine < 2e-2


def test_reduction_check_detects_wrong_rate():
    spec = exponential_lq(0.5)
    sol = solve_pde(spec, 100, 101, n_s=26)
    ok = reduction_check(sol)
    wrong = reduction_check(sol, theta=1.0)
    assert wrong > 10.0 * ok


def test_reduction_check_requires_exponential():
    spec = hyperbolic_lq()
    sol = solve_pde(spec, 20, 21, n_s=6)
    with pytest.raises(VerificationError):
        reduction_check(sol)


def test_reduction_check_on_regression_solution():
    spec = exponential_lq(0.5)
    sol = solve_bsde(spec, 40, 8000, seed=4, degree=4, n_s=11, verbose=False)
    assert reduction_check(sol) < 2e-2


# -- adjusted classical reward ----------------------------------------------------

def test_adjusted_reward_consistency_exponential():
    spec = exponential_lq(0.5)
    eq = solve_equilibrium(Lattice(spec, 100, 101))
    pol = export_policy(eq)
    rep = adjusted_reward_consistency(spec, pol, eq, inner_paths=1000,
                                      n_sub_t=9, n_sub_x=13, n_inner_steps=60,
                                      seed=1)
    assert rep["gap"] < 0.03
    assert np.isfinite(rep["classical_value"])
    assert np.isfinite(rep["equilibrium_value"])
