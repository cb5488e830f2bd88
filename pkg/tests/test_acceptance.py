"""Acceptance suite: nine end-to-end criteria covering the three solver
routes, the verification tools, the consumption benchmark, and determinism.
Each test records one PASS/FAIL line that the shared conftest echoes in the
terminal summary, so the run log always shows the per-criterion outcome."""

import json
import os
import time

import numpy as np
import pytest

from drifteq import (DiscountFunction, Lattice, OffsetPolicy,
                     crra_consumption, dpp_residual, exponential_lq,
                     export_policy, hyperbolic_lq, log_consumption_coefficient,
                     maximizer, adjusted_reward_consistency,
                     proportional_consumption_policy, reduction_check,
                     solve_bsde, solve_classical, solve_equilibrium, solve_pde,
                     spike_test)
from drifteq.cli import main as cli_main

from oracles import enumerate_micro_equilibria, quad_consumption_coefficient
from test_lattice import micro_problem

SEED = 20260814


def _report(num, ok, detail):
    line = "[criterion %d] %s: %s" % (num, "PASS" if ok else "FAIL", detail)
    print(line, file=sys.__stdout__, flush=True)
    assert ok, line


@pytest.fixture(scope="module")
def lq_routes():
    """The three solver routes on the shared benchmark problem, plus the
    wall-clock time of the three solves."""
    spec = hyperbolic_lq()
    start = time.time()
    bs = solve_bsde(spec, 200, 50000, SEED, degree=4, n_s=50, verbose=False)
    pde = solve_pde(spec, 200, 201, n_s=50)
    lat = solve_equilibrium(Lattice(spec, 200, 201))
    elapsed = time.time() - start
    return {"spec": spec, "bsde": bs, "pde": pde, "lattice": lat,
            "elapsed": elapsed}


def test_criterion_1_triple_route_agreement(lq_routes):
    spec = lq_routes["spec"]
    vals = {
        "bsde": lq_routes["bsde"].value_at(0.0, spec.x0),
        "pde": lq_routes["pde"].value_at(0.0, spec.x0),
        "lattice": lq_routes["lattice"].value_at(0.0, spec.x0),
    }
    names = sorted(vals)
    worst = 0.0
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            gap = abs(vals[a] - vals[b]) / max(abs(vals[a]), abs(vals[b]))
            worst = max(worst, gap)
    elapsed = lq_routes["elapsed"]
    ok = worst <= 0.02 and elapsed < 120.0
    _report(1, ok,
            "pairwise gap %.4f (<= 0.02), runtime %.1fs (< 120s); "
            "values bsde=%.6f pde=%.6f lattice=%.6f"
            % (worst, elapsed, vals["bsde"], vals["pde"], vals["lattice"]))


def test_criterion_2_exponential_reduction():
    spec = exponential_lq(0.5)
    coarse = solve_bsde(spec, 50, 10000, SEED, degree=4, n_s=13, verbose=False)
    fine = solve_bsde(spec, 100, 20000, SEED, degree=4, n_s=26, verbose=False)
    sup_c = reduction_check(coarse)
    sup_f = reduction_check(fine)
    ok = sup_c <= 1e-2 and sup_f < sup_c
    _report(2, ok, "reduction gap %.5f (<= 0.01), refined %.5f (decreasing)"
            % (sup_c, sup_f))


def test_criterion_3_exponential_collapse_and_dpp():
    spec = exponential_lq(0.5)
    lat = Lattice(spec, 100, 101)
    theta = spec.discount.params["theta"]
    factor = float(np.exp(-theta * lat.dt))
    eq = solve_equilibrium(lat, n_actions=201)
    reward_fn = lambda t, x, a: spec.running_reward.value(t, x, a)
    terminal = spec.terminal_reward.value(lat.x_nodes)
    dp_vals, dp_pol = solve_classical(lat, reward_fn, terminal,
                                      step_factor=factor, n_actions=201)
    value_gap = float(np.max(np.abs(eq.values - dp_vals)))
    policy_gap = float(np.max(np.abs(eq.policy_table - dp_pol)))
    dpp = dpp_residual(spec, export_policy(eq), 0.0, spec.horizon / 2.0,
                       n_outer=2000, n_inner=32, n_steps=100, seed=SEED)
    ok = value_gap <= 1e-12 and policy_gap <= 1e-12 and dpp["passed"]
    _report(3, ok,
            "classical-DP gap %.2e (<= 1e-12), policy gap %.2e, "
            "split residual %.4f vs 3 sigma %.4f"
            % (value_gap, policy_gap, dpp["residual"], 3.0 * dpp["stderr"]))


def test_criterion_4_consumption_fractions_and_spots():
    exp_half = DiscountFunction.exponential(0.5)
    hyp_one = DiscountFunction.hyperbolic(1.0)
    spot_exp = quad_consumption_coefficient(exp_half, 2.0, 1.0)
    spot_hyp = quad_consumption_coefficient(hyp_one, 2.0, 1.0)
    err_exp = abs(log_consumption_coefficient(exp_half, 2.0, 1.0) - spot_exp)
    err_hyp = abs(log_consumption_coefficient(hyp_one, 2.0, 1.0) - spot_hyp)
    sups = {}
    for name, disc in (("exp", exp_half), ("hyp", hyp_one)):
        spec = crra_consumption(disc)
        sol = solve_bsde(spec, 80, 80000, SEED, degree=2, basis="log",
                         exploration=proportional_consumption_policy(1.0),
                         verbose=False)
        worst = 0.0
        x0 = np.array([spec.x0])
        for i, t in enumerate(sol.grid.nodes[:-1]):
            if t > 0.9 * spec.horizon + 1e-12:
                break
            slope = sol.slope_at_step(i, x0)
            frac = float(maximizer(spec, t, x0, slope)[0])
            want = 1.0 / log_consumption_coefficient(disc, spec.horizon, t)
            worst = max(worst, abs(frac - want) / want)
        sups[name] = worst
    ok = (max(sups.values()) <= 0.03 and err_exp <= 1e-6 and err_hyp <= 1e-6
          and abs(spot_exp - 1.3934693402873666) < 1e-9
          and abs(spot_hyp - 1.1931471805599453) < 1e-9)
    _report(4, ok,
            "fraction sup rel err exp=%.4f hyp=%.4f (<= 0.03); "
            "spot coefficients match quadrature to %.1e / %.1e (<= 1e-6)"
            % (sups["exp"], sups["hyp"], err_exp, err_hyp))


def test_criterion_5_picard_contraction(lq_routes):
    sol = lq_routes["bsde"]
    rep = sol.contraction_report()
    ratios = rep["ratios"][1:]  # ratios after the first update
    ok = (sol.converged and len(sol.history) <= 15
          and all(r < 0.8 for r in ratios))
    _report(5, ok, "converged in %d iterations (<= 15), ratios %s (< 0.8)"
            % (len(sol.history), ", ".join("%.3f" % r for r in ratios)))


def test_criterion_6_deviation_windows(lq_routes):
    spec = lq_routes["spec"]
    pol = export_policy(lq_routes["lattice"])
    res = spike_test(spec, pol, (0.0, 0.25, 0.5), (0.05, 0.1, 0.2), 0.05,
                     20000, 200, SEED)
    n_pass = sum(r["passed"] for r in res.rows)
    bad = spike_test(spec, OffsetPolicy(pol, 1.0), (0.0, 0.25, 0.5),
                     (0.05, 0.1, 0.2), 0.05, 20000, 200, SEED)
    margins = [(r["gain"] - r["threshold"]) / max(r["stderr"], 1e-300)
               for r in bad.rows if not r["passed"]]
    corrupted_caught = len(margins) >= 1 and max(margins) > 3.0
    ok = res.passed and n_pass == len(res.rows) == 45 and corrupted_caught
    _report(6, ok,
            "candidate %d/45 rows pass (worst gain %+.2e); corrupted policy "
            "beaten on %d rows, largest excess %.0f sigma (> 3)"
            % (n_pass, res.worst_gain, len(margins),
               max(margins) if margins else 0.0))


def test_criterion_7_adjusted_reward_consistency(lq_routes):
    spec = lq_routes["spec"]
    eq = lq_routes["lattice"]
    rep = adjusted_reward_consistency(spec, export_policy(eq), eq)
    ok = rep["gap"] <= 0.02
    _report(7, ok,
            "classical value of adjusted problem %.6f vs game value %.6f, "
            "gap %.4f (<= 0.02)"
            % (rep["classical_value"], rep["equilibrium_value"], rep["gap"]))


def test_criterion_8_micro_instance_enumeration():
    spec = micro_problem()
    lat = Lattice(spec, n_steps=2, n_x=3, x_min=-1.3, x_max=1.3)
    eq = solve_equilibrium(lat, n_actions=3)
    grid, found = enumerate_micro_equilibria(lat, n_actions=3)
    gaps = [float(np.max(np.abs(diag - eq.values))) for _, diag in found]
    ok = (len(found) == 1 and min(gaps) <= 1e-12
          and np.max(np.abs(grid[found[0][0]] - eq.policy_table[:2])) <= 1e-12)
    _report(8, ok,
            "%d equilibrium(s) in exhaustive enumeration of %d policies, "
            "value gap %.1e (<= 1e-12)"
            % (len(found), 3 ** (2 * 3), min(gaps) if gaps else float("nan")))


def test_criterion_9_byte_identical_reruns(tmp_path):
    cfg = os.path.join(tmp_path, "c.ini")
    with open(cfg, "w") as fh:
        fh.write("""
[problem]
builtin = hyperbolic_lq

[lattice]
n_t = 40
n_x = 41

[pde]
n_t = 40
n_x = 41
n_s = 11

[bsde]
n_t = 25
paths = 3000
degree = 3
""")
    primaries = {
        "solve-lattice": ("lattice_values.csv", "summary.json"),
        "solve-pde": ("value_slices.csv", "summary.json"),
        "solve-bsde": ("convergence.json", "policy_surface.csv", "y_means.csv"),
    }
    identical = True
    detail = []
    for sub, files in primaries.items():
        out1 = os.path.join(tmp_path, sub, "run1")
        out2 = os.path.join(tmp_path, sub, "run2")
        assert cli_main([sub, cfg, "--out", out1, "--seed", str(SEED)]) == 0
        assert cli_main([sub, cfg, "--out", out2, "--seed", str(SEED)]) == 0
        same = True
        for name in files:
            with open(os.path.join(out1, name), "rb") as fh:
                b1 = fh.read()
            with open(os.path.join(out2, name), "rb") as fh:
                b2 = fh.read()
            same = same and b1 == b2
        with open(os.path.join(out1, "manifest.json")) as fh:
            m1 = json.load(fh)
        with open(os.path.join(out2, "manifest.json")) as fh:
            m2 = json.load(fh)
        m1.pop("timestamp"), m2.pop("timestamp")
        same = same and m1 == m2
        identical = identical and same
        detail.append("%s=%s" % (sub, "identical" if same else "DIFFERS"))
    _report(9, identical, "repeated runs with the same seed: " + ", ".join(detail))
