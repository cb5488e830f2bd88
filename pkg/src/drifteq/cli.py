"""Batch front door: parse a declarative config, orchestrate solves and
verifications, and emit machine-readable results.

Subcommands: solve-pde, solve-bsde, solve-lattice, verify, example-crra,
cross-check.  Exit codes: 0 success, 1 solver error, 2 verification failure,
3 config error.  Every run writes its result files plus a manifest.json
carrying the config hash, seed, mesh settings, and the only timestamp; result
files themselves are byte-stable for a fixed config and seed.
"""

import argparse
import configparser
import hashlib
import json
import os
import sys
import time

import numpy as np

from .errors import (ConfigurationError, DomainError, SimulationError,
                     SolverError, VerificationError)
from .problems import (ConstantVol, ConsumptionAdjustedDrift, DiscountFunction,
                       IsoelasticConsumptionReward, IsoelasticWealthTerminal,
                       LinearVol, PolyDrift, PolyReward, PolyTerminal,
                       ProblemSpec)
from .library import BUILTIN_PROBLEMS, build_problem, proportional_consumption_policy
from .lattice import Lattice, solve_equilibrium, export_policy
from .pde import solve_pde, pde_residual
from .bsde import solve_bsde
from .crra import consumption_coefficient_curve
from .verify import spike_test, dpp_residual
from .simulate import write_ensemble_csv

DEFAULT_SEED = 20260814

_CONSTRUCTS = {
    "solve-pde": "eq=HJB-BKM",
    "solve-bsde": "system=H_o",
    "solve-lattice": "route=lattice-induction",
    "verify": "criterion=epsilon-ell",
    "example-crra": "example=crra-consumption",
    "cross-check": "check=triple-route",
}

# allowed config keys per section (strict parsing)
_SCHEMA = {
    "run": {"seed", "out", "format", "dump_paths"},
    "problem": {"builtin", "horizon", "x0", "action_lo", "action_hi", "label",
                "k", "theta", "eta", "rate", "beta", "action_bound",
                "consumption_lo", "consumption_hi", "x_floor"},
    "discount": {"family", "theta", "k", "m", "pairs"},
    "sigma": {"kind", "value", "const", "slope", "floor"},
    "drift": {"kind", "terms", "beta", "rate", "eta", "x_floor"},
    "running": {"kind", "terms", "eta"},
    "terminal": {"kind", "coeffs", "eta", "x_floor"},
    "pde": {"n_t", "n_x", "n_s", "x_min", "x_max", "theta_scheme", "policy_sweeps"},
    "bsde": {"n_t", "paths", "degree", "n_s", "max_iter", "tol", "damping",
             "weight_rate", "exploration", "basis"},
    "lattice": {"n_t", "n_x", "n_s", "x_min", "x_max", "n_actions"},
    "verify": {"times", "widths", "epsilon", "paths", "n_t", "dpp_tau",
               "outer_paths", "inner_paths"},
    "crra": {"eta", "rate", "beta", "n_nodes", "tol", "max_iter"},
}

_BUILTIN_KEYS = {
    "hyperbolic_lq": {"k", "horizon", "x0", "action_bound"},
    "exponential_lq": {"theta", "horizon", "x0", "action_bound"},
    "crra_consumption": {"eta", "rate", "beta", "horizon", "x0",
                         "consumption_lo", "consumption_hi", "x_floor"},
}


# --------------------------------------------------------------------------
# config handling
# --------------------------------------------------------------------------

def load_config(path):
    """Read a [section] key = value config file into a dict of dicts,
    rejecting unknown sections and keys."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigurationError("cannot parse config %s: %s" % (path, exc))
    if not read:
        raise ConfigurationError("config file not found: %s" % path)
    config = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigurationError(
                "unknown config section [%s] (allowed: %s)"
                % (section, ", ".join(sorted(_SCHEMA))))
        allowed = _SCHEMA[section]
        config[section] = {}
        for key, value in parser.items(section):
            if key not in allowed:
                raise ConfigurationError(
                    "unknown key %r in section [%s] (allowed: %s)"
                    % (key, section, ", ".join(sorted(allowed))))
            config[section][key] = value
    return config


def _get(config, section, key, cast, default):
    raw = config.get(section, {}).get(key)
    if raw is None:
        return default
    try:
        if cast is bool:
            return str(raw).strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    except (TypeError, ValueError):
        raise ConfigurationError("bad value %r for [%s] %s" % (raw, section, key))


def _float_list(raw, where):
    try:
        return [float(v) for v in str(raw).replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError("bad number list %r in %s" % (raw, where))


def _parse_terms(raw, where):
    terms = []
    for chunk in str(raw).split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(",")
        if len(parts) != 4:
            raise ConfigurationError(
                "term %r in %s must be coeff,t_pow,x_pow,a_pow" % (chunk, where))
        try:
            terms.append((float(parts[0]), int(parts[1]), int(parts[2]), int(parts[3])))
        except ValueError:
            raise ConfigurationError("bad term %r in %s" % (chunk, where))
    if not terms:
        raise ConfigurationError("empty term list in %s" % where)
    return terms


def _discount_from_config(section):
    family = section.get("family")
    if family is None:
        raise ConfigurationError("[discount] needs a family key")
    if family == "exponential":
        return DiscountFunction.exponential(float(section.get("theta", 0.0)))
    if family == "hyperbolic":
        return DiscountFunction.hyperbolic(float(section.get("k", 1.0)))
    if family == "generalized_hyperbolic":
        return DiscountFunction.generalized_hyperbolic(
            float(section.get("k", 1.0)), float(section.get("m", 1.0)))
    if family == "sum_of_exponentials":
        pairs = []
        for chunk in str(section.get("pairs", "")).split(","):
            chunk = chunk.strip()
            if not chunk:
                continue
            w, th = chunk.split(":")
            pairs.append((float(w), float(th)))
        return DiscountFunction.sum_of_exponentials(pairs)
    raise ConfigurationError("unknown discount family %r" % family)


def build_problem_from_config(config):
    """Problem instance from the [problem] section (built-in by name) or from
    the full descriptor sections."""
    prob = config.get("problem", {})
    builtin = prob.get("builtin")
    if builtin is not None:
        extra = [s for s in ("discount", "sigma", "drift", "running", "terminal")
                 if s in config]
        if extra:
            raise ConfigurationError(
                "builtin problem %r cannot be combined with descriptor sections %s"
                % (builtin, extra))
        if builtin not in BUILTIN_PROBLEMS:
            raise ConfigurationError(
                "unknown built-in problem %r (available: %s)"
                % (builtin, ", ".join(sorted(BUILTIN_PROBLEMS))))
        allowed = _BUILTIN_KEYS[builtin]
        kwargs = {}
        for key, value in prob.items():
            if key in ("builtin", "label"):
                continue
            if key not in allowed:
                raise ConfigurationError(
                    "key %r does not apply to built-in %r (allowed: %s)"
                    % (key, builtin, ", ".join(sorted(allowed))))
            kwargs[key] = float(value)
        if builtin == "crra_consumption":
            lo = kwargs.pop("consumption_lo", None)
            hi = kwargs.pop("consumption_hi", None)
            if (lo is None) != (hi is None):
                raise ConfigurationError(
                    "give both consumption_lo and consumption_hi or neither")
            if lo is not None:
                kwargs["consumption_box"] = (lo, hi)
        return build_problem(builtin, **kwargs)

    required = ("discount", "sigma", "drift", "running", "terminal")
    missing = [s for s in required if s not in config]
    if missing:
        raise ConfigurationError(
            "descriptor problem needs sections %s (missing %s); or set "
            "[problem] builtin = <name>" % (list(required), missing))

    horizon = _get(config, "problem", "horizon", float, None)
    x0 = _get(config, "problem", "x0", float, None)
    lo = _get(config, "problem", "action_lo", float, None)
    hi = _get(config, "problem", "action_hi", float, None)
    if None in (horizon, x0, lo, hi):
        raise ConfigurationError(
            "[problem] needs horizon, x0, action_lo, action_hi")

    sig_sec = config["sigma"]
    kind = sig_sec.get("kind", "constant")
    if kind == "constant":
        sigma = ConstantVol(float(sig_sec.get("value", 1.0)))
    elif kind == "linear":
        sigma = LinearVol(float(sig_sec.get("const", 0.0)),
                          float(sig_sec.get("slope", 0.0)),
                          float(sig_sec.get("floor", 1e-6)))
    else:
        raise ConfigurationError("unknown sigma kind %r" % kind)

    drift_sec = config["drift"]
    kind = drift_sec.get("kind", "poly")
    if kind == "poly":
        drift = PolyDrift(_parse_terms(drift_sec.get("terms", ""), "[drift] terms"))
    elif kind == "consumption":
        drift = ConsumptionAdjustedDrift(float(drift_sec.get("beta", 0.3)),
                                         float(drift_sec.get("rate", 0.0)),
                                         float(drift_sec.get("eta", 1.0)),
                                         float(drift_sec.get("x_floor", 1e-3)))
    else:
        raise ConfigurationError("unknown drift kind %r" % kind)

    run_sec = config["running"]
    kind = run_sec.get("kind", "poly")
    if kind == "poly":
        running = PolyReward(_parse_terms(run_sec.get("terms", ""), "[running] terms"))
    elif kind == "isoelastic":
        running = IsoelasticConsumptionReward(float(run_sec.get("eta", 1.0)))
    else:
        raise ConfigurationError("unknown running reward kind %r" % kind)

    term_sec = config["terminal"]
    kind = term_sec.get("kind", "poly")
    if kind == "poly":
        terminal = PolyTerminal(_float_list(term_sec.get("coeffs", "0"),
                                            "[terminal] coeffs"))
    elif kind == "isoelastic_wealth":
        terminal = IsoelasticWealthTerminal(float(term_sec.get("eta", 1.0)),
                                            float(term_sec.get("x_floor", 1e-3)))
    else:
        raise ConfigurationError("unknown terminal reward kind %r" % kind)

    return ProblemSpec(
        horizon=horizon, x0=x0, action_box=[(lo, hi)],
        sigma=sigma, drift=drift,
        discount=_discount_from_config(config["discount"]),
        running_reward=running, terminal_reward=terminal,
        label=config.get("problem", {}).get("label", "config_problem"),
    )


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------

def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def _write_csv(path, construct, header, rows):
    with open(path, "w") as fh:
        fh.write("# construct: %s\n" % construct)
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path, construct, payload):
    payload = dict(payload)
    payload["construct"] = construct
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _config_hash(config):
    blob = json.dumps(config, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _write_manifest(out_dir, subcommand, config, seed, meshes):
    from . import __version__
    manifest = {
        "subcommand": subcommand,
        "construct": _CONSTRUCTS[subcommand],
        "config_hash": _config_hash(config),
        "seed": seed,
        "meshes": meshes,
        "package_version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


# --------------------------------------------------------------------------
# subcommand runners
# --------------------------------------------------------------------------

def _run_solve_lattice(spec, config, seed, out_dir, construct):
    n_t = _get(config, "lattice", "n_t", int, 120)
    n_x = _get(config, "lattice", "n_x", int, 121)
    n_s = _get(config, "lattice", "n_s", int, None)
    x_min = _get(config, "lattice", "x_min", float, None)
    x_max = _get(config, "lattice", "x_max", float, None)
    n_actions = _get(config, "lattice", "n_actions", int, None)
    lat = Lattice(spec, n_t, n_x, x_min=x_min, x_max=x_max)
    s_nodes = None
    if n_s is not None:
        idx = np.unique(np.round(np.linspace(0, n_t, n_s)).astype(int))
        s_nodes = lat.t_nodes[idx]
    eq = solve_equilibrium(lat, s_nodes=s_nodes, n_actions=n_actions)
    rows = []
    for i, t in enumerate(lat.t_nodes):
        for j, xv in enumerate(lat.x_nodes):
            rows.append((t, xv, eq.values[i, j], eq.policy_table[i, j]))
    _write_csv(os.path.join(out_dir, "lattice_values.csv"), construct,
               ("t", "x", "value", "action"), rows)
    _write_json(os.path.join(out_dir, "summary.json"), construct, {
        "value_at_start": float(np.interp(spec.x0, lat.x_nodes, eq.values[0])),
        "max_boundary_leak": eq.max_boundary_leak,
        "n_t": n_t, "n_x": n_x,
        "n_s": int(eq.s_nodes.size),
        "problem": spec.describe(),
    })
    return {"n_t": n_t, "n_x": n_x, "n_s": int(eq.s_nodes.size)}, 0


def _run_solve_pde(spec, config, seed, out_dir, construct):
    n_t = _get(config, "pde", "n_t", int, 120)
    n_x = _get(config, "pde", "n_x", int, 121)
    n_s = _get(config, "pde", "n_s", int, None)
    sol = solve_pde(spec, n_t, n_x,
                    x_min=_get(config, "pde", "x_min", float, None),
                    x_max=_get(config, "pde", "x_max", float, None),
                    n_s=n_s,
                    theta_scheme=_get(config, "pde", "theta_scheme", float, 1.0),
                    policy_sweeps=_get(config, "pde", "policy_sweeps", int, 2))
    res_v, res_j = pde_residual(spec, sol)
    rows = []
    for i, t in enumerate(sol.t_nodes):
        for j, xv in enumerate(sol.x_nodes):
            rows.append((t, xv, sol.values[i, j], sol.policy_table[i, j],
                         sol.ds_diag[i, j]))
    _write_csv(os.path.join(out_dir, "value_slices.csv"), construct,
               ("t", "x", "value", "action", "diag_type_derivative"), rows)
    _write_json(os.path.join(out_dir, "summary.json"), construct, {
        "value_at_start": sol.value_at(0.0, spec.x0),
        "residual_value_eq": res_v,
        "residual_family_eq": res_j,
        "diag_gap": sol.diag_gap,
        "n_t": n_t, "n_x": n_x, "n_s": int(sol.s_nodes.size),
        "problem": spec.describe(),
    })
    return {"n_t": n_t, "n_x": n_x, "n_s": int(sol.s_nodes.size)}, 0


def _run_solve_bsde(spec, config, seed, out_dir, construct, dump_paths=False):
    n_t = _get(config, "bsde", "n_t", int, 60)
    n_paths = _get(config, "bsde", "paths", int, 4000)
    degree = _get(config, "bsde", "degree", int, 4)
    n_s = _get(config, "bsde", "n_s", int, None)
    exploration_mode = _get(config, "bsde", "exploration", str, "midpoint")
    exploration = None
    if exploration_mode == "lattice":
        lat = Lattice(spec, max(20, n_t // 2), 81)
        exploration = export_policy(solve_equilibrium(lat))
    elif exploration_mode == "proportional":
        exploration = proportional_consumption_policy(1.0)
    elif exploration_mode != "midpoint":
        raise ConfigurationError(
            "[bsde] exploration must be midpoint, lattice, or proportional, "
            "got %r" % exploration_mode)
    sol = solve_bsde(spec, n_t, n_paths, seed, degree=degree, n_s=n_s,
                     exploration=exploration,
                     max_iter=_get(config, "bsde", "max_iter", int, 15),
                     tol=_get(config, "bsde", "tol", float, 1e-4),
                     damping=_get(config, "bsde", "damping", float, 0.0),
                     weight_rate=_get(config, "bsde", "weight_rate", float, None),
                     basis=_get(config, "bsde", "basis", str, "poly"))
    report = sol.contraction_report() if len(sol.history) >= 3 else {
        "deltas": [r["delta"] for r in sol.history], "ratios": [],
        "geometric": None, "converged": sol.converged,
        "iterations": len(sol.history)}
    _write_json(os.path.join(out_dir, "convergence.json"), construct, {
        "deltas": report["deltas"], "ratios": report["ratios"],
        "geometric": report["geometric"], "converged": sol.converged,
        "value_at_start": sol.value_at(0.0, spec.x0),
        "settings": sol.describe(),
    })
    pol = sol.policy()
    rows = [(t, xv, pol.table[i, j]) for i, t in enumerate(pol.t_nodes)
            for j, xv in enumerate(pol.x_nodes)]
    _write_csv(os.path.join(out_dir, "policy_surface.csv"), construct,
               ("t", "x", "action"), rows)
    mean_rows = []
    for i, t in enumerate(sol.grid.nodes):
        x_i = sol.ensemble.states[:, i]
        mean_rows.append((t, float(np.mean(sol.y_at_step(i, x_i))),
                          float(np.mean(sol.udiag_at_step(i, x_i)))))
    _write_csv(os.path.join(out_dir, "y_means.csv"), construct,
               ("t", "mean_value", "mean_diag_type_derivative"), mean_rows)
    if dump_paths:
        write_ensemble_csv(sol.ensemble, os.path.join(out_dir, "paths.csv"))
    if not sol.converged:
        raise SolverError("regression sweep did not converge (final delta %.3e)"
                          % sol.history[-1]["delta"])
    return {"n_t": n_t, "paths": n_paths, "degree": degree,
            "n_s": int(sol.s_vals.size)}, 0


def _run_verify(spec, config, seed, out_dir, construct):
    n_t = _get(config, "verify", "n_t", int, 100)
    n_paths = _get(config, "verify", "paths", int, 4000)
    epsilon = _get(config, "verify", "epsilon", float, 0.05)
    times_raw = config.get("verify", {}).get("times")
    widths_raw = config.get("verify", {}).get("widths")
    times = (_float_list(times_raw, "[verify] times") if times_raw is not None
             else [0.0, spec.horizon / 4.0, spec.horizon / 2.0])
    widths = (_float_list(widths_raw, "[verify] widths") if widths_raw is not None
              else [0.05, 0.1, 0.2])
    lat_n_t = _get(config, "lattice", "n_t", int, 120)
    lat_n_x = _get(config, "lattice", "n_x", int, 121)
    lat = Lattice(spec, lat_n_t, lat_n_x)
    candidate = export_policy(solve_equilibrium(lat))

    spike = spike_test(spec, candidate, times, widths, epsilon, n_paths, n_t, seed)
    rows = [(r["t"], r["width"], r["deviation"], r["gain"], r["stderr"],
             r["threshold"], r["passed"]) for r in spike.rows]
    _write_csv(os.path.join(out_dir, "spike_table.csv"), construct,
               ("t", "width", "deviation", "gain", "stderr", "threshold", "passed"),
               rows)

    tau = _get(config, "verify", "dpp_tau", float, spec.horizon / 2.0)
    outer = _get(config, "verify", "outer_paths", int, 1000)
    inner = _get(config, "verify", "inner_paths", int, max(2, outer // 10))
    dpp = dpp_residual(spec, candidate, 0.0, tau, n_outer=outer, n_inner=inner,
                       n_steps=n_t, seed=seed)
    _write_json(os.path.join(out_dir, "verify_report.json"), construct, {
        "spike": spike.describe(),
        "dpp": dpp,
        "candidate": candidate.label,
    })
    ok = spike.passed and dpp["passed"]
    return ({"n_t": n_t, "paths": n_paths, "lattice_n_t": lat_n_t,
             "lattice_n_x": lat_n_x}, 0 if ok else 2)


def _run_example_crra(spec, config, seed, out_dir, construct):
    del spec  # the curve is built from the [crra]/[discount] sections
    eta = _get(config, "crra", "eta", float, 1.0)
    rate = _get(config, "crra", "rate", float, 0.05)
    beta = _get(config, "crra", "beta", float, 0.3)
    n_nodes = _get(config, "crra", "n_nodes", int, 801)
    if "discount" in config:
        discount = _discount_from_config(config["discount"])
    else:
        discount = DiscountFunction.exponential(0.5)
    horizon = _get(config, "problem", "horizon", float, 1.0)
    curve = consumption_coefficient_curve(
        discount, horizon, eta=eta, rate=rate, beta=beta, n_nodes=n_nodes,
        tol=_get(config, "crra", "tol", float, 1e-10),
        max_iter=_get(config, "crra", "max_iter", int, 200))
    _write_csv(os.path.join(out_dir, "crra_curve.csv"), construct,
               ("t", "coefficient", "consumption_fraction"),
               [tuple(row) for row in curve.table()])
    _write_json(os.path.join(out_dir, "summary.json"), construct, {
        "eta": eta, "rate": rate, "beta": beta,
        "discount": discount.describe(),
        "horizon": horizon,
        "coefficient_at_0": float(curve.values[0]),
        "fraction_at_0": float(curve.fraction(0.0)),
        "iterations": curve.iterations,
    })
    return {"n_nodes": n_nodes}, 0


def _run_cross_check(spec, config, seed, out_dir, construct):
    lat_meshes, _ = _run_solve_lattice(spec, config, seed,
                                       _ensure_dir(os.path.join(out_dir, "lattice")),
                                       _CONSTRUCTS["solve-lattice"])
    pde_meshes, _ = _run_solve_pde(spec, config, seed,
                                   _ensure_dir(os.path.join(out_dir, "pde")),
                                   _CONSTRUCTS["solve-pde"])
    bsde_meshes, _ = _run_solve_bsde(spec, config, seed,
                                     _ensure_dir(os.path.join(out_dir, "bsde")),
                                     _CONSTRUCTS["solve-bsde"])
    values = {}
    for name, sub in (("lattice", "lattice"), ("pde", "pde")):
        with open(os.path.join(out_dir, sub, "summary.json")) as fh:
            values[name] = json.load(fh)["value_at_start"]
    with open(os.path.join(out_dir, "bsde", "convergence.json")) as fh:
        values["bsde"] = json.load(fh)["value_at_start"]
    gaps = {}
    names = sorted(values)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            denom = max(abs(values[a]), abs(values[b]), 1e-12)
            gaps["%s_vs_%s" % (a, b)] = abs(values[a] - values[b]) / denom
    _write_json(os.path.join(out_dir, "cross_check.json"), construct, {
        "values": values, "pairwise_relative_gaps": gaps,
        "problem": spec.describe(),
    })
    return {"lattice": lat_meshes, "pde": pde_meshes, "bsde": bsde_meshes}, 0


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


# --------------------------------------------------------------------------
# argument parsing and dispatch
# --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message)


def _build_parser():
    parser = _Parser(prog="drifteq", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand")
    for name in _CONSTRUCTS:
        p = sub.add_parser(name)
        p.add_argument("config", nargs="?", default=None,
                       help="path to a [section] key=value config file")
        p.add_argument("--problem", default=None,
                       help="built-in problem name (instead of a config [problem])")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--mesh.nt", dest="mesh_nt", type=int, default=None)
        p.add_argument("--mesh.nx", dest="mesh_nx", type=int, default=None)
        p.add_argument("--mesh.ns", dest="mesh_ns", type=int, default=None)
        p.add_argument("--paths", type=int, default=None)
        p.add_argument("--dump-paths", dest="dump_paths", action="store_true")
    return parser


def _apply_overrides(config, args):
    if args.problem is not None:
        config.setdefault("problem", {})["builtin"] = args.problem
    mesh_sections = ("pde", "bsde", "lattice", "verify")
    if args.mesh_nt is not None:
        for sec in mesh_sections:
            config.setdefault(sec, {})["n_t"] = str(args.mesh_nt)
    if args.mesh_nx is not None:
        for sec in ("pde", "lattice"):
            config.setdefault(sec, {})["n_x"] = str(args.mesh_nx)
    if args.mesh_ns is not None:
        for sec in ("pde", "bsde", "lattice"):
            config.setdefault(sec, {})["n_s"] = str(args.mesh_ns)
    if args.paths is not None:
        config.setdefault("bsde", {})["paths"] = str(args.paths)
        config.setdefault("verify", {})["paths"] = str(args.paths)
    return config


_RUNNERS = {
    "solve-lattice": _run_solve_lattice,
    "solve-pde": _run_solve_pde,
    "solve-bsde": _run_solve_bsde,
    "verify": _run_verify,
    "example-crra": _run_example_crra,
    "cross-check": _run_cross_check,
}


def main(argv=None):
    """Entry point; returns the exit code (0 ok, 1 solver, 2 verification,
    3 config)."""
    try:
        parser = _build_parser()
        args = parser.parse_args(argv)
        if args.subcommand is None:
            raise ConfigurationError("missing subcommand; try drifteq --help")
        config = load_config(args.config) if args.config else {}
        config = _apply_overrides(config, args)
        seed = args.seed if args.seed is not None else _get(config, "run", "seed",
                                                            int, DEFAULT_SEED)
        out_dir = args.out or _get(config, "run", "out", str,
                                   os.path.join("runs", args.subcommand))
        _ensure_dir(out_dir)
        if args.subcommand == "example-crra":
            spec = None
        else:
            spec = build_problem_from_config(config)
        construct = _CONSTRUCTS[args.subcommand]
        runner = _RUNNERS[args.subcommand]
        if args.subcommand == "solve-bsde":
            dump = args.dump_paths or _get(config, "run", "dump_paths", bool, False)
            meshes, code = runner(spec, config, seed, out_dir, construct,
                                  dump_paths=dump)
        else:
            meshes, code = runner(spec, config, seed, out_dir, construct)
        _write_manifest(out_dir, args.subcommand, config, seed, meshes)
        if code == 0:
            print("[drifteq] %s finished; outputs in %s" % (args.subcommand, out_dir))
        else:
            print("[drifteq] %s FAILED verification; report in %s"
                  % (args.subcommand, out_dir))
        return code
    except (ConfigurationError, DomainError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 3
    except VerificationError as exc:
        print("verification error: %s" % exc, file=sys.stderr)
        return 2
    except (SolverError, SimulationError) as exc:
        print("solver error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
