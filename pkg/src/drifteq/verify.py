"""Simulation checks that a candidate policy/value pair behaves like a
sophisticated equilibrium.

* spike_test: no short deviation window improves the deviating self's own
  reward beyond a slack proportional to the window length.  Deviation and
  candidate ensembles share the same Brownian increments, so the gain is a
  per-path difference with a tight standard error.
* dpp_residual: the corrected dynamic-programming identity
      v(t,x) = E[ running(t..tau) + v(tau, X_tau)
                  - int_t^tau u(s, tau, X_tau) ds ]
  holds for the candidate's reward functional; both sides are estimated by
  independent Monte Carlo and compared against the combined standard error.
* reduction_check: under an exponential discount the diagonal of the
  type-derivative family must equal theta times the value.
* adjusted_reward_consistency: a classical control problem whose running
  reward subtracts the simulated time-inconsistency correction must reproduce
  the equilibrium value when solved on the same lattice stencil.
"""

import numpy as np

from .errors import DomainError, VerificationError
from .lattice import solve_classical
from .simulate import (TimeGrid, simulate_paths, reward_totals,
                       type_derivative_totals, type_derivative_batch)

_TOL = 1e-12


# --------------------------------------------------------------------------
# policy wrappers
# --------------------------------------------------------------------------

class WindowPolicy:
    """Acts like ``base`` except on [t0, t1), where the action is either a
    constant or the base action plus an offset."""

    def __init__(self, base, t0, t1, action=None, offset=None, label=None):
        if (action is None) == (offset is None):
            raise ValueError("give exactly one of action / offset")
        self.base = base
        self.t0 = float(t0)
        self.t1 = float(t1)
        self.action = action
        self.offset = offset
        self.action_dim = getattr(base, "action_dim", 1)
        if label is None:
            what = ("const %g" % action) if action is not None else ("offset %+g" % offset)
            label = "%s with %s on [%g,%g)" % (base.label, what, t0, t1)
        self.label = label

    def act(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.t0 - _TOL <= t < self.t1 - _TOL:
            if self.action is not None:
                return np.full(x.shape, self.action)
            return np.asarray(self.base.act(t, x), dtype=float) + self.offset
        return self.base.act(t, x)


class OffsetPolicy:
    """Base policy shifted by a constant offset everywhere (clamping happens
    in the simulator).  Useful as a deliberately corrupted candidate."""

    def __init__(self, base, offset, label=None):
        self.base = base
        self.offset = float(offset)
        self.action_dim = getattr(base, "action_dim", 1)
        self.label = label or ("%s %+g" % (base.label, offset))

    def act(self, t, x):
        return np.asarray(self.base.act(t, x), dtype=float) + self.offset


# --------------------------------------------------------------------------
# spike deviations
# --------------------------------------------------------------------------

class SpikeResult:
    def __init__(self, rows, epsilon):
        self.rows = rows
        self.epsilon = epsilon

    @property
    def passed(self):
        return all(r["passed"] for r in self.rows)

    @property
    def worst_gain(self):
        return max(r["gain"] - r["threshold"] for r in self.rows)

    def describe(self):
        return {"passed": self.passed, "epsilon": self.epsilon,
                "n_rows": len(self.rows), "worst_excess": self.worst_gain}


def spike_test(spec, policy, times, widths, epsilon, n_paths, n_steps, seed,
               offset_frac=0.15, verbose=False):
    """Try short deviation windows against a candidate equilibrium policy.

    For every start time in ``times`` and window width in ``widths``, five
    deviations are played on [t, t+width): both action-box corners, the box
    midpoint, and the candidate shifted up/down by ``offset_frac`` of the box.
    The deviating self's reward (evaluation time s = t) may not beat the
    candidate by more than epsilon * width + 3 standard errors of the
    common-noise difference.

    Parameters
    ----------
    spec : ProblemSpec
    policy : candidate equilibrium policy
    times, widths : iterables of floats
        Window starts and lengths; a window reaching past the horizon raises
        DomainError.
    epsilon : float
        Slack per unit of window length.
    n_paths, n_steps : int
        Paths per ensemble and time steps on the full horizon (windows use a
        proportional share).
    seed : int
        Stream seed; every (time, width) row gets its own sub-stream.
    offset_frac : float
        Relative size of the candidate +/- offset deviations.
    """
    spec.require_scalar_action("spike test")
    lo, hi = spec.action_box[0]
    width_box = hi - lo
    rows = []
    dt_target = spec.horizon / n_steps
    for row_idx, (t0, width) in enumerate((t0, w) for t0 in times for w in widths):
        if t0 < -_TOL or t0 > spec.horizon + _TOL:
            raise DomainError("deviation start %r outside [0, horizon]" % t0)
        if width <= 0 or t0 + width > spec.horizon + _TOL:
            raise DomainError(
                "deviation window [%g, %g) reaches past the horizon %g"
                % (t0, t0 + width, spec.horizon))
        if t0 > _TOL:
            n_warm = max(1, int(round(t0 / dt_target)))
            warm = simulate_paths(spec, policy, TimeGrid(0.0, t0, n_warm), n_paths,
                                  seed, seed_tags=("spike", row_idx, "warm"))
            starts = warm.states[:, -1]
        else:
            starts = None
        n_cont = max(2, int(round((spec.horizon - t0) / dt_target)))
        grid = TimeGrid(t0, spec.horizon, n_cont)
        tags = ("spike", row_idx, "cont")
        base = simulate_paths(spec, policy, grid, n_paths, seed, x_init=starts,
                              seed_tags=tags)
        base_tot = reward_totals(spec, base, t0)

        deviations = [
            ("corner_lo", WindowPolicy(policy, t0, t0 + width, action=lo)),
            ("corner_hi", WindowPolicy(policy, t0, t0 + width, action=hi)),
            ("midpoint", WindowPolicy(policy, t0, t0 + width, action=0.5 * (lo + hi))),
            ("plus_offset", WindowPolicy(policy, t0, t0 + width,
                                         offset=offset_frac * width_box)),
            ("minus_offset", WindowPolicy(policy, t0, t0 + width,
                                          offset=-offset_frac * width_box)),
        ]
        for name, dev_policy in deviations:
            dev = simulate_paths(spec, dev_policy, grid, n_paths, seed,
                                 x_init=starts, seed_tags=tags)
            diff = reward_totals(spec, dev, t0) - base_tot
            gain = float(np.mean(diff))
            stderr = float(np.std(diff, ddof=1) / np.sqrt(n_paths))
            threshold = epsilon * width + 3.0 * stderr
            rows.append({"t": t0, "width": width, "deviation": name,
                         "gain": gain, "stderr": stderr, "threshold": threshold,
                         "passed": gain <= threshold})
            if verbose:
                print("  [spike] t=%.3f w=%.3f %-12s gain %+.3e vs %.3e -> %s"
                      % (t0, width, name, gain, threshold,
                         "ok" if gain <= threshold else "BEATEN"))
    return SpikeResult(rows, epsilon)


# --------------------------------------------------------------------------
# corrected dynamic-programming residual
# --------------------------------------------------------------------------

def dpp_residual(spec, policy, t, tau, x=None, n_outer=2000, n_inner=32,
                 n_steps=100, seed=0, s_quad=9, value_fn=None):
    """Two-sided Monte Carlo check of the corrected dynamic-programming
    identity for the candidate policy's reward functional.

    The left side estimates v(t,x) directly; the right side splits the
    horizon at tau, estimating v(tau, X_tau) and the evaluation-time
    correction integral by nested simulation from the split point (or exactly
    when tau equals the horizon).  ``value_fn(time, states)``, when given,
    replaces both v-estimates so the identity tests a solver's tables instead.
    Returns a dict with both sides, the residual, its standard error, and a
    3-sigma pass flag.
    """
    if x is None:
        x = spec.x0
    if not (0.0 - _TOL <= t <= tau <= spec.horizon + _TOL):
        raise DomainError("need 0 <= t <= tau <= horizon, got t=%r tau=%r" % (t, tau))
    dt_target = spec.horizon / n_steps

    # outer leg on [t, tau]
    if tau - t > _TOL:
        n1 = max(1, int(round((tau - t) / dt_target)))
        outer = simulate_paths(spec, policy, TimeGrid(t, tau, n1), n_outer, seed,
                               x_init=np.full(n_outer, float(x)),
                               seed_tags=("dpp", "outer"))
        nodes = outer.grid.nodes
        w = spec.kernel(t, nodes[:-1])
        f_run = spec.running_reward.value(nodes[None, :-1], outer.states[:, :-1],
                                          outer.actions)
        running = (w[None, :] * np.asarray(f_run, dtype=float)).sum(axis=1) * outer.grid.dt
        ends = outer.states[:, -1]
    else:
        running = np.zeros(n_outer)
        ends = np.full(n_outer, float(x))

    # split-point value and correction
    s_nodes = np.linspace(t, tau, s_quad) if tau - t > _TOL else np.array([t])
    if spec.horizon - tau > _TOL:
        n2 = max(2, int(round((spec.horizon - tau) / dt_target)))
        inner_starts = np.repeat(ends, n_inner)
        inner = simulate_paths(spec, policy, TimeGrid(tau, spec.horizon, n2),
                               ends.size * n_inner, seed, x_init=inner_starts,
                               seed_tags=("dpp", "inner"))
        if value_fn is None:
            v_tau = reward_totals(spec, inner, tau).reshape(n_outer, n_inner).mean(axis=1)
        else:
            v_tau = np.asarray(value_fn(tau, ends), dtype=float)
        td = np.stack([type_derivative_totals(spec, inner, s).reshape(n_outer, n_inner).mean(axis=1)
                       for s in s_nodes])
    else:
        term = np.asarray(spec.terminal_reward.value(ends), dtype=float)
        v_tau = term if value_fn is None else np.asarray(value_fn(tau, ends), dtype=float)
        td = np.stack([spec.ds_kernel(s, spec.horizon) * term for s in s_nodes])

    if tau - t > _TOL:
        trapezoid = getattr(np, "trapezoid", None) or np.trapz
        correction = trapezoid(td, s_nodes, axis=0)
    else:
        correction = np.zeros(n_outer)

    per_outer = running + v_tau - correction
    rhs = float(np.mean(per_outer))
    rhs_se = float(np.std(per_outer, ddof=1) / np.sqrt(n_outer))

    if value_fn is None:
        n_lhs = n_outer * max(1, n_inner // 4)
        lhs_grid = TimeGrid(t, spec.horizon, max(2, int(round((spec.horizon - t) / dt_target))))
        lhs_ens = simulate_paths(spec, policy, lhs_grid, n_lhs, seed,
                                 x_init=np.full(n_lhs, float(x)), seed_tags=("dpp", "lhs"))
        lhs_tot = reward_totals(spec, lhs_ens, t)
        lhs = float(np.mean(lhs_tot))
        lhs_se = float(np.std(lhs_tot, ddof=1) / np.sqrt(n_lhs))
    else:
        lhs = float(np.asarray(value_fn(t, np.array([float(x)])))[0])
        lhs_se = 0.0

    residual = abs(lhs - rhs)
    stderr = float(np.hypot(lhs_se, rhs_se))
    return {"t": t, "tau": tau, "x": float(x), "lhs": lhs, "rhs": rhs,
            "residual": residual, "stderr": stderr,
            "passed": residual <= 3.0 * stderr + _TOL}


# --------------------------------------------------------------------------
# exponential reduction
# --------------------------------------------------------------------------

def reduction_check(solution, theta=None, stride=None):
    """Largest relative gap between the type-derivative diagonal and theta
    times the value, which must vanish for exponential discounting.

    Accepts either the regression solution (gap measured over the simulated
    state clouds, restricted per step to the inner 98% quantile band where
    the fitted surfaces are supported by data) or the finite-difference
    solution (gap over the grid).  Raises VerificationError when the
    problem's discount is not exponential.
    """
    spec = solution.spec
    if spec.discount.kind != "exponential":
        raise VerificationError(
            "reduction check only applies to exponential discounting, got %s"
            % spec.discount.describe())
    if theta is None:
        theta = spec.discount.params["theta"]

    if hasattr(solution, "ds_diag"):   # grid solution
        gap = np.abs(solution.ds_diag - theta * solution.values) / (1.0 + np.abs(solution.values))
        return float(np.max(gap))

    states = solution.ensemble.states
    n_steps = solution.grid.n_steps
    if stride is None:
        stride = max(1, states.shape[0] // 2000)
    worst = 0.0
    for i in range(n_steps + 1):
        lo, hi = np.quantile(states[:, i], (0.01, 0.99))
        x_i = states[::stride, i]
        x_i = x_i[(x_i >= lo) & (x_i <= hi)]
        if x_i.size == 0:
            x_i = states[::stride, i]
        y = solution.y_at_step(i, x_i)
        ud = solution.udiag_at_step(i, x_i)
        gap = np.max(np.abs(ud - theta * y) / (1.0 + np.abs(y)))
        worst = max(worst, float(gap))
    return worst


# --------------------------------------------------------------------------
# adjusted classical reward
# --------------------------------------------------------------------------

def adjusted_reward_consistency(spec, policy, equilibrium, inner_paths=2000,
                                n_sub_t=17, n_sub_x=25, n_inner_steps=120, seed=0,
                                verbose=False):
    """Cross-check: classical control with the correction folded into the
    running reward reproduces the equilibrium value.

    The correction c(t,x) (the type-derivative diagonal under the candidate
    policy) is tabulated by nested simulation on a coarse (t, x) sub-grid of
    the equilibrium lattice, interpolated, and subtracted from the running
    reward; classical backward induction on the same stencil must then match
    the equilibrium value at (0, x0).  Returns a dict with both values and the
    relative gap.
    """
    lat = equilibrium.lattice
    t_idx = np.unique(np.round(np.linspace(0, lat.n_steps, n_sub_t)).astype(int))
    x_idx = np.unique(np.round(np.linspace(0, lat.n_x - 1, n_sub_x)).astype(int))
    sub_t = lat.t_nodes[t_idx]
    sub_x = lat.x_nodes[x_idx]

    corr = np.empty((sub_t.size, sub_x.size))
    for j, t_j in enumerate(sub_t):
        if spec.horizon - t_j <= _TOL:
            corr[j] = spec.ds_kernel(spec.horizon, spec.horizon) \
                * np.asarray(spec.terminal_reward.value(sub_x), dtype=float)
            continue
        n_stp = max(2, int(round(n_inner_steps * (spec.horizon - t_j) / spec.horizon)))
        corr[j] = type_derivative_batch(spec, policy, t_j, sub_x, inner_paths,
                                        n_stp, seed, seed_tags=("adjusted", j))
        if verbose:
            print("  [adjusted] correction row %d/%d at t=%.3f" % (j + 1, sub_t.size, t_j))

    # interpolate the correction onto the full lattice grid once
    corr_full = np.empty((lat.n_steps + 1, lat.n_x))
    for j in range(lat.n_steps + 1):
        t_j = lat.t_nodes[j]
        k = int(np.clip(np.searchsorted(sub_t, t_j) - 1, 0, sub_t.size - 2))
        w = np.clip((t_j - sub_t[k]) / (sub_t[k + 1] - sub_t[k]), 0.0, 1.0)
        row = (1 - w) * corr[k] + w * corr[k + 1]
        corr_full[j] = np.interp(lat.x_nodes, sub_x, row)

    def adjusted_running(t, x_nodes, actions):
        j = int(round(t / lat.dt))
        base = np.asarray(spec.running_reward.value(t, x_nodes, actions), dtype=float)
        return base - corr_full[j]

    terminal = np.asarray(spec.terminal_reward.value(lat.x_nodes), dtype=float)
    classical_vals, _ = solve_classical(lat, adjusted_running, terminal)
    classical_value = float(np.interp(spec.x0, lat.x_nodes, classical_vals[0]))
    eq_value = float(np.interp(spec.x0, lat.x_nodes, equilibrium.values[0]))
    gap = abs(classical_value - eq_value) / (1.0 + abs(eq_value))
    return {"classical_value": classical_value, "equilibrium_value": eq_value,
            "gap": gap}
