"""Finite-difference route: the coupled value/family system on a grid.

The equilibrium value v solves a backward equation whose source carries the
time-inconsistency correction, coupled to a family of linear equations indexed
by the evaluation time s (all under the frozen equilibrium policy):

    dv/dt + sup_a { f(t,x,a) + b(t,x,a) sigma v_x } + 0.5 sigma^2 v_xx
          - dsJ(t, t, x) = 0,                        v(T, x)    = xi(x)
    dJ^s/dt + b(t,x,a*) sigma J^s_x + 0.5 sigma^2 J^s_xx
            + w(s, t) f(t,x,a*) = 0,                 J^s(T, x) = w(s, T) xi(x)

where w is the discount kernel and dsJ(t,t,x) is the s-derivative of the
family on its diagonal, computed from the slices with s <= t by one-sided
polynomial differentiation (second order where three nodes are available).
A theta-weighted finite-difference step (implicit Euler by default,
Crank-Nicolson at 0.5) advances all equations with a shared tridiagonal
factorization per step; the policy is frozen one step behind and refined by a
small number of policy sweeps.  Interior derivatives are central; the grid
edges use a zero-curvature closure (no diffusion, one-sided convection).
"""

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConfigurationError
from .problems import FeedbackPolicy, hamiltonian_sup, maximizer
from .lattice import default_state_domain

_TOL = 1e-12


class PdeSolution:
    """Grids, equilibrium value/policy tables, and the evaluation-time family."""

    def __init__(self, spec, t_nodes, x_nodes, s_nodes, values, policy_table,
                 j_family, ds_diag, diag_gap):
        self.spec = spec
        self.t_nodes = t_nodes
        self.x_nodes = x_nodes
        self.s_nodes = s_nodes
        self.values = values              # (n_t+1, n_x)
        self.policy_table = policy_table  # (n_t+1, n_x)
        self.j_family = j_family          # (n_s, n_t+1, n_x), NaN where s > t
        self.ds_diag = ds_diag            # (n_t+1, n_x)
        self.diag_gap = diag_gap          # max relative |v - family diagonal|

    def value_at(self, t, x):
        i = int(np.clip(np.searchsorted(self.t_nodes, t) - 1, 0, len(self.t_nodes) - 2))
        dt = self.t_nodes[i + 1] - self.t_nodes[i]
        w = min(max((t - self.t_nodes[i]) / dt, 0.0), 1.0)
        lo = np.interp(x, self.x_nodes, self.values[i])
        hi = np.interp(x, self.x_nodes, self.values[i + 1])
        return (1 - w) * lo + w * hi

    def policy(self):
        return FeedbackPolicy(self.t_nodes, self.x_nodes, self.policy_table,
                              label="pde_equilibrium")


def _pick_s_nodes(t_nodes, s_nodes, n_s):
    """Evaluation-time nodes snapped onto the time grid."""
    n = len(t_nodes) - 1
    if s_nodes is not None:
        s_nodes = np.asarray(s_nodes, dtype=float)
        idx = np.unique(np.clip(np.round(s_nodes / (t_nodes[-1] / n)).astype(int), 0, n))
    elif n_s is not None:
        if n_s < 1:
            raise ConfigurationError("n_s must be positive")
        idx = np.unique(np.round(np.linspace(0, n, min(n_s, n + 1))).astype(int))
    else:
        idx = np.arange(n + 1)
    if idx[0] != 0:
        idx = np.concatenate(([0], idx))
    return t_nodes[idx], idx


def _operator(spec, t, x, actions, dx):
    """Tridiagonal coefficients of b sigma d/dx + 0.5 sigma^2 d^2/dx^2 with the
    zero-curvature edge closure."""
    sig = np.broadcast_to(np.asarray(spec.sigma.sigma(t, x), dtype=float), x.shape)
    beta = sig * np.asarray(spec.drift.value(t, x, actions), dtype=float)
    half = 0.5 * sig ** 2
    n = x.size
    low = np.zeros(n)
    dia = np.zeros(n)
    up = np.zeros(n)
    low[1:-1] = half[1:-1] / dx ** 2 - beta[1:-1] / (2.0 * dx)
    dia[1:-1] = -2.0 * half[1:-1] / dx ** 2
    up[1:-1] = half[1:-1] / dx ** 2 + beta[1:-1] / (2.0 * dx)
    dia[0] = -beta[0] / dx
    up[0] = beta[0] / dx
    low[-1] = -beta[-1] / dx
    dia[-1] = beta[-1] / dx
    return low, dia, up


def _apply(low, dia, up, vals):
    out = dia * vals
    out[..., :-1] = out[..., :-1] + up[:-1] * vals[..., 1:]
    out[..., 1:] = out[..., 1:] + low[1:] * vals[..., :-1]
    return out


def _banded(low, dia, up, scale):
    """ab-matrix of I - scale*A for solve_banded."""
    n = dia.size
    ab = np.zeros((3, n))
    ab[0, 1:] = -scale * up[:-1]
    ab[1, :] = 1.0 - scale * dia
    ab[2, :-1] = -scale * low[1:]
    return ab


def _ds_from_below(s_nodes, level, s_eval):
    """d/ds of the family at s=s_eval from the slices with s <= s_eval.

    Uses the derivative of the interpolating polynomial through the largest
    two or three admissible nodes; returns None when fewer than two exist.
    """
    mask = np.flatnonzero(s_nodes <= s_eval + _TOL)
    if mask.size < 2:
        return None
    if mask.size >= 3:
        k0, k1, k2 = mask[-3], mask[-2], mask[-1]
        s0, s1, s2 = s_nodes[k0], s_nodes[k1], s_nodes[k2]
        f0, f1, f2 = level[k0], level[k1], level[k2]
        return (f0 * (2.0 * s_eval - s1 - s2) / ((s0 - s1) * (s0 - s2))
                + f1 * (2.0 * s_eval - s0 - s2) / ((s1 - s0) * (s1 - s2))
                + f2 * (2.0 * s_eval - s0 - s1) / ((s2 - s0) * (s2 - s1)))
    k0, k1 = mask[-2], mask[-1]
    return (level[k1] - level[k0]) / (s_nodes[k1] - s_nodes[k0])


def solve_pde(spec, n_steps, n_x, x_min=None, x_max=None, s_nodes=None, n_s=None,
              theta_scheme=1.0, policy_sweeps=2, verbose=False):
    """Solve the coupled value/family system by backward finite differences.

    Parameters
    ----------
    spec : ProblemSpec
        Markovian separable problem with a scalar action.
    n_steps, n_x : int
        Time steps and state nodes.
    x_min, x_max : float, optional
        State domain; default covers ~6 terminal standard deviations.
    s_nodes : array, optional
        Evaluation-time nodes (snapped onto the time grid).
    n_s : int, optional
        Number of evaluation-time nodes, evenly spread; default uses every
        time node.
    theta_scheme : float
        Implicitness weight in [0, 1]; 1 = implicit Euler, 0.5 =
        Crank-Nicolson.  Values below 1 are checked against the diffusion
        stability bound.
    policy_sweeps : int
        Frozen-policy refinement sweeps per time step.
    verbose : bool
        Print progress every ~10% of the steps.
    """
    spec.require_markovian("finite-difference solver")
    spec.require_separable("finite-difference solver")
    spec.require_scalar_action("finite-difference solver")
    if not (0.0 <= theta_scheme <= 1.0):
        raise ConfigurationError("theta_scheme must be in [0, 1]")
    if n_steps < 2 or n_x < 5:
        raise ConfigurationError("need n_steps >= 2 and n_x >= 5")
    if x_min is None or x_max is None:
        lo, hi = default_state_domain(spec)
        x_min = lo if x_min is None else x_min
        x_max = hi if x_max is None else x_max

    t_nodes = np.linspace(0.0, spec.horizon, n_steps + 1)
    t_nodes[-1] = spec.horizon
    dt = spec.horizon / n_steps
    x = np.linspace(float(x_min), float(x_max), n_x)
    dx = (float(x_max) - float(x_min)) / (n_x - 1)

    if theta_scheme < 1.0:
        sig_max = spec.sigma.max_on(float(x_min), float(x_max))
        cfl = (1.0 - theta_scheme) * sig_max ** 2 * dt / dx ** 2
        if cfl > 0.5 + _TOL:
            raise ConfigurationError(
                "explicit part violates the diffusion stability bound "
                "(%.3g > 0.5); raise n_steps or theta_scheme" % cfl)

    s_vals, s_idx = _pick_s_nodes(t_nodes, s_nodes, n_s)
    n_s_eff = s_vals.size

    values = np.empty((n_steps + 1, n_x))
    policy_table = np.empty((n_steps + 1, n_x))
    ds_diag = np.empty((n_steps + 1, n_x))
    j_family = np.full((n_s_eff, n_steps + 1, n_x), np.nan)

    terminal = np.asarray(spec.terminal_reward.value(x), dtype=float)
    values[n_steps] = terminal
    for k in range(n_s_eff):
        j_family[k, n_steps] = spec.kernel(s_vals[k], spec.horizon) * terminal
    term_slope = np.gradient(terminal, dx)
    policy_table[n_steps] = maximizer(spec, spec.horizon, x, term_slope)
    ds_diag[n_steps] = spec.ds_kernel(spec.horizon, spec.horizon) * terminal

    report_every = max(1, n_steps // 10)
    for i in range(n_steps - 1, -1, -1):
        t_i = t_nodes[i]
        t_next = t_nodes[i + 1]
        active = np.flatnonzero(s_vals <= t_i + _TOL)
        a_i = policy_table[i + 1].copy()

        ops_next = _operator(spec, t_next, x, policy_table[i + 1], dx)
        f_next = np.asarray(spec.running_reward.value(t_next, x, policy_table[i + 1]),
                            dtype=float)
        g_next_v = f_next - ds_diag[i + 1]
        expl_v = values[i + 1] + dt * (1 - theta_scheme) * (
            _apply(*ops_next, values[i + 1]) + g_next_v)
        expl_fam = None
        if active.size:
            fam_next = j_family[active, i + 1]
            w_next = spec.kernel(s_vals[active], t_next).reshape(-1, 1)
            expl_fam = fam_next + dt * (1 - theta_scheme) * (
                _apply(*ops_next, fam_next) + w_next * f_next)

        for sweep in range(max(1, policy_sweeps)):
            ops_i = _operator(spec, t_i, x, a_i, dx)
            ab = _banded(*ops_i, dt * theta_scheme)
            f_i = np.asarray(spec.running_reward.value(t_i, x, a_i), dtype=float)

            fam_i = None
            if active.size:
                w_i = spec.kernel(s_vals[active], t_i).reshape(-1, 1)
                rhs_fam = expl_fam + dt * theta_scheme * (w_i * f_i)
                fam_i = solve_banded((1, 1), ab, rhs_fam.T).T

            if active.size:
                level = np.full((n_s_eff, n_x), np.nan)
                level[active] = fam_i
                ds_i = _ds_from_below(s_vals, level, t_i)
            else:
                ds_i = None
            if ds_i is None:
                ds_i = ds_diag[i + 1]

            rhs_v = expl_v + dt * theta_scheme * (f_i - ds_i)
            v_i = solve_banded((1, 1), ab, rhs_v)
            a_i = maximizer(spec, t_i, x, np.gradient(v_i, dx))

        values[i] = v_i
        policy_table[i] = a_i
        ds_diag[i] = ds_i
        if active.size:
            j_family[active, i] = fam_i
        if verbose and (i % report_every == 0 or i == 0):
            print("  [pde] step %d/%d t=%.4f value(x0)=%.6f"
                  % (n_steps - i, n_steps, t_i, float(np.interp(spec.x0, x, v_i))))

    diag_gap = 0.0
    for k in range(n_s_eff):
        i_k = s_idx[k]
        gap = np.max(np.abs(values[i_k] - j_family[k, i_k])
                     / (1.0 + np.abs(values[i_k])))
        diag_gap = max(diag_gap, float(gap))

    return PdeSolution(spec, t_nodes, x, s_vals, values, policy_table,
                       j_family, ds_diag, diag_gap)


def pde_residual(spec, solution):
    """Plug-back residuals of the value equation and the family equations.

    Centered differences measured on the central half of the state domain
    (the zero-curvature closure contaminates a layer near the artificial
    edges) and on interior time rows.  Returns (value_residual,
    family_residual), both sup-norms.  Both decay at first order when the
    time, state, and anchor meshes are refined together.
    """
    t = solution.t_nodes
    x = solution.x_nodes
    v = solution.values
    fam = solution.j_family
    s_vals = solution.s_nodes
    dt = t[1] - t[0]
    dx = x[1] - x[0]
    if x.size < 9 or t.size < 3:
        raise ConfigurationError("residual needs at least 3 time and 9 state nodes")
    skip = max(2, x.size // 4)
    sl = slice(skip, -skip)
    up = slice(skip + 1, -skip + 1)
    dn = slice(skip - 1, -skip - 1)
    xi = x[sl]

    res_v = 0.0
    res_j = 0.0
    for i in range(1, t.size - 1):
        sig = np.broadcast_to(np.asarray(spec.sigma.sigma(t[i], xi), dtype=float), xi.shape)
        v_t = (v[i + 1, sl] - v[i - 1, sl]) / (2.0 * dt)
        v_x = (v[i, up] - v[i, dn]) / (2.0 * dx)
        v_xx = (v[i, up] - 2.0 * v[i, sl] + v[i, dn]) / (dx * dx)
        h_sup, _ = hamiltonian_sup(spec, t[i], xi, v_x)
        line = v_t + h_sup + 0.5 * sig ** 2 * v_xx - solution.ds_diag[i, sl]
        res_v = max(res_v, float(np.max(np.abs(line))))

        active = np.flatnonzero(s_vals <= t[i - 1] + _TOL)
        if active.size:
            a_i = solution.policy_table[i, sl]
            beta = sig * np.asarray(spec.drift.value(t[i], xi, a_i), dtype=float)
            f_i = np.asarray(spec.running_reward.value(t[i], xi, a_i), dtype=float)
            j_t = (fam[active, i + 1, sl] - fam[active, i - 1, sl]) / (2.0 * dt)
            j_x = (fam[active, i, up] - fam[active, i, dn]) / (2.0 * dx)
            j_xx = (fam[active, i, up] - 2.0 * fam[active, i, sl]
                    + fam[active, i, dn]) / (dx * dx)
            w_i = spec.kernel(s_vals[active], t[i]).reshape(-1, 1)
            line = j_t + beta * j_x + 0.5 * sig ** 2 * j_xx + w_i * f_i
            res_j = max(res_j, float(np.max(np.abs(line))))
    return res_v, res_j
