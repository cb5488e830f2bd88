"""Discrete-time lattice route: sophisticated equilibrium by backward induction.

A trinomial chain approximates the Euler step: from node x_j at time t_i a
transition moves to x_{j-l}, x_j, x_{j+l} (span l multiples of the grid
spacing) with probabilities matching the Euler mean m = sigma*b*dt and second
moment sigma^2*dt + m^2 exactly.  Each backward step first lets the current
self pick its action against its own continuation assessment, then rolls every
evaluation-index slice of the reward family back under that frozen action:

    a*(t_i, x) = argmax_a { f(t_i, x, a) dt + E^a[ Jfam(t_i, t_{i+1}, .) ] }
    Jfam(s, t_i, x) = w(s, t_i) f(t_i, x, a*) dt + E^{a*}[ Jfam(s, t_{i+1}, .) ]

for every s-node <= t_i, where w is the discount kernel.  The equilibrium
value is the diagonal v(t_i, x) = Jfam(t_i, t_i, x).  Values requested beyond
the state grid extrapolate linearly.
"""

import math

import numpy as np

from .errors import ConfigurationError
from .problems import FeedbackPolicy, PolyReward, argmax_quadratic

_ACTION_PROBE = 17   # feasibility probe points across the action box


def default_state_domain(spec, width=6.0):
    """Symmetric band around x0 covering ~width standard deviations at T."""
    sig = spec.sigma.max_on(spec.x0 - 1.0, spec.x0 + 1.0)
    # widen the probe iteratively for state-dependent volatility
    for _ in range(3):
        half = width * sig * math.sqrt(spec.horizon)
        sig = spec.sigma.max_on(spec.x0 - half, spec.x0 + half)
    half = width * sig * math.sqrt(spec.horizon)
    return spec.x0 - half, spec.x0 + half


class Lattice:
    """State/time grids plus per-(step, node) stencil data for one problem."""

    def __init__(self, spec, n_steps, n_x, x_min=None, x_max=None):
        spec.require_markovian("lattice solver")
        spec.require_separable("lattice solver")
        spec.require_scalar_action("lattice solver")
        if n_x < 3:
            raise ConfigurationError("lattice needs at least 3 state nodes")
        if n_steps < 1:
            raise ConfigurationError("lattice needs at least one time step")
        if x_min is None or x_max is None:
            lo, hi = default_state_domain(spec)
            x_min = lo if x_min is None else x_min
            x_max = hi if x_max is None else x_max
        if not (x_min < x_max):
            raise ConfigurationError("lattice needs x_min < x_max")
        self.spec = spec
        self.n_steps = int(n_steps)
        self.n_x = int(n_x)
        self.t_nodes = np.linspace(0.0, spec.horizon, self.n_steps + 1)
        self.t_nodes[-1] = spec.horizon
        self.dt = spec.horizon / self.n_steps
        self.x_nodes = np.linspace(float(x_min), float(x_max), self.n_x)
        self.dx = (float(x_max) - float(x_min)) / (self.n_x - 1)
        self.spans = np.empty((self.n_steps, self.n_x), dtype=np.int64)
        self._build_stencil()

    def _drift_probe(self, t, x):
        lo, hi = self.spec.action_box[0]
        probes = np.linspace(lo, hi, _ACTION_PROBE)
        vals = np.stack([np.broadcast_to(self.spec.drift.value(t, x, np.full_like(x, a)),
                                         x.shape) for a in probes])
        return np.max(np.abs(vals), axis=0)

    def _build_stencil(self):
        """Choose per-(step, node) spans and verify the probability stencil is
        feasible for every action in the box."""
        dt, dx = self.dt, self.dx
        worst_dt = np.inf
        for i in range(self.n_steps):
            t = self.t_nodes[i]
            x = self.x_nodes
            sig = np.broadcast_to(np.asarray(self.spec.sigma.sigma(t, x), dtype=float), x.shape)
            var = sig ** 2 * dt
            m_max = sig * self._drift_probe(t, x) * dt
            h_low = np.sqrt(var + m_max ** 2)
            span = np.maximum(np.ceil(h_low / dx - 1e-12).astype(np.int64), 1)
            h = span * dx
            # p_down >= 0 at the worst action: |m| h <= var + m^2 for all |m| <= m_max
            # the binding case is |m| = min(m_max, sqrt(var))
            m_bind = np.minimum(m_max, np.sqrt(var))
            ok = np.ones_like(h, dtype=bool)
            pos = m_bind > 0
            ok[pos] = h[pos] <= (var[pos] + m_bind[pos] ** 2) / m_bind[pos] + 1e-15
            if not ok.all():
                j = int(np.argmax(~ok))
                b_abs = m_max[j] / (sig[j] * dt)
                cand = 3.0 / b_abs ** 2 if b_abs > 0 else dt
                worst_dt = min(worst_dt, 0.9 * cand)
                raise ConfigurationError(
                    "infeasible transition stencil at t=%g, x=%g: drift dominates the "
                    "step; reduce the time step to <= %.3g (or refine the state grid "
                    "so dx <= 2*sigma*sqrt(dt))" % (t, self.x_nodes[j], worst_dt))
            self.spans[i] = span

    # -- stencil pieces ------------------------------------------------------

    def moments(self, i, actions):
        """(m, var, h) arrays for per-node actions at step i."""
        t = self.t_nodes[i]
        x = self.x_nodes
        sig = np.broadcast_to(np.asarray(self.spec.sigma.sigma(t, x), dtype=float), x.shape)
        b = self.spec.drift.value(t, x, actions)
        m = sig * b * self.dt
        var = sig ** 2 * self.dt
        h = self.spans[i] * self.dx
        return m, var, h

    def probabilities(self, i, actions):
        """Trinomial probabilities (p_down, p_mid, p_up) for per-node actions."""
        m, var, h = self.moments(i, actions)
        core = var + m * m
        p_up = (core + m * h) / (2.0 * h * h)
        p_dn = (core - m * h) / (2.0 * h * h)
        p_mid = 1.0 - p_up - p_dn
        return p_dn, p_mid, p_up

    def gather(self, vals, idx):
        """vals[..., idx] with linear extrapolation beyond the state grid."""
        n = self.n_x
        inside = np.clip(idx, 0, n - 1)
        out = np.take(vals, inside, axis=-1)
        below = idx < 0
        if below.any():
            edge = vals[..., 0:1] + idx[below] * (vals[..., 1:2] - vals[..., 0:1])
            out[..., below] = edge
        above = idx > n - 1
        if above.any():
            edge = vals[..., n - 1:n] + (idx[above] - (n - 1)) * (vals[..., n - 1:n] - vals[..., n - 2:n - 1])
            out[..., above] = edge
        return out

    def expectation(self, i, vals, probs):
        """One-step expectation of continuation values under the stencil."""
        p_dn, p_mid, p_up = probs
        idx = np.arange(self.n_x)
        up = self.gather(vals, idx + self.spans[i])
        dn = self.gather(vals, idx - self.spans[i])
        mid = np.take(vals, idx, axis=-1)
        return p_dn * dn + p_mid * mid + p_up * up


class LatticeEquilibrium:
    """Backward-induction output: diagonal value, policy, and the full family."""

    def __init__(self, lattice, values, policy_table, j_family, s_nodes, max_boundary_leak):
        self.lattice = lattice
        self.values = values                # (n_steps+1, n_x) diagonal value v
        self.policy_table = policy_table    # (n_steps+1, n_x)
        self.j_family = j_family            # (n_s, n_steps+1, n_x), NaN for s > t
        self.s_nodes = s_nodes
        self.max_boundary_leak = max_boundary_leak

    def value_at(self, t, x):
        lat = self.lattice
        i = int(np.clip(np.searchsorted(lat.t_nodes, t) - 1, 0, lat.n_steps - 1))
        w = (t - lat.t_nodes[i]) / lat.dt
        w = min(max(w, 0.0), 1.0)
        lo = np.interp(x, lat.x_nodes, self.values[i])
        hi = np.interp(x, lat.x_nodes, self.values[i + 1])
        return (1 - w) * lo + w * hi


def _interp_from_below(s_nodes, slices, s_target):
    """Value of the family at s_target using the nodes <= s_target only
    (linear interpolation, or extrapolation from the top pair below)."""
    k = int(np.searchsorted(s_nodes, s_target + 1e-12)) - 1
    if k < 0:
        raise ConfigurationError("no s-node at or below s=%r" % s_target)
    if abs(s_nodes[k] - s_target) < 1e-12 or k == 0:
        return slices[k]
    w = (s_target - s_nodes[k]) / (s_nodes[k] - s_nodes[k - 1])
    return slices[k] + w * (slices[k] - slices[k - 1])


def solve_equilibrium(lattice, s_nodes=None, n_actions=None):
    """Sophisticated-equilibrium backward induction on the lattice.

    ``s_nodes`` defaults to the time grid (no interpolation error across the
    family).  ``n_actions`` switches the per-node maximizer from the analytic
    action profile to a pure grid over the action box, which is what exact
    cross-checks against enumeration use.
    """
    spec = lattice.spec
    n, nx = lattice.n_steps, lattice.n_x
    if s_nodes is None:
        s_nodes = lattice.t_nodes.copy()
    else:
        s_nodes = np.asarray(s_nodes, dtype=float)
        if s_nodes.ndim != 1 or s_nodes.size < 1 or np.any(np.diff(s_nodes) <= 0):
            raise ConfigurationError("s_nodes must be strictly increasing")
        if s_nodes[0] > 1e-12 or s_nodes[-1] > spec.horizon + 1e-12:
            raise ConfigurationError("s_nodes must start at 0 and stay within the horizon")
    n_s = s_nodes.size

    j_family = np.full((n_s, n + 1, nx), np.nan)
    values = np.empty((n + 1, nx))
    policy_table = np.empty((n + 1, nx))

    x = lattice.x_nodes
    terminal = np.asarray(spec.terminal_reward.value(x), dtype=float)
    for k in range(n_s):
        j_family[k, n, :] = spec.kernel(s_nodes[k], spec.horizon) * terminal
    values[n] = terminal
    policy_table[n] = spec.midpoint_action()

    for i in range(n - 1, -1, -1):
        t_i = lattice.t_nodes[i]
        active = np.flatnonzero(s_nodes <= t_i + 1e-12)
        cont_diag = _interp_from_below(s_nodes, j_family[:, i + 1, :], t_i)
        a_star = _best_actions(lattice, i, cont_diag, n_actions)
        policy_table[i] = a_star
        probs = lattice.probabilities(i, a_star)
        f_now = np.asarray(spec.running_reward.value(t_i, x, a_star), dtype=float)
        values[i] = f_now * lattice.dt + lattice.expectation(i, cont_diag, probs)
        if active.size:
            cont = j_family[active, i + 1, :]
            exp_cont = lattice.expectation(i, cont, probs)
            weights = spec.kernel(s_nodes[active], t_i)
            j_family[active, i, :] = (np.asarray(weights).reshape(-1, 1) * f_now * lattice.dt
                                      + exp_cont)

    leak = _boundary_leak(lattice, policy_table)
    return LatticeEquilibrium(lattice, values, policy_table, j_family, s_nodes, leak)


def _best_actions(lattice, i, cont, n_actions):
    """Per-node maximizing action against a continuation slice."""
    spec = lattice.spec
    t_i = lattice.t_nodes[i]
    x = lattice.x_nodes
    lo, hi = spec.action_box[0]
    if n_actions is not None:
        grid = np.linspace(lo, hi, int(n_actions)) if n_actions > 1 else np.array([0.5 * (lo + hi)])
        objs = []
        for a in grid:
            a_vec = np.full(lattice.n_x, a)
            probs = lattice.probabilities(i, a_vec)
            f = np.asarray(spec.running_reward.value(t_i, x, a_vec), dtype=float)
            objs.append(f * lattice.dt + lattice.expectation(i, cont, probs))
        best = np.argmax(np.stack(objs), axis=0)
        return grid[best]

    profile = getattr(spec.drift, "action_profile", None)
    if profile is not None and isinstance(spec.running_reward, PolyReward):
        b0, b1 = spec.drift.action_profile(t_i, x)
        sig = np.broadcast_to(np.asarray(spec.sigma.sigma(t_i, x), dtype=float), x.shape)
        s1 = sig * lattice.dt
        h = lattice.spans[i] * lattice.dx
        var = sig ** 2 * lattice.dt
        idx = np.arange(lattice.n_x)
        c_up = lattice.gather(cont, idx + lattice.spans[i])
        c_dn = lattice.gather(cont, idx - lattice.spans[i])
        d1 = (c_up - c_dn) / (2.0 * h)
        d2 = (c_up - 2.0 * cont + c_dn) / (2.0 * h * h)
        a2, a1, _ = spec.running_reward.action_profile(t_i, x)
        q2 = lattice.dt * np.asarray(a2) + (s1 * b1) ** 2 * d2
        q1 = (lattice.dt * np.asarray(a1) + s1 * np.asarray(b1) * d1
              + 2.0 * s1 ** 2 * np.asarray(b0) * np.asarray(b1) * d2)
        return argmax_quadratic(q2, q1, lo, hi)

    # no analytic profile: fall back to a fixed grid with refinement
    return _best_actions(lattice, i, cont, 129)


def _boundary_leak(lattice, policy_table):
    """Maximum per-step probability mass pushed beyond the state grid when the
    chain starts at x0 and follows the computed policy."""
    x0 = lattice.spec.x0
    j0 = int(np.clip(np.searchsorted(lattice.x_nodes, x0), 0, lattice.n_x - 1))
    dist = np.zeros(lattice.n_x)
    dist[j0] = 1.0
    worst = 0.0
    idx = np.arange(lattice.n_x)
    for i in range(lattice.n_steps):
        p_dn, p_mid, p_up = lattice.probabilities(i, policy_table[i])
        new = np.zeros(lattice.n_x)
        np.add.at(new, idx, p_mid * dist)
        up_t = idx + lattice.spans[i]
        dn_t = idx - lattice.spans[i]
        leak = 0.0
        for targets, p in ((up_t, p_up), (dn_t, p_dn)):
            ok = (targets >= 0) & (targets < lattice.n_x)
            np.add.at(new, targets[ok], (p * dist)[ok])
            leak += float(np.sum((p * dist)[~ok]))
        worst = max(worst, leak)
        dist = new
    return worst


def solve_classical(lattice, reward_fn, terminal_values, step_factor=1.0, n_actions=None):
    """Classical dynamic programming on the same lattice.

    ``reward_fn(t, x_nodes, actions)`` is the per-step running reward,
    ``step_factor`` an optional per-step multiplicative discount applied to the
    continuation (1 for undiscounted classical problems).  Returns
    (values, policy_table).  Used for adjusted-reward cross checks.
    """
    spec = lattice.spec
    n, nx = lattice.n_steps, lattice.n_x
    x = lattice.x_nodes
    lo, hi = spec.action_box[0]
    values = np.empty((n + 1, nx))
    policy_table = np.empty((n + 1, nx))
    values[n] = np.asarray(terminal_values, dtype=float)
    policy_table[n] = spec.midpoint_action()
    for i in range(n - 1, -1, -1):
        t_i = lattice.t_nodes[i]
        cont = step_factor * values[i + 1]
        if n_actions is not None:
            grid = np.linspace(lo, hi, int(n_actions)) if n_actions > 1 else np.array([0.5 * (lo + hi)])
            objs = []
            for a in grid:
                a_vec = np.full(nx, a)
                probs = lattice.probabilities(i, a_vec)
                f = np.asarray(reward_fn(t_i, x, a_vec), dtype=float)
                objs.append(f * lattice.dt + lattice.expectation(i, cont, probs))
            stack = np.stack(objs)
            best = np.argmax(stack, axis=0)
            policy_table[i] = grid[best]
            values[i] = np.take_along_axis(stack, best[None, :], axis=0)[0]
        else:
            a_star = _classical_best(lattice, i, cont, reward_fn)
            policy_table[i] = a_star
            probs = lattice.probabilities(i, a_star)
            f = np.asarray(reward_fn(t_i, x, a_star), dtype=float)
            values[i] = f * lattice.dt + lattice.expectation(i, cont, probs)
    return values, policy_table


def _classical_best(lattice, i, cont, reward_fn):
    spec = lattice.spec
    t_i = lattice.t_nodes[i]
    x = lattice.x_nodes
    lo, hi = spec.action_box[0]
    profile = getattr(spec.drift, "action_profile", None)
    if profile is None:
        return _classical_grid_best(lattice, i, cont, reward_fn, 129)
    quad = _reward_quadratic(reward_fn, t_i, x, lo, hi)
    if quad is None:
        return _classical_grid_best(lattice, i, cont, reward_fn, 129)
    a2, a1 = quad
    b0, b1 = spec.drift.action_profile(t_i, x)
    sig = np.broadcast_to(np.asarray(spec.sigma.sigma(t_i, x), dtype=float), x.shape)
    s1 = sig * lattice.dt
    h = lattice.spans[i] * lattice.dx
    idx = np.arange(lattice.n_x)
    c_up = lattice.gather(cont, idx + lattice.spans[i])
    c_dn = lattice.gather(cont, idx - lattice.spans[i])
    d1 = (c_up - c_dn) / (2.0 * h)
    d2 = (c_up - 2.0 * cont + c_dn) / (2.0 * h * h)
    q2 = lattice.dt * a2 + (s1 * np.asarray(b1)) ** 2 * d2
    q1 = (lattice.dt * a1 + s1 * np.asarray(b1) * d1
          + 2.0 * s1 ** 2 * np.asarray(b0) * np.asarray(b1) * d2)
    return argmax_quadratic(q2, q1, lo, hi)


def _classical_grid_best(lattice, i, cont, reward_fn, n_actions):
    spec = lattice.spec
    t_i = lattice.t_nodes[i]
    x = lattice.x_nodes
    lo, hi = spec.action_box[0]
    grid = np.linspace(lo, hi, n_actions)
    objs = []
    for a in grid:
        a_vec = np.full(lattice.n_x, a)
        probs = lattice.probabilities(i, a_vec)
        f = np.asarray(reward_fn(t_i, x, a_vec), dtype=float)
        objs.append(f * lattice.dt + lattice.expectation(i, cont, probs))
    best = np.argmax(np.stack(objs), axis=0)
    return grid[best]


def _reward_quadratic(reward_fn, t, x, lo, hi):
    """Recover exact quadratic action coefficients of a reward by probing it at
    three actions; returns None when the probe is inconsistent (non-quadratic)."""
    a_pts = np.array([lo, 0.5 * (lo + hi), hi])
    if a_pts[0] == a_pts[2]:
        return np.zeros_like(x), np.zeros_like(x)
    f0 = np.asarray(reward_fn(t, x, np.full_like(x, a_pts[0])), dtype=float)
    f1 = np.asarray(reward_fn(t, x, np.full_like(x, a_pts[1])), dtype=float)
    f2 = np.asarray(reward_fn(t, x, np.full_like(x, a_pts[2])), dtype=float)
    # Lagrange coefficients on three equally spaced probes
    d = a_pts[1] - a_pts[0]
    a2 = (f2 - 2.0 * f1 + f0) / (2.0 * d * d)
    a1 = (f2 - f0) / (2.0 * d) - a2 * 2.0 * a_pts[1]
    # consistency probe at a fourth point
    a_chk = a_pts[0] + 0.37 * (a_pts[2] - a_pts[0])
    f_chk = np.asarray(reward_fn(t, x, np.full_like(x, a_chk)), dtype=float)
    model = a2 * a_chk ** 2 + a1 * a_chk + (f1 - a2 * a_pts[1] ** 2 - a1 * a_pts[1])
    scale = 1.0 + np.max(np.abs(f_chk))
    if np.max(np.abs(model - f_chk)) > 1e-8 * scale:
        return None
    return a2, a1


def export_policy(equilibrium):
    """Equilibrium policy as an interpolating feedback table."""
    lat = equilibrium.lattice
    return FeedbackPolicy(lat.t_nodes, lat.x_nodes, equilibrium.policy_table,
                          label="lattice_equilibrium")
