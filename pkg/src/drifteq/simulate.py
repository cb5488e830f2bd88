"""Seeded path simulation and Monte Carlo reward estimators.

Paths follow the Euler scheme for the weak-form dynamics

    X[i+1] = X[i] + sigma(t_i, X[i]) * ( b(t_i, X[i], a_i) * dt + dW_i ),

with Brownian increments drawn once per ensemble, independent of the policy,
so two policies simulated with the same seed share their noise (common random
numbers).  Sub-streams for nested re-simulation derive from the master seed
through a counter tuple, so every estimate is reproducible bit-for-bit.
"""

import zlib

import numpy as np

from .errors import ConfigurationError, DomainError, SimulationError


def _tag_word(tag):
    if isinstance(tag, str):
        return zlib.crc32(tag.encode())
    return int(tag)


def sub_rng(seed, *tags):
    """Deterministic child generator for (seed, *tags); tags may be small
    ints or short strings (hashed stably)."""
    entropy = (int(seed),) + tuple(_tag_word(t) for t in tags)
    return np.random.default_rng(np.random.SeedSequence(entropy))


class TimeGrid:
    """Uniform grid on [t0, horizon]; the last node is exactly the horizon."""

    def __init__(self, t0, horizon, n_steps):
        if n_steps < 1:
            raise ConfigurationError("time grid needs at least one step")
        if not (t0 < horizon):
            raise ConfigurationError("time grid needs t0 < horizon, got [%r, %r]" % (t0, horizon))
        self.t0 = float(t0)
        self.horizon = float(horizon)
        self.n_steps = int(n_steps)
        self.nodes = np.linspace(self.t0, self.horizon, self.n_steps + 1)
        self.nodes[-1] = self.horizon
        self.dt = (self.horizon - self.t0) / self.n_steps


class PathEnsemble:
    """Simulated ensemble: states on nodes, actions/increments on steps.

    The stored seed and policy label are enough to regenerate the ensemble
    bit-for-bit via simulate_paths.
    """

    def __init__(self, grid, states, actions, increments, seed, policy_label, x_init):
        self.grid = grid
        self.states = states
        self.actions = actions
        self.increments = increments
        self.seed = seed
        self.policy_label = policy_label
        self.x_init = x_init

    @property
    def n_paths(self):
        return self.states.shape[0]


def simulate_paths(spec, policy, grid, n_paths, seed, x_init=None, seed_tags=()):
    """Simulate an Euler ensemble under a feedback policy.

    ``x_init`` may be a scalar (default: the problem's x0) or an array of
    per-path starting states (used by nested re-simulation).  Actions are
    clamped into the action box before entering the drift; states are clipped
    at the problem's state_floor when one is declared (positivity-preserving
    truncation for wealth-type dynamics).  Non-finite states abort with the
    first offending (path, step).
    """
    spec.require_scalar_action("simulate_paths")
    if n_paths < 1:
        raise ConfigurationError("need at least one path")
    if x_init is None:
        x_init = spec.x0
    x_init = np.asarray(x_init, dtype=float)
    if x_init.ndim == 0:
        start = np.full(n_paths, float(x_init))
    elif x_init.shape == (n_paths,):
        start = x_init.astype(float).copy()
    else:
        raise ConfigurationError("x_init must be a scalar or shape (n_paths,), got %r"
                                 % (x_init.shape,))

    rng = sub_rng(seed, *seed_tags)
    dt = grid.dt
    increments = rng.normal(0.0, np.sqrt(dt), size=(n_paths, grid.n_steps))

    floor = getattr(spec, "state_floor", None)
    states = np.empty((n_paths, grid.n_steps + 1))
    actions = np.empty((n_paths, grid.n_steps))
    states[:, 0] = start if floor is None else np.maximum(start, floor)
    for i in range(grid.n_steps):
        t_i = grid.nodes[i]
        x = states[:, i]
        a = spec.clamp_action(np.broadcast_to(np.asarray(policy.act(t_i, x), dtype=float),
                                              x.shape))
        actions[:, i] = a
        sig = spec.sigma.sigma(t_i, x)
        b = spec.drift.value(t_i, x, a)
        nxt = x + sig * (b * dt + increments[:, i])
        states[:, i + 1] = nxt if floor is None else np.maximum(nxt, floor)
        bad = ~np.isfinite(states[:, i + 1])
        if bad.any():
            p = int(np.argmax(bad))
            raise SimulationError("non-finite state at path %d, step %d" % (p, i + 1))

    label = getattr(policy, "label", policy.__class__.__name__)
    return PathEnsemble(grid, states, actions, increments, seed, label, start)


# --------------------------------------------------------------------------
# reward functionals on an ensemble
# --------------------------------------------------------------------------

def reward_totals(spec, ensemble, s):
    """Per-path discounted reward totals judged from evaluation index s.

    Left-endpoint quadrature in time: sum_i w(s, t_i) f(t_i, X_i, a_i) dt plus
    the discounted terminal reward.
    """
    grid = ensemble.grid
    if s > grid.t0 + 1e-12:
        raise DomainError("evaluation index s=%r after the ensemble start %r" % (s, grid.t0))
    totals = np.zeros(ensemble.n_paths)
    for i in range(grid.n_steps):
        t_i = grid.nodes[i]
        totals += spec.discounted_running(s, t_i, ensemble.states[:, i],
                                          ensemble.actions[:, i]) * grid.dt
    totals += spec.discounted_terminal(s, ensemble.states[:, -1])
    return totals


def type_derivative_totals(spec, ensemble, s):
    """Per-path type-derivative totals: d/ds of the reward weights, applied to
    the same running/terminal rewards along the paths."""
    grid = ensemble.grid
    if s > grid.t0 + 1e-12:
        raise DomainError("evaluation index s=%r after the ensemble start %r" % (s, grid.t0))
    totals = np.zeros(ensemble.n_paths)
    for i in range(grid.n_steps):
        t_i = grid.nodes[i]
        totals += spec.type_derivative_running(s, t_i, ensemble.states[:, i],
                                               ensemble.actions[:, i]) * grid.dt
    totals += spec.type_derivative_terminal(s, ensemble.states[:, -1])
    return totals


def _mean_stderr(totals):
    n = totals.size
    mean = float(np.mean(totals))
    if n == 1:
        return mean, float("inf")
    return mean, float(np.std(totals, ddof=1) / np.sqrt(n))


def estimate_reward(spec, policy, s, t, x, n_paths, n_steps, seed, seed_tags=()):
    """Monte Carlo estimate of J(s, t, x, policy); returns (mean, stderr).

    Requires 0 <= s <= t <= horizon; the reward of an earlier time judged
    from a later self (t < s) is not defined.
    """
    _check_st(spec, s, t)
    if t >= spec.horizon - 1e-14:
        return float(np.asarray(spec.discounted_terminal(s, x), dtype=float)), 0.0
    grid = TimeGrid(t, spec.horizon, n_steps)
    ens = simulate_paths(spec, policy, grid, n_paths, seed, x_init=x, seed_tags=seed_tags)
    return _mean_stderr(reward_totals(spec, ens, s))


def estimate_type_derivative(spec, policy, s, t, x, n_paths, n_steps, seed, seed_tags=()):
    """Monte Carlo estimate of the reward's sensitivity to the evaluating self:

        E_(t,x) [ ds_g(s, X_T) + integral_t^T ds_f(s, u, X_u, a_u) du ]

    under the given policy.  Returns (mean, stderr); requires s <= t.
    """
    _check_st(spec, s, t)
    if t >= spec.horizon - 1e-14:
        return float(np.asarray(spec.type_derivative_terminal(s, x), dtype=float)), 0.0
    grid = TimeGrid(t, spec.horizon, n_steps)
    ens = simulate_paths(spec, policy, grid, n_paths, seed, x_init=x, seed_tags=seed_tags)
    return _mean_stderr(type_derivative_totals(spec, ens, s))


def type_derivative_batch(spec, policy, t, starts, inner_paths, n_steps, seed, seed_tags=()):
    """Diagonal type derivatives for many starting states at once.

    For each start x_k the estimate is E_(t, x_k)[...] at s = t, computed from
    ``inner_paths`` paths; one joint ensemble of len(starts) * inner_paths
    paths keeps the nested loops inside numpy.  Returns an array of means.
    """
    starts = np.asarray(starts, dtype=float)
    if t >= spec.horizon - 1e-14:
        return np.asarray(spec.type_derivative_terminal(t, starts), dtype=float)
    grid = TimeGrid(t, spec.horizon, n_steps)
    tiled = np.repeat(starts, inner_paths)
    ens = simulate_paths(spec, policy, grid, tiled.size, seed, x_init=tiled,
                         seed_tags=seed_tags)
    totals = type_derivative_totals(spec, ens, t)
    return totals.reshape(starts.size, inner_paths).mean(axis=1)


def reward_batch(spec, policy, t, starts, inner_paths, n_steps, seed, seed_tags=()):
    """Diagonal reward values J(t, t, x_k, policy) for many starts at once."""
    starts = np.asarray(starts, dtype=float)
    if t >= spec.horizon - 1e-14:
        return np.asarray(spec.discounted_terminal(t, starts), dtype=float)
    grid = TimeGrid(t, spec.horizon, n_steps)
    tiled = np.repeat(starts, inner_paths)
    ens = simulate_paths(spec, policy, grid, tiled.size, seed, x_init=tiled,
                         seed_tags=seed_tags)
    totals = reward_totals(spec, ens, t)
    return totals.reshape(starts.size, inner_paths).mean(axis=1)


def adjusted_reward(spec, policy, t, x, a, n_paths, n_steps, seed, seed_tags=()):
    """Adjusted running reward k_t(x, a) of the equivalent classical problem:

        k_t(x, a) = f(t, x, a) - E_(t,x)[ type-derivative total under policy ].

    The correction does not depend on the action.  Returns (value, stderr of
    the Monte Carlo correction).
    """
    base = float(np.asarray(spec.running_reward.value(t, x, a), dtype=float))
    corr, se = estimate_type_derivative(spec, policy, t, t, x, n_paths, n_steps,
                                        seed, seed_tags=seed_tags)
    return base - corr, se


def _check_st(spec, s, t):
    if not (0.0 <= s <= spec.horizon and 0.0 <= t <= spec.horizon):
        raise DomainError("(s, t)=(%r, %r) outside [0, %r]^2" % (s, t, spec.horizon))
    if t < s - 1e-14:
        raise DomainError("reward estimation needs t >= s, got s=%r t=%r" % (s, t))


def write_ensemble_csv(ensemble, path):
    """Dump an ensemble to CSV (one row per path and node) for debugging."""
    grid = ensemble.grid
    with open(path, "w") as fh:
        fh.write("path,step,t,state,action\n")
        for p in range(ensemble.n_paths):
            for i in range(grid.n_steps + 1):
                act = ensemble.actions[p, i] if i < grid.n_steps else float("nan")
                fh.write("%d,%d,%.12g,%.12g,%.12g\n" % (p, i, grid.nodes[i],
                                                        ensemble.states[p, i], act))
