"""Simulation route: the coupled value/family system as a backward system of
stochastic equations solved by regression Picard iteration.

Paths are simulated once under a fixed exploration policy; the drift the
exploration adds to the state is removed from every driver through the change
of measure term -zsig * b(t, x, mu).  One Picard sweep maps the previous
iterate's fitted surfaces to new ones:

    y-target_i  = xi(X_T) + sum_{j >= i} g_j dt
    g_j         = f(t_j, X, a*) + zsig(X) (b(t_j, X, a*) - b(t_j, X, mu))
                  - udiag(t_j, X)
    u-target_i  = dsw(s, T) xi(X_T) + sum_{j >= i, t_j >= s} gs_j dt
    gs_j        = dsw(s, t_j) f(t_j, X, a*) + vsig^s(X) (b(a*) - b(mu))

with a* the Hamiltonian maximizer at the previous iterate's slope zsig/sigma,
dsw the s-derivative of the discount kernel, and udiag the diagonal of the
u-family interpolated from the evaluation-time slices with s <= t.  New
surfaces come from per-step polynomial regression of the targets on the state
(zsig and vsig regress target * dW/dt).  Because the paths are frozen, the
sweep is a deterministic map on regression coefficients; the iteration
distance is an exact weighted mean-square norm of coefficient changes
computed through per-step Gram matrices, and convergence is geometric down to
round-off when the map contracts.
"""

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigurationError, SolverError
from .problems import ConstantPolicy, FeedbackPolicy, maximizer
from .simulate import TimeGrid, simulate_paths

_TOL = 1e-12
_TRACE = 0          # set to a step stride to print sweep internals


class _StepBasis:
    """Standardized polynomial basis for one time step's state cloud.

    With ``transform="log"`` the polynomial is taken in log-state, the
    appropriate coordinates for multiplicative (wealth-type) dynamics where a
    raw polynomial oscillates on the lognormal cloud's tails.
    """

    def __init__(self, x, degree, transform=None):
        self.transform = transform
        g = self._map(x)
        self.mean = float(np.mean(g))
        std = float(np.std(g))
        self.degenerate = std < 1e-10
        self.std = 1.0 if self.degenerate else std
        self.n_cols = 1 if self.degenerate else degree + 1

    def _map(self, x):
        x = np.asarray(x, dtype=float)
        if self.transform == "log":
            return np.log(np.maximum(x, 1e-300))
        return x

    def design(self, x):
        g = self._map(x)
        xt = (g - self.mean) / self.std
        cols = np.empty(xt.shape + (self.n_cols,))
        cols[..., 0] = 1.0
        for p in range(1, self.n_cols):
            cols[..., p] = cols[..., p - 1] * xt
        return cols


class BsdeSolution:
    """Fitted value/slope surfaces, the u-family, and the iteration history."""

    def __init__(self, spec, grid, s_vals, bases, coeffs_y, coeffs_zsig,
                 coeffs_u, coeffs_vsig, history, converged, ensemble,
                 exploration_label, weight_rate, degree):
        self.spec = spec
        self.grid = grid
        self.s_vals = s_vals
        self._bases = bases
        self.coeffs_y = coeffs_y        # (n+1, p)
        self.coeffs_zsig = coeffs_zsig  # (n+1, p)
        self.coeffs_u = coeffs_u        # (n_s, n+1, p), NaN where s > t
        self.coeffs_vsig = coeffs_vsig
        self.history = history          # list of per-iteration records
        self.converged = converged
        self.ensemble = ensemble
        self.exploration_label = exploration_label
        self.weight_rate = weight_rate
        self.degree = degree

    # -- surface evaluation ---------------------------------------------------

    def _eval(self, coeff_row, i, x):
        b = self._bases[i].design(np.asarray(x, dtype=float))
        return b @ np.asarray(coeff_row)[..., :self._bases[i].n_cols]

    def y_at_step(self, i, x):
        return self._eval(self.coeffs_y[i], i, x)

    def zsig_at_step(self, i, x):
        return self._eval(self.coeffs_zsig[i], i, x)

    def slope_at_step(self, i, x):
        sig = self.spec.sigma.sigma(self.grid.nodes[i], np.asarray(x, dtype=float))
        return self.zsig_at_step(i, x) / sig

    def udiag_at_step(self, i, x):
        coeffs = _diag_coeffs(self.s_vals, self.coeffs_u[:, i, :], self.grid.nodes[i])
        return self._eval(coeffs, i, x)

    def u_at_step(self, k, i, x):
        if self.s_vals[k] > self.grid.nodes[i] + _TOL:
            raise ConfigurationError("u-family undefined for s > t")
        return self._eval(self.coeffs_u[k, i], i, x)

    def value_at(self, t, x):
        nodes = self.grid.nodes
        i = int(np.clip(np.searchsorted(nodes, t) - 1, 0, len(nodes) - 2))
        w = min(max((t - nodes[i]) / self.grid.dt, 0.0), 1.0)
        lo = self.y_at_step(i, x)
        hi = self.y_at_step(i + 1, x)
        out = (1 - w) * lo + w * hi
        return float(out) if np.isscalar(x) else out

    def policy(self, n_x=101):
        """Feedback table of the Hamiltonian maximizer on the fitted slopes."""
        states = self.ensemble.states
        x_lo = float(np.quantile(states, 0.01))
        x_hi = float(np.quantile(states, 0.99))
        if x_hi - x_lo < 1e-9:
            x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
        x_grid = np.linspace(x_lo, x_hi, n_x)
        nodes = self.grid.nodes
        table = np.empty((len(nodes), n_x))
        for i in range(len(nodes)):
            table[i] = maximizer(self.spec, nodes[i], x_grid, self.slope_at_step(i, x_grid))
        return FeedbackPolicy(nodes, x_grid, table, label="bsde_equilibrium")

    def contraction_report(self):
        """Iteration distances, successive ratios, and a geometric-decay flag.

        Needs at least three completed iterations; ratios pair consecutive
        distances (0/0 counts as 0).
        """
        deltas = [rec["delta"] for rec in self.history]
        if len(deltas) < 3:
            raise SolverError("contraction report needs at least 3 iterations")
        ratios = []
        for k in range(len(deltas) - 1):
            if deltas[k] == 0.0:
                ratios.append(0.0 if deltas[k + 1] == 0.0 else np.inf)
            else:
                ratios.append(deltas[k + 1] / deltas[k])
        geometric = bool(max(ratios[1:]) < 1.0) if len(ratios) > 1 else bool(ratios[0] < 1.0)
        return {"deltas": deltas, "ratios": ratios, "geometric": geometric,
                "converged": self.converged, "iterations": len(deltas)}

    def describe(self):
        return {
            "solver": "bsde",
            "n_steps": self.grid.n_steps,
            "n_paths": self.ensemble.n_paths,
            "degree": self.degree,
            "basis": self._bases[0].transform or "poly",
            "n_s": int(self.s_vals.size),
            "weight_rate": self.weight_rate,
            "exploration": self.exploration_label,
            "iterations": len(self.history),
            "converged": self.converged,
            "final_delta": self.history[-1]["delta"] if self.history else None,
        }


def _diag_coeffs(s_vals, coeff_slices, t):
    """Coefficient row of the u-family diagonal at evaluation time t, linearly
    interpolated (or extrapolated) from the largest two slices with s <= t."""
    mask = np.flatnonzero(s_vals <= t + _TOL)
    if mask.size == 0:
        raise ConfigurationError("no evaluation-time node at or below t=%r" % t)
    k1 = mask[-1]
    if abs(s_vals[k1] - t) < _TOL or mask.size == 1:
        return coeff_slices[k1]
    k0 = mask[-2]
    w = (t - s_vals[k1]) / (s_vals[k1] - s_vals[k0])
    return coeff_slices[k1] + w * (coeff_slices[k1] - coeff_slices[k0])


def _default_weight_rate(spec):
    """2x a crude Lipschitz bound on the driver's slope coupling: the spread
    of the drift over the action box near the start point."""
    lo, hi = spec.action_box[0]
    t_probe = np.array([0.0, 0.5 * spec.horizon, spec.horizon])
    x_probe = spec.x0 + np.array([-1.0, 0.0, 1.0])
    span = 0.0
    for t in t_probe:
        vals = [np.max(np.abs(spec.drift.value(t, x_probe, np.full(3, a))))
                for a in (lo, 0.5 * (lo + hi), hi)]
        span = max(span, float(np.max(vals) - np.min(vals)), float(np.max(vals)))
    rate = 2.0 * span + 1.0
    return min(rate, 20.0 / max(spec.horizon, 1e-6))


def _pick_s_values(grid, n_s):
    n = grid.n_steps
    if n_s is None:
        n_s = max(2, n // 4 + 1)
    if n_s < 1:
        raise ConfigurationError("n_s must be positive")
    idx = np.unique(np.round(np.linspace(0, n, min(n_s, n + 1))).astype(int))
    if idx[0] != 0:
        idx = np.concatenate(([0], idx))
    return grid.nodes[idx]


def solve_bsde(spec, n_steps, n_paths, seed, degree=4, n_s=None, exploration=None,
               max_iter=15, tol=1e-4, weight_rate=None, damping=0.0,
               basis="poly", verbose=True):
    """Solve the coupled backward system by regression Picard iteration.

    Parameters
    ----------
    spec : ProblemSpec
        Markovian separable problem with a scalar action.
    n_steps, n_paths : int
        Time steps and simulated paths (paths are frozen across iterations).
    seed : int
        Stream seed for the path ensemble.
    degree : int
        Polynomial regression degree in the (standardized) state.
    basis : str
        "poly" fits polynomials in the state, "log" in log-state (use the
        latter for positive multiplicative dynamics such as wealth).
    n_s : int, optional
        Evaluation-time nodes for the u-family, snapped onto the time grid;
        default places one node on every 4th step.
    exploration : policy, optional
        Measure the paths are drawn under; defaults to the constant midpoint
        action.  A policy close to the equilibrium makes the sweep contract
        fast because the drift spread b(a*) - b(mu) shrinks.
    max_iter, tol : int, float
        Picard controls; ``tol`` is on the weighted surface distance.
    weight_rate : float, optional
        Exponential time weight in the iteration distance; default is a
        Lipschitz-based heuristic.
    damping : float
        Optional under-relaxation in [0, 1): each sweep keeps this fraction
        of the old surfaces.  Off by default.
    verbose : bool
        Print one line per iteration.
    """
    spec.require_markovian("regression solver")
    spec.require_separable("regression solver")
    spec.require_scalar_action("regression solver")
    if n_paths < 10 * (degree + 1):
        raise ConfigurationError("need n_paths >= 10 * (degree + 1)")
    if degree < 0:
        raise ConfigurationError("degree must be >= 0")
    if not (0.0 <= damping < 1.0):
        raise ConfigurationError("damping must be in [0, 1)")
    if not (tol > 0.0):
        raise ConfigurationError("tol must be positive")
    if max_iter < 1:
        raise ConfigurationError("max_iter must be >= 1")
    if basis not in ("poly", "log"):
        raise ConfigurationError("basis must be poly or log, got %r" % basis)

    if exploration is None:
        exploration = ConstantPolicy(spec.midpoint_action(), label="midpoint_exploration")
    grid = TimeGrid(0.0, spec.horizon, n_steps)
    ensemble = simulate_paths(spec, exploration, grid, n_paths, seed,
                              seed_tags=("bsde", "paths"))
    if weight_rate is None:
        weight_rate = _default_weight_rate(spec)

    s_vals = _pick_s_values(grid, n_s)
    n_s_eff = s_vals.size
    n = n_steps
    nodes = grid.nodes
    dt = grid.dt
    states = ensemble.states
    actions_mu = ensemble.actions
    dw = ensemble.increments

    if verbose:
        print("[bsde] %d steps, %d paths, degree %d, %d s-nodes, weight rate %.3g, "
              "exploring with %s" % (n, n_paths, degree, n_s_eff, weight_rate,
                                     exploration.label))

    # per-step bases, Gram matrices, Cholesky factors (fixed across iterations)
    transform = "log" if basis == "log" else None
    bases = [_StepBasis(states[:, i], degree, transform) for i in range(n + 1)]
    if any(b.degenerate for b in bases[1:]) and verbose:
        print("[bsde] warning: degenerate state cloud at some steps; basis "
              "reduced to a constant there")
    grams = []
    chols = []
    wchols = []
    for i in range(n + 1):
        b = bases[i].design(states[:, i])
        g = b.T @ b / n_paths
        grams.append(g)
        chols.append(cho_factor(g + 1e-12 * np.eye(g.shape[0])))
        if i < n:
            wb = b * dw[:, i][:, None]
            wg = wb.T @ wb / n_paths
            wchols.append(cho_factor(wg + 1e-14 * np.eye(wg.shape[0])))

    p_max = max(bs.n_cols for bs in bases)

    def _regress(i, design, rhs_matrix):
        # normal equations with the precomputed factorization
        bt = design.T @ rhs_matrix / n_paths
        return cho_solve(chols[i], bt)

    def _slope_regress(i, wdesign, rhs_matrix):
        # least squares of a one-step surface increment on the
        # Delta-W-scaled basis: the Brownian part of the increment is the
        # model term, so the residual is O(dt) and the fitted coefficients
        # estimate the diffusion-scaled state derivative with O(1/sqrt(n))
        # noise carrying no 1/dt factor
        bt = wdesign.T @ rhs_matrix / n_paths
        return cho_solve(wchols[i], bt)

    # iteration-independent terminal fits
    terminal = np.asarray(spec.terminal_reward.value(states[:, n]), dtype=float)
    b_n = bases[n].design(states[:, n])
    dsw_T = spec.ds_kernel(s_vals, spec.horizon)
    term_rhs = np.column_stack([terminal] + [dsw_T[k] * terminal for k in range(n_s_eff)])
    term_fit = _regress(n, b_n, term_rhs)

    def _blank():
        y = np.zeros((n + 1, p_max))
        z = np.zeros((n + 1, p_max))
        u = np.zeros((n_s_eff, n + 1, p_max))
        v = np.zeros((n_s_eff, n + 1, p_max))
        return y, z, u, v

    cy, cz, cu, cv = _blank()
    active_lists = [np.flatnonzero(s_vals <= nodes[i] + _TOL) for i in range(n + 1)]
    time_weights = np.exp(weight_rate * nodes)

    def _backward_sweep(cy, cz, cu, cv, evaluate):
        """One sweep of the fixed-point map.  In evaluate mode the sampled
        actions are kept (policy evaluation, no drift correction), which
        initializes the iteration at the exploration policy's own surfaces."""
        ny, nz, nu, nv = _blank()
        ny[n, :bases[n].n_cols] = term_fit[:, 0]
        for k in range(n_s_eff):
            nu[k, n, :bases[n].n_cols] = term_fit[:, 1 + k]

        b_up = b_n

        for i in range(n - 1, -1, -1):
            t_i = nodes[i]
            x_i = states[:, i]
            p_i = bases[i].n_cols
            b_i = bases[i].design(x_i)
            active = active_lists[i]

            # surfaces just fitted at step i+1, evaluated at both ends of the
            # step: the increment feeds the slope fit and the value at the far
            # end is the one-step regression target (reprojection keeps the
            # target variance O(dt) instead of accumulating path noise)
            p_up = bases[i + 1].n_cols
            b_up_here = bases[i + 1].design(x_i)
            y_up = b_up @ ny[i + 1, :p_up]
            y_inc = y_up - b_up_here @ ny[i + 1, :p_up]

            # the slope surface is fitted first and fed straight back into
            # this sweep's drivers (the within-step update keeps the value
            # recursion stable when the drift correction reacts strongly to
            # the slope); the curve family comes from the previous iterate
            wb_i = b_i * dw[:, i][:, None]
            z_fit = _slope_regress(i, wb_i, y_inc[:, None])
            nz[i, :p_i] = z_fit[:, 0]
            zsig_i = b_i @ nz[i, :p_i]

            prev_cols = [cv[k, i, :p_i] for k in active]
            if prev_cols:
                prev_v = b_i @ np.column_stack(prev_cols)
            else:
                prev_v = np.zeros((x_i.size, 0))
            udiag_prev = b_i @ _diag_coeffs(s_vals, cu[:, i, :p_i], t_i)

            if evaluate:
                a_star = actions_mu[:, i]
                spread = np.zeros_like(x_i)
            else:
                sig_i = np.broadcast_to(
                    np.asarray(spec.sigma.sigma(t_i, x_i), dtype=float), x_i.shape)
                a_star = maximizer(spec, t_i, x_i, zsig_i / sig_i)
                b_star = np.asarray(spec.drift.value(t_i, x_i, a_star), dtype=float)
                b_mu = np.asarray(spec.drift.value(t_i, x_i, actions_mu[:, i]),
                                  dtype=float)
                spread = b_star - b_mu
            f_star = np.asarray(spec.running_reward.value(t_i, x_i, a_star), dtype=float)

            y_target = y_up + dt * (f_star + zsig_i * spread - udiag_prev)

            rhs_cols = [y_target]
            if active.size:
                dsw_i = spec.ds_kernel(s_vals[active], t_i)
                u_up = b_up @ nu[active, i + 1, :p_up].T
                u_inc = u_up - b_up_here @ nu[active, i + 1, :p_up].T
                v_fit = _slope_regress(i, wb_i, u_inc)
                gs = dsw_i[:, None] * f_star[None, :] + prev_v.T * spread[None, :]
                rhs_cols.extend(u_up.T + dt * gs)
            fit = _regress(i, b_i, np.column_stack(rhs_cols))

            ny[i, :p_i] = fit[:, 0]
            for j, k in enumerate(active):
                nu[k, i, :p_i] = fit[:, 1 + j]
                nv[k, i, :p_i] = v_fit[:, j]
            b_up = b_i

            if _TRACE and (i % _TRACE == 0 or i >= n - 2):
                print("  [trace i=%3d] zsig[%9.3f %9.3f] a*[%7.3f %7.3f] "
                      "spr[%8.2f %8.2f] udiag[%8.3f %8.3f] y*[%9.3f %9.3f] mean_y* %9.4f"
                      % (i, zsig_i.min(), zsig_i.max(), np.min(a_star), np.max(a_star),
                         spread.min(), spread.max(), udiag_prev.min(), udiag_prev.max(),
                         y_target.min(), y_target.max(), y_target.mean()))

        nz[n] = nz[n - 1]
        return ny, nz, nu, nv

    # start from the exploration policy's own surfaces: the family drivers do
    # not depend on the previous iterate when the sampled actions are kept, so
    # two evaluation sweeps reproduce them exactly (the second one feeds the
    # settled u-diagonal back into the value driver)
    for _ in range(2):
        cy, cz, cu, cv = _backward_sweep(cy, cz, cu, cv, evaluate=True)

    history = []
    converged = False
    for it in range(1, max_iter + 1):
        ny, nz, nu, nv = _backward_sweep(cy, cz, cu, cv, evaluate=False)

        if damping > 0.0:
            ny = (1.0 - damping) * ny + damping * cy
            nz = (1.0 - damping) * nz + damping * cz
            nu = (1.0 - damping) * nu + damping * cu
            nv = (1.0 - damping) * nv + damping * cv

        # exact weighted mean-square distance between successive surfaces
        blocks = {"y": 0.0, "z": 0.0, "u": 0.0, "v": 0.0}
        for i in range(n + 1):
            p_i = bases[i].n_cols
            g = grams[i]
            wdt = time_weights[i] * dt
            d = ny[i, :p_i] - cy[i, :p_i]
            blocks["y"] += wdt * float(d @ g @ d)
            d = nz[i, :p_i] - cz[i, :p_i]
            blocks["z"] += wdt * float(d @ g @ d)
            act = active_lists[i]
            if act.size:
                fam_u = 0.0
                fam_v = 0.0
                for k in act:
                    d = nu[k, i, :p_i] - cu[k, i, :p_i]
                    fam_u += float(d @ g @ d)
                    d = nv[k, i, :p_i] - cv[k, i, :p_i]
                    fam_v += float(d @ g @ d)
                blocks["u"] += wdt * fam_u / act.size
                blocks["v"] += wdt * fam_v / act.size
        delta = float(np.sqrt(sum(blocks.values())))

        history.append({"iteration": it, "delta": delta,
                        "block_deltas": {k: float(np.sqrt(vv)) for k, vv in blocks.items()}})
        if verbose:
            ratio = (delta / history[-2]["delta"]
                     if len(history) > 1 and history[-2]["delta"] > 0 else np.nan)
            print("[bsde] iter %2d  delta %.6e  ratio %s"
                  % (it, delta, "%.4f" % ratio if np.isfinite(ratio) else "--"))

        cy, cz, cu, cv = ny, nz, nu, nv
        if delta <= tol:
            converged = True
            break

    if not converged and verbose:
        print("[bsde] warning: not converged after %d iterations (delta %.3e)"
              % (max_iter, history[-1]["delta"]))

    return BsdeSolution(spec, grid, s_vals, bases, cy, cz, cu, cv, history,
                        converged, ensemble, exploration.label, weight_rate, degree)
