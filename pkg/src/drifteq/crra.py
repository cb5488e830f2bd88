"""Analytic ground truth for the isoelastic consumption-investment problem.

The sophisticated equilibrium keeps a constant investment fraction beta/eta of
wealth and consumes at rate a(t)^(-1/eta) * wealth, where the consumption
coefficient a solves

    a(t) = w(T - t) G(T; t) + int_t^T w(r - t) a(r)^q G(r; t) dr,
    G(r; t) = exp( (1 - eta) int_t^r alpha(u) du ),
    alpha(u) = rate + beta^2 / (2 eta) - a(u)^(-1/eta),   q = 1 - 1/eta,

with w the discount function and a(T) = 1.  For log utility (eta = 1) the
growth factor G collapses to 1 and the solution is closed form:

    a(t) = w(T - t) + int_0^(T-t) w(u) du.

The general case is solved by fixed-point (Picard) iteration on a uniform
grid; non-convergence and loss of positivity are reported as errors, never
clamped.
"""

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad

from .errors import ConfigurationError, SolverError
from .problems import AnalyticPolicy


def _kernel_antiderivative(discount, tau):
    """int_0^tau of the discount function, analytic when available."""
    anti = getattr(discount, "antiderivative", None)
    if anti is not None:
        return anti(tau)
    tau_arr = np.atleast_1d(np.asarray(tau, dtype=float))
    out = np.array([quad(lambda u: float(discount.phi(u)), 0.0, tt,
                         epsabs=1e-10, epsrel=1e-10)[0] for tt in tau_arr])
    return out if np.ndim(tau) else float(out[0])


def log_consumption_coefficient(discount, horizon, t):
    """Closed-form consumption coefficient for log utility.

    Parameters
    ----------
    discount : DiscountFunction
    horizon : float
        Terminal time T.
    t : float or array
        Evaluation times in [0, T].
    """
    tau = horizon - np.asarray(t, dtype=float)
    if np.any(tau < -1e-12) or np.any(tau > horizon + 1e-12):
        raise ConfigurationError("t must lie in [0, horizon]")
    tau = np.clip(tau, 0.0, horizon)
    out = np.asarray(discount.phi(tau) + _kernel_antiderivative(discount, tau))
    return out if out.shape else float(out)


class ConsumptionCurve:
    """Consumption coefficient a(t) on a uniform grid plus derived policy."""

    def __init__(self, discount, horizon, eta, rate, beta, t_nodes, values,
                 iterations, deltas):
        self.discount = discount
        self.horizon = horizon
        self.eta = eta
        self.rate = rate
        self.beta = beta
        self.t_nodes = t_nodes
        self.values = values
        self.iterations = iterations
        self.deltas = deltas

    def at(self, t):
        out = np.interp(np.asarray(t, dtype=float), self.t_nodes, self.values)
        return out if out.shape else float(out)

    def fraction(self, t):
        """Equilibrium consumption as a fraction of wealth: a(t)^(-1/eta)."""
        return self.at(t) ** (-1.0 / self.eta)

    def investment_fraction(self):
        """Equilibrium risky-investment fraction of wealth (constant in t)."""
        return self.beta / self.eta

    def policy(self):
        """Two-coordinate feedback policy (investment, consumption) in levels."""
        frac_inv = self.investment_fraction()

        def act(t, x):
            x = np.asarray(x, dtype=float)
            cons = self.fraction(t) * x
            inv = frac_inv * x
            return np.stack([np.broadcast_to(inv, cons.shape), cons], axis=-1)

        return AnalyticPolicy(act, label="crra_equilibrium", action_dim=2)

    def consumption_policy(self):
        """Scalar consumption-level policy for the consumption-only encoding."""
        return AnalyticPolicy(lambda t, x: self.fraction(t) * np.asarray(x, dtype=float),
                              label="crra_consumption", action_dim=1)

    def table(self):
        """Rows (t, a(t), consumption fraction) for export."""
        return np.column_stack([self.t_nodes, self.values,
                                self.values ** (-1.0 / self.eta)])


def consumption_coefficient_curve(discount, horizon, eta=1.0, rate=0.0, beta=0.0,
                                  n_nodes=801, tol=1e-10, max_iter=200,
                                  verbose=False):
    """Solve for the consumption coefficient by fixed-point iteration.

    Parameters
    ----------
    discount : DiscountFunction
    horizon : float
    eta : float
        Risk aversion in (0, 1]; eta = 1 is log utility (single pass).
    rate, beta : float
        Interest rate and market price of risk.
    n_nodes : int
        Uniform grid size (trapezoid quadrature of the memory integral).
    tol, max_iter : float, int
        Sup-norm fixed-point controls.  Hitting max_iter raises SolverError
        with the recent update sizes; so does any nonpositive iterate.
    """
    if not (0.0 < eta <= 1.0):
        raise ConfigurationError("eta must be in (0, 1], got %r" % eta)
    if horizon <= 0:
        raise ConfigurationError("horizon must be positive")
    if n_nodes < 9:
        raise ConfigurationError("need at least 9 grid nodes")

    t = np.linspace(0.0, horizon, n_nodes)
    h = horizon / (n_nodes - 1)
    tau = t[None, :] - t[:, None]
    upper = tau >= -1e-14
    w = np.zeros_like(tau)
    w[upper] = discount.phi(np.clip(tau[upper], 0.0, horizon))

    a = np.ones(n_nodes)
    one_m = 1.0 - eta
    q = 1.0 - 1.0 / eta
    deltas = []
    for it in range(1, max_iter + 1):
        alpha = rate + beta ** 2 / (2.0 * eta) - a ** (-1.0 / eta)
        big_a = cumulative_trapezoid(alpha, t, initial=0.0)
        growth = np.exp(one_m * (big_a[None, :] - big_a[:, None]))
        core = w * (a ** q)[None, :] * growth
        tail = np.cumsum(core[:, ::-1], axis=1)[:, ::-1]
        rows = np.arange(n_nodes)
        integral = h * (tail[rows, rows] - 0.5 * (core[rows, rows] + core[:, -1]))
        a_new = w[:, -1] * growth[:, -1] + integral
        if np.min(a_new) <= 0.0:
            raise SolverError(
                "consumption coefficient lost positivity at iteration %d "
                "(min %.3e); the policy would be ill-defined" % (it, np.min(a_new)))
        delta = float(np.max(np.abs(a_new - a)))
        deltas.append(delta)
        a = a_new
        if verbose:
            print("  [crra] iter %d delta %.3e" % (it, delta))
        if delta <= tol:
            return ConsumptionCurve(discount, horizon, eta, rate, beta, t, a, it, deltas)
    raise SolverError(
        "consumption coefficient iteration did not reach %.1e in %d passes; "
        "recent updates: %s" % (tol, max_iter,
                                ", ".join("%.3e" % d for d in deltas[-5:])))
