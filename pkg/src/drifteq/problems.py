"""Problem data model for time-inconsistent drift control.

State follows the controlled scalar diffusion

    dX_r = sigma_r(X_r) * ( b_r(X_r, a_r) dr + dW_r ),

and the agent indexed by evaluation time s ("which self is judging") collects

    J(s, t, x, policy) = E[ integral_t^T phi(r - s) f(r, X_r, a_r) dr
                            + phi(T - s) g(X_T) ],

with a one-variable discount kernel phi (phi(0) = 1), running reward f and
terminal reward g.  Time inconsistency enters only through phi, so the
sensitivity of the reward to the evaluating self (the "type derivative") is
analytic: d/ds phi(t - s) = -phi'(t - s).

This module holds the discount families, the closed library of coefficient
descriptors (volatility, drift, rewards), policy objects, the problem
container, and the drift-control Hamiltonian with its maximizer.
"""

import math

import numpy as np

from .errors import ConfigurationError, DomainError, UnsupportedProblemError

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# --------------------------------------------------------------------------
# discount families
# --------------------------------------------------------------------------

class DiscountFunction:
    """Parametric discount kernel phi(tau) with analytic derivative.

    Families
    --------
    exponential(theta):              phi = exp(-theta * tau), theta >= 0
    hyperbolic(k):                   phi = 1 / (1 + k tau), k > 0
    generalized_hyperbolic(k, m):    phi = (1 + k tau)^(-m), k > 0, m > 0
    sum_of_exponentials(pairs):      phi = sum w_i exp(-theta_i tau),
                                     w_i >= 0, sum w_i = 1

    All satisfy phi(0) = 1.  ``phi``/``dphi`` are vectorized in tau.
    """

    def __init__(self, kind, params):
        self.kind = kind
        self.params = params

    # -- constructors ------------------------------------------------------

    @classmethod
    def exponential(cls, theta):
        if theta < 0:
            raise ConfigurationError("exponential discount needs theta >= 0, got %r" % theta)
        return cls("exponential", {"theta": float(theta)})

    @classmethod
    def hyperbolic(cls, k):
        if k <= 0:
            raise ConfigurationError("hyperbolic discount needs k > 0, got %r" % k)
        return cls("hyperbolic", {"k": float(k)})

    @classmethod
    def generalized_hyperbolic(cls, k, m):
        if k <= 0 or m <= 0:
            raise ConfigurationError(
                "generalized hyperbolic discount needs k > 0 and m > 0, got k=%r m=%r" % (k, m))
        return cls("generalized_hyperbolic", {"k": float(k), "m": float(m)})

    @classmethod
    def sum_of_exponentials(cls, pairs):
        pairs = [(float(w), float(th)) for (w, th) in pairs]
        if not pairs:
            raise ConfigurationError("sum_of_exponentials needs at least one (weight, rate) pair")
        if any(w < 0 or th < 0 for (w, th) in pairs):
            raise ConfigurationError("sum_of_exponentials needs weights >= 0 and rates >= 0")
        total = sum(w for (w, _) in pairs)
        if abs(total - 1.0) > 1e-12:
            raise ConfigurationError("sum_of_exponentials weights must sum to 1, got %r" % total)
        return cls("sum_of_exponentials", {"pairs": pairs})

    # -- evaluation --------------------------------------------------------

    def phi(self, tau):
        tau = np.asarray(tau, dtype=float)
        if self.kind == "exponential":
            out = np.exp(-self.params["theta"] * tau)
        elif self.kind == "hyperbolic":
            base = 1.0 + self.params["k"] * tau
            if np.any(base <= 0):
                raise DomainError("hyperbolic discount evaluated at tau <= -1/k")
            out = 1.0 / base
        elif self.kind == "generalized_hyperbolic":
            base = 1.0 + self.params["k"] * tau
            if np.any(base <= 0):
                raise DomainError("generalized hyperbolic discount evaluated at tau <= -1/k")
            out = base ** (-self.params["m"])
        else:
            out = sum(w * np.exp(-th * tau) for (w, th) in self.params["pairs"])
            out = np.asarray(out, dtype=float)
        return out if out.shape else float(out)

    def dphi(self, tau):
        tau = np.asarray(tau, dtype=float)
        if self.kind == "exponential":
            th = self.params["theta"]
            out = -th * np.exp(-th * tau)
        elif self.kind == "hyperbolic":
            k = self.params["k"]
            base = 1.0 + k * tau
            if np.any(base <= 0):
                raise DomainError("hyperbolic discount evaluated at tau <= -1/k")
            out = -k / base ** 2
        elif self.kind == "generalized_hyperbolic":
            k, m = self.params["k"], self.params["m"]
            base = 1.0 + k * tau
            if np.any(base <= 0):
                raise DomainError("generalized hyperbolic discount evaluated at tau <= -1/k")
            out = -k * m * base ** (-m - 1.0)
        else:
            out = sum(-w * th * np.exp(-th * tau) for (w, th) in self.params["pairs"])
            out = np.asarray(out, dtype=float)
        return out if out.shape else float(out)

    def antiderivative(self, tau):
        """Integral of phi from 0 to tau, in closed form for every family."""
        tau = np.asarray(tau, dtype=float)
        if self.kind == "exponential":
            th = self.params["theta"]
            out = tau.copy() if th == 0.0 else (1.0 - np.exp(-th * tau)) / th
        elif self.kind == "hyperbolic":
            k = self.params["k"]
            out = np.log1p(k * tau) / k
        elif self.kind == "generalized_hyperbolic":
            k, m = self.params["k"], self.params["m"]
            if abs(m - 1.0) < 1e-14:
                out = np.log1p(k * tau) / k
            else:
                out = ((1.0 + k * tau) ** (1.0 - m) - 1.0) / (k * (1.0 - m))
        else:
            parts = []
            for (w, th) in self.params["pairs"]:
                parts.append(w * tau if th == 0.0 else w * (1.0 - np.exp(-th * tau)) / th)
            out = np.asarray(sum(parts), dtype=float)
        return out if out.shape else float(out)

    def describe(self):
        if self.kind == "sum_of_exponentials":
            inner = ",".join("%g:%g" % (w, th) for (w, th) in self.params["pairs"])
            return "sum_of_exponentials(%s)" % inner
        inner = ",".join("%s=%g" % (k, v) for k, v in sorted(self.params.items()))
        return "%s(%s)" % (self.kind, inner)


def eval_discount(discount, tau, horizon):
    """Evaluate (phi(tau), phi'(tau)) with the public domain gate 0 <= tau <= T."""
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr < 0.0) or np.any(tau_arr > horizon):
        raise DomainError("discount argument tau=%r outside [0, %r]" % (tau, horizon))
    return discount.phi(tau), discount.dphi(tau)


# --------------------------------------------------------------------------
# volatility descriptors (uncontrolled)
# --------------------------------------------------------------------------

class ConstantVol:
    """sigma(t, x) = value > 0."""

    def __init__(self, value):
        if value <= 0:
            raise ConfigurationError("volatility must be positive, got %r" % value)
        self.value = float(value)

    def sigma(self, t, x):
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, self.value)
        return out if out.shape else float(out)

    def max_on(self, x_lo, x_hi):
        return self.value

    def describe(self):
        return "constant:%g" % self.value


class LinearVol:
    """sigma(t, x) = max(const + slope * x, floor) with floor > 0.

    The floor doubles as the state clip for geometric-style problems where the
    model is only meaningful on a positive wealth band.
    """

    def __init__(self, const, slope, floor):
        if floor <= 0:
            raise ConfigurationError("volatility floor must be positive, got %r" % floor)
        self.const = float(const)
        self.slope = float(slope)
        self.floor = float(floor)

    def sigma(self, t, x):
        x = np.asarray(x, dtype=float)
        out = np.maximum(self.const + self.slope * x, self.floor)
        return out if out.shape else float(out)

    def max_on(self, x_lo, x_hi):
        return max(self.sigma(0.0, x_lo), self.sigma(0.0, x_hi), self.floor)

    def describe(self):
        return "linear:%g,%g,%g" % (self.const, self.slope, self.floor)


# --------------------------------------------------------------------------
# drift descriptors (affine in the action so the Hamiltonian maximizer can
# work with a closed-form action profile)
# --------------------------------------------------------------------------

def _check_terms(terms, max_a_pow, what):
    cleaned = []
    for term in terms:
        c, pt, px, pa = term
        pt, px, pa = int(pt), int(px), int(pa)
        if min(pt, px, pa) < 0 or pa > max_a_pow:
            raise ConfigurationError("bad %s monomial %r (action power <= %d)" % (what, term, max_a_pow))
        cleaned.append((float(c), pt, px, pa))
    return cleaned


class PolyDrift:
    """b(t, x, a) = sum of monomials c * t^i * x^j * a^k with k in {0, 1}."""

    def __init__(self, terms):
        self.terms = _check_terms(terms, 1, "drift")

    def value(self, t, x, a):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        a = np.asarray(a, dtype=float)
        out = np.zeros(np.broadcast(t, x, a).shape)
        for (c, pt, px, pa) in self.terms:
            out = out + c * t ** pt * x ** px * a ** pa
        return out if out.shape else float(out)

    def action_profile(self, t, x):
        """Return (b0, b1) with b(t, x, a) = b0 + b1 * a."""
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        shape = np.broadcast(t, x).shape
        b0 = np.zeros(shape)
        b1 = np.zeros(shape)
        for (c, pt, px, pa) in self.terms:
            piece = c * t ** pt * x ** px
            if pa == 0:
                b0 = b0 + piece
            else:
                b1 = b1 + piece
        return b0, b1

    def describe(self):
        return "poly:" + "+".join("%g*t^%d*x^%d*a^%d" % term for term in self.terms)


class ConsumptionAdjustedDrift:
    """Drift of a wealth process with frozen proportional investment.

    With investment fixed at (beta/eta) * x the wealth diffusion reads
    dX = (beta^2/eta X + r X - a) dt + (beta/eta) X dW, which in the
    normalized form dX = sigma (b dt + dW) gives

        b(t, x, a) = beta + (r * x - a) / ((beta/eta) * x),

    affine in the consumption action a.  States are clipped at x_floor so the
    coefficient stays bounded on the truncated domain.
    """

    def __init__(self, beta, rate, eta, x_floor):
        if beta <= 0 or eta <= 0 or x_floor <= 0:
            raise ConfigurationError("consumption drift needs beta, eta, x_floor > 0")
        self.beta = float(beta)
        self.rate = float(rate)
        self.eta = float(eta)
        self.x_floor = float(x_floor)

    def value(self, t, x, a):
        b0, b1 = self.action_profile(t, x)
        a = np.asarray(a, dtype=float)
        out = b0 + b1 * a
        return out if np.asarray(out).shape else float(out)

    def action_profile(self, t, x):
        x = np.asarray(x, dtype=float)
        xc = np.maximum(x, self.x_floor)
        scale = (self.beta / self.eta) * xc
        b0 = self.beta + self.rate * xc / scale
        b1 = -1.0 / scale
        if not b0.shape:
            return float(b0), float(b1)
        return b0, b1

    def describe(self):
        return "consumption:%g,%g,%g,%g" % (self.beta, self.rate, self.eta, self.x_floor)


class ProportionalConsumptionDrift:
    """Wealth drift with the control read as a consumption *fraction*.

    With investment frozen at beta/eta of wealth and consumption c * x,
    dX = (beta^2/eta + rate - c) X dt + (beta/eta) X dW, so in the normalized
    form dX = sigma (b dt + dW) the coefficient

        b(t, x, c) = beta + (rate - c) * eta / beta

    is affine in c and bounded uniformly in the state, which keeps every
    solver's coefficients tame near small wealth levels.
    """

    def __init__(self, beta, rate, eta):
        if beta <= 0 or eta <= 0:
            raise ConfigurationError("proportional drift needs beta, eta > 0")
        self.beta = float(beta)
        self.rate = float(rate)
        self.eta = float(eta)

    def value(self, t, x, a):
        b0, b1 = self.action_profile(t, x)
        out = b0 + b1 * np.asarray(a, dtype=float)
        return out if np.asarray(out).shape else float(out)

    def action_profile(self, t, x):
        x = np.asarray(x, dtype=float)
        shape = np.broadcast(np.asarray(t), x).shape
        b0 = np.full(shape, self.beta + self.rate * self.eta / self.beta)
        b1 = np.full(shape, -self.eta / self.beta)
        if not b0.shape:
            return float(b0), float(b1)
        return b0, b1

    def describe(self):
        return "proportional_consumption:%g,%g,%g" % (self.beta, self.rate, self.eta)


# --------------------------------------------------------------------------
# reward descriptors
# --------------------------------------------------------------------------

class PolyReward:
    """f(t, x, a) = sum of monomials c * t^i * x^j * a^k with k <= 2."""

    def __init__(self, terms):
        self.terms = _check_terms(terms, 2, "reward")

    def value(self, t, x, a):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        a = np.asarray(a, dtype=float)
        out = np.zeros(np.broadcast(t, x, a).shape)
        for (c, pt, px, pa) in self.terms:
            out = out + c * t ** pt * x ** px * a ** pa
        return out if out.shape else float(out)

    def action_profile(self, t, x):
        """Return (A2, A1, A0) with f(t, x, a) = A2 a^2 + A1 a + A0."""
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        shape = np.broadcast(t, x).shape
        coeffs = [np.zeros(shape), np.zeros(shape), np.zeros(shape)]
        for (c, pt, px, pa) in self.terms:
            coeffs[pa] = coeffs[pa] + c * t ** pt * x ** px
        return coeffs[2], coeffs[1], coeffs[0]

    def describe(self):
        return "poly:" + "+".join("%g*t^%d*x^%d*a^%d" % term for term in self.terms)


class IsoelasticConsumptionReward:
    """f(t, x, a) = U_eta(a): log(a) at eta = 1, else (a^(1-eta) - 1)/(1-eta).

    The action (consumption) is floored away from zero so the utility stays
    finite on the whole action box.
    """

    def __init__(self, eta, floor=1e-8):
        if eta <= 0:
            raise ConfigurationError("isoelastic utility needs eta > 0, got %r" % eta)
        if floor <= 0:
            raise ConfigurationError("utility floor must be positive")
        self.eta = float(eta)
        self.floor = float(floor)

    def value(self, t, x, a):
        a = np.maximum(np.asarray(a, dtype=float), self.floor)
        if abs(self.eta - 1.0) < 1e-14:
            out = np.log(a)
        else:
            out = (a ** (1.0 - self.eta) - 1.0) / (1.0 - self.eta)
        out = out + np.zeros(np.broadcast(np.asarray(t), np.asarray(x), a).shape)
        return out if out.shape else float(out)

    def describe(self):
        return "isoelastic_consumption:%g" % self.eta


class ProportionalConsumptionReward:
    """f(t, x, c) = U_eta(c * x): utility of consuming the fraction c of
    current wealth.  States are floored so the utility stays finite on the
    truncated domain."""

    def __init__(self, eta, x_floor=1e-3, floor=1e-8):
        if eta <= 0:
            raise ConfigurationError("isoelastic utility needs eta > 0, got %r" % eta)
        if x_floor <= 0 or floor <= 0:
            raise ConfigurationError("floors must be positive")
        self.eta = float(eta)
        self.x_floor = float(x_floor)
        self.floor = float(floor)

    def value(self, t, x, a):
        x = np.maximum(np.asarray(x, dtype=float), self.x_floor)
        a = np.maximum(np.asarray(a, dtype=float), self.floor)
        level = a * x
        if abs(self.eta - 1.0) < 1e-14:
            out = np.log(level)
        else:
            out = (level ** (1.0 - self.eta) - 1.0) / (1.0 - self.eta)
        out = out + np.zeros(np.broadcast(np.asarray(t), x, a).shape)
        return out if out.shape else float(out)

    def describe(self):
        return "proportional_isoelastic:%g" % self.eta


class PolyTerminal:
    """g(x) = polynomial in x given by ascending coefficients."""

    def __init__(self, coeffs):
        self.coeffs = [float(c) for c in coeffs]
        if not self.coeffs:
            self.coeffs = [0.0]

    def value(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for j, c in enumerate(self.coeffs):
            if c != 0.0:
                out = out + c * x ** j
        return out if out.shape else float(out)

    def describe(self):
        return "poly:" + ",".join("%g" % c for c in self.coeffs)


class IsoelasticWealthTerminal:
    """g(x) = U_eta(max(x, x_floor)): terminal utility of (clipped) wealth."""

    def __init__(self, eta, x_floor):
        if eta <= 0 or x_floor <= 0:
            raise ConfigurationError("isoelastic terminal needs eta > 0 and x_floor > 0")
        self.eta = float(eta)
        self.x_floor = float(x_floor)

    def value(self, x):
        x = np.maximum(np.asarray(x, dtype=float), self.x_floor)
        if abs(self.eta - 1.0) < 1e-14:
            out = np.log(x)
        else:
            out = (x ** (1.0 - self.eta) - 1.0) / (1.0 - self.eta)
        return out if out.shape else float(out)

    def describe(self):
        return "isoelastic_wealth:%g,%g" % (self.eta, self.x_floor)


class TabulatedKernelReward:
    """General two-index reward weight K(s, t) on a rectangular grid.

    Escape hatch for non-separable reward families: the Monte Carlo reward
    estimator accepts it, the pde/bsde/lattice solvers do not (they require a
    one-variable discount kernel).  Values interpolate bilinearly and clip to
    the grid edges; the s-sensitivity is the tabulated central difference.
    """

    def __init__(self, s_nodes, t_nodes, values):
        self.s_nodes = np.asarray(s_nodes, dtype=float)
        self.t_nodes = np.asarray(t_nodes, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape != (self.s_nodes.size, self.t_nodes.size):
            raise ConfigurationError("kernel table shape %r does not match grids" % (self.values.shape,))
        if self.s_nodes.size < 2 or self.t_nodes.size < 2:
            raise ConfigurationError("kernel table needs at least a 2x2 grid")
        ds = np.gradient(self.values, self.s_nodes, axis=0)
        self._ds_values = ds

    def _interp(self, table, s, t):
        s = np.clip(np.asarray(s, dtype=float), self.s_nodes[0], self.s_nodes[-1])
        t = np.clip(np.asarray(t, dtype=float), self.t_nodes[0], self.t_nodes[-1])
        i = np.clip(np.searchsorted(self.s_nodes, s) - 1, 0, self.s_nodes.size - 2)
        j = np.clip(np.searchsorted(self.t_nodes, t) - 1, 0, self.t_nodes.size - 2)
        ws = (s - self.s_nodes[i]) / (self.s_nodes[i + 1] - self.s_nodes[i])
        wt = (t - self.t_nodes[j]) / (self.t_nodes[j + 1] - self.t_nodes[j])
        v = ((1 - ws) * (1 - wt) * table[i, j] + ws * (1 - wt) * table[i + 1, j]
             + (1 - ws) * wt * table[i, j + 1] + ws * wt * table[i + 1, j + 1])
        return v if np.asarray(v).shape else float(v)

    def weight(self, s, t):
        return self._interp(self.values, s, t)

    def ds_weight(self, s, t):
        return self._interp(self._ds_values, s, t)

    def describe(self):
        return "tabulated_kernel:%dx%d" % (self.s_nodes.size, self.t_nodes.size)


# --------------------------------------------------------------------------
# policies
# --------------------------------------------------------------------------

class FeedbackPolicy:
    """Action table on a (time, state) grid, bilinear interpolation inside,
    edge values outside.  Multi-coordinate actions use a trailing axis."""

    def __init__(self, t_nodes, x_nodes, table, label="feedback"):
        self.t_nodes = np.asarray(t_nodes, dtype=float)
        self.x_nodes = np.asarray(x_nodes, dtype=float)
        self.table = np.asarray(table, dtype=float)
        self.label = label
        want = (self.t_nodes.size, self.x_nodes.size)
        if self.table.shape[:2] != want:
            raise ConfigurationError("policy table shape %r does not match grids %r"
                                     % (self.table.shape, want))

    @property
    def action_dim(self):
        return 1 if self.table.ndim == 2 else self.table.shape[2]

    def act(self, t, x):
        x = np.asarray(x, dtype=float)
        tn = self.t_nodes
        i = int(np.clip(np.searchsorted(tn, t) - 1, 0, max(tn.size - 2, 0)))
        if tn.size == 1:
            w = 0.0
        else:
            w = (t - tn[i]) / (tn[i + 1] - tn[i])
            w = min(max(w, 0.0), 1.0)
        if self.table.ndim == 2:
            lo = np.interp(x, self.x_nodes, self.table[i])
            hi = np.interp(x, self.x_nodes, self.table[min(i + 1, tn.size - 1)])
            out = (1 - w) * lo + w * hi
        else:
            cols = []
            for d in range(self.table.shape[2]):
                lo = np.interp(x, self.x_nodes, self.table[i, :, d])
                hi = np.interp(x, self.x_nodes, self.table[min(i + 1, tn.size - 1), :, d])
                cols.append((1 - w) * lo + w * hi)
            out = np.stack(cols, axis=-1)
        return out if np.asarray(out).shape else float(out)


class AnalyticPolicy:
    """Closed-form feedback rule wrapping a callable (t, x) -> action."""

    def __init__(self, fn, label="analytic", action_dim=1):
        self.fn = fn
        self.label = label
        self.action_dim = action_dim

    def act(self, t, x):
        return self.fn(t, np.asarray(x, dtype=float))


class ConstantPolicy:
    """Same action everywhere."""

    def __init__(self, value, label=None):
        self.value = np.asarray(value, dtype=float)
        self.action_dim = 1 if self.value.ndim == 0 else self.value.size
        self.label = label if label is not None else "constant:%s" % self.value

    def act(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.value.ndim == 0:
            out = np.full_like(x, float(self.value))
            return out if out.shape else float(out)
        return np.broadcast_to(self.value, x.shape + (self.value.size,)).copy()


# --------------------------------------------------------------------------
# the problem container
# --------------------------------------------------------------------------

class ProblemSpec:
    """Complete description of one drift-control problem.

    Parameters
    ----------
    horizon : terminal time T > 0 (problems start at 0)
    x0 : initial state
    action_box : ((lo, hi),) or ((lo1, hi1), (lo2, hi2)) per action coordinate
    sigma : volatility descriptor (uncontrolled)
    drift : drift descriptor b(t, x, a)
    discount : DiscountFunction, or TabulatedKernelReward for the general
        (Monte-Carlo-only) two-index reward weight
    running_reward : descriptor f(t, x, a)
    terminal_reward : descriptor g(x)
    markovian : coefficients depend on the path only through the current state
        (required by the lattice and pde solvers)
    label : short name used in output manifests
    """

    def __init__(self, horizon, x0, action_box, sigma, drift, discount,
                 running_reward, terminal_reward, markovian=True, label="problem",
                 state_floor=None):
        if horizon <= 0:
            raise ConfigurationError("horizon must be positive, got %r" % horizon)
        box = []
        for pair in action_box:
            lo, hi = float(pair[0]), float(pair[1])
            if not (lo <= hi):
                raise ConfigurationError("action interval needs lo <= hi, got %r" % (pair,))
            box.append((lo, hi))
        if len(box) not in (1, 2):
            raise ConfigurationError("action box supports 1 or 2 coordinates, got %d" % len(box))
        if not isinstance(discount, (DiscountFunction, TabulatedKernelReward)):
            raise ConfigurationError("discount must be a DiscountFunction or a tabulated kernel")
        self.horizon = float(horizon)
        self.x0 = float(x0)
        self.action_box = tuple(box)
        self.sigma = sigma
        self.drift = drift
        self.discount = discount
        self.running_reward = running_reward
        self.terminal_reward = terminal_reward
        self.markovian = bool(markovian)
        self.label = label
        if state_floor is not None:
            state_floor = float(state_floor)
            if state_floor >= self.x0:
                raise ConfigurationError("state_floor must lie below x0")
        self.state_floor = state_floor

    # -- structure queries -------------------------------------------------

    @property
    def action_dim(self):
        return len(self.action_box)

    @property
    def separable(self):
        return isinstance(self.discount, DiscountFunction)

    def require_separable(self, who):
        if not self.separable:
            raise UnsupportedProblemError(
                "%s requires a one-variable discount kernel; "
                "tabulated (s,t) reward weights are Monte-Carlo only" % who)

    def require_markovian(self, who):
        if not self.markovian:
            raise UnsupportedProblemError("%s requires a Markovian problem" % who)

    def require_scalar_action(self, who):
        if self.action_dim != 1:
            raise UnsupportedProblemError("%s supports one action coordinate, problem has %d"
                                          % (who, self.action_dim))

    def clamp_action(self, a):
        a = np.asarray(a, dtype=float)
        if self.action_dim == 1:
            lo, hi = self.action_box[0]
            out = np.clip(a, lo, hi)
            return out if out.shape else float(out)
        cols = [np.clip(a[..., d], lo, hi) for d, (lo, hi) in enumerate(self.action_box)]
        return np.stack(cols, axis=-1)

    def midpoint_action(self):
        mids = [0.5 * (lo + hi) for (lo, hi) in self.action_box]
        return mids[0] if self.action_dim == 1 else np.asarray(mids)

    # -- reward weights ----------------------------------------------------

    def kernel(self, s, t):
        """Reward weight of running reward at time t as judged from s."""
        if self.separable:
            return self.discount.phi(np.asarray(t, dtype=float) - np.asarray(s, dtype=float))
        return self.discount.weight(s, t)

    def ds_kernel(self, s, t):
        """d/ds of the reward weight (the analytic type derivative)."""
        if self.separable:
            return -1.0 * np.asarray(
                self.discount.dphi(np.asarray(t, dtype=float) - np.asarray(s, dtype=float)))
        return self.ds_kernel_tabulated(s, t)

    def ds_kernel_tabulated(self, s, t):
        return self.discount.ds_weight(s, t)

    def discounted_running(self, s, t, x, a):
        return self.kernel(s, t) * self.running_reward.value(t, x, a)

    def discounted_terminal(self, s, x):
        return self.kernel(s, self.horizon) * self.terminal_reward.value(x)

    def type_derivative_running(self, s, t, x, a):
        return self.ds_kernel(s, t) * self.running_reward.value(t, x, a)

    def type_derivative_terminal(self, s, x):
        return self.ds_kernel(s, self.horizon) * self.terminal_reward.value(x)

    def describe(self):
        return {
            "label": self.label,
            "horizon": self.horizon,
            "x0": self.x0,
            "action_box": [list(p) for p in self.action_box],
            "sigma": self.sigma.describe(),
            "drift": self.drift.describe(),
            "discount": self.discount.describe(),
            "running_reward": self.running_reward.describe(),
            "terminal_reward": self.terminal_reward.describe(),
            "markovian": self.markovian,
        }


# --------------------------------------------------------------------------
# Hamiltonian and maximizer
# --------------------------------------------------------------------------

def argmax_quadratic(a2, a1, lo, hi):
    """Vectorized argmax over [lo, hi] of a2 * a^2 + a1 * a.

    Concave pieces take the clipped stationary point; convex/linear pieces
    compare the endpoints.  Exact ties resolve to the smaller action.
    """
    a2 = np.asarray(a2, dtype=float)
    a1 = np.asarray(a1, dtype=float)
    shape = np.broadcast(a2, a1).shape
    a2 = np.broadcast_to(a2, shape)
    a1 = np.broadcast_to(a1, shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        stationary = np.where(a2 < 0.0, -a1 / (2.0 * np.where(a2 < 0.0, a2, -1.0)), 0.0)
    concave = np.clip(stationary, lo, hi)
    # endpoint comparison for a2 >= 0; ties -> lo
    end_gap = a2 * (hi ** 2 - lo ** 2) + a1 * (hi - lo)   # value(hi) - value(lo)
    endpoint = np.where(end_gap > 0.0, hi, lo)
    out = np.where(a2 < 0.0, concave, endpoint)
    return out if out.shape else float(out)


def argmax_isoelastic(eta, kappa, lo, hi):
    """Vectorized argmax over [lo, hi] of U_eta(a) + kappa * a.

    The utility is strictly concave and increasing, so the maximizer is the
    clipped stationary point a = (-kappa)^(-1/eta) when kappa < 0 and the
    upper endpoint otherwise.  Assumes lo above the descriptor's floor.
    """
    kappa = np.asarray(kappa, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        if abs(eta - 1.0) < 1e-14:
            stationary = -1.0 / np.where(kappa < 0.0, kappa, -1.0)
        else:
            stationary = np.where(kappa < 0.0, -kappa, 1.0) ** (-1.0 / eta)
    out = np.where(kappa < 0.0, np.clip(stationary, lo, hi), hi)
    return out if out.shape else float(out)


def _argmax_grid(objective, lo, hi, shape, n_grid=129, refine_iters=40):
    """Grid search + golden-section refinement for a vectorized objective.

    ``objective(a)`` accepts an action array broadcastable to ``shape`` and
    returns values of that shape.  The coarse pass keeps the first (smallest)
    maximizing grid action, then the surrounding bracket is refined.
    """
    if hi <= lo:
        return np.full(shape, lo)
    grid = np.linspace(lo, hi, n_grid)
    vals = np.stack([np.broadcast_to(objective(np.full(shape, a)), shape) for a in grid])
    best = np.argmax(vals, axis=0)
    left = grid[np.maximum(best - 1, 0)]
    right = grid[np.minimum(best + 1, n_grid - 1)]
    c = right - _GOLDEN * (right - left)
    d = left + _GOLDEN * (right - left)
    fc = np.broadcast_to(objective(c), shape)
    fd = np.broadcast_to(objective(d), shape)
    for _ in range(refine_iters):
        take_left = fc >= fd
        right = np.where(take_left, d, right)
        left = np.where(take_left, left, c)
        c = right - _GOLDEN * (right - left)
        d = left + _GOLDEN * (right - left)
        fc = np.broadcast_to(objective(c), shape)
        fd = np.broadcast_to(objective(d), shape)
    return 0.5 * (left + right)


def hamiltonian(spec, t, x, z, a):
    """Pointwise drift Hamiltonian h_t(t, x, z, a) = f(t,x,a) + b(t,x,a) sigma(t,x) z."""
    f = spec.running_reward.value(t, x, a)
    return f + spec.drift.value(t, x, a) * spec.sigma.sigma(t, x) * np.asarray(z, dtype=float)


def type_derivative_hamiltonian(spec, s, t, x, v, a):
    """d/ds Hamiltonian: ds_f(s,t,x,a) + b(t,x,a) sigma(t,x) v."""
    return (spec.type_derivative_running(s, t, x, a)
            + spec.drift.value(t, x, a) * spec.sigma.sigma(t, x) * np.asarray(v, dtype=float))


def hamiltonian_sup(spec, t, x, z, u=0.0):
    """Maximized drift Hamiltonian and its maximizer.

    Returns (H, a*) with H = max_a h_t(t, x, z, a) - u.  The shift u does not
    influence the maximizer.  Vectorized over x/z/u arrays.
    """
    spec.require_scalar_action("hamiltonian_sup")
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    u = np.asarray(u, dtype=float)
    a_star = maximizer(spec, t, x, z)
    value = hamiltonian(spec, t, x, z, a_star) - u
    if np.asarray(value).shape:
        return value, a_star
    return float(value), float(a_star)


def maximizer(spec, t, x, z):
    """argmax_a of the drift Hamiltonian at (t, x, z); ties -> smallest action."""
    spec.require_scalar_action("maximizer")
    lo, hi = spec.action_box[0]
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    sig = spec.sigma.sigma(t, x)
    profile = getattr(spec.drift, "action_profile", None)
    if profile is None:
        shape = np.broadcast(x, z).shape
        objective = lambda a: hamiltonian(spec, t, x, z, a)
        out = _argmax_grid(objective, lo, hi, shape)
        return out if out.shape else float(out)
    b0, b1 = spec.drift.action_profile(t, x)
    kappa = np.asarray(b1) * sig * z          # slope of the action-linear drift part
    reward = spec.running_reward
    if isinstance(reward, PolyReward):
        a2, a1, _ = reward.action_profile(t, x)
        out = argmax_quadratic(a2, np.asarray(a1) + kappa, lo, hi)
    elif isinstance(reward, IsoelasticConsumptionReward):
        out = argmax_isoelastic(reward.eta, kappa, lo, hi)
    elif isinstance(reward, ProportionalConsumptionReward):
        # U_eta(c x) + kappa c maximizes where U'_eta scaled by x^(1-eta)
        # balances kappa, i.e. at argmax of U_eta(c) + (kappa/x^(1-eta)) c
        xc = np.maximum(x, reward.x_floor)
        out = argmax_isoelastic(reward.eta, kappa / xc ** (1.0 - reward.eta), lo, hi)
    else:
        shape = np.broadcast(x, z).shape
        objective = lambda a: reward.value(t, x, a) + kappa * a
        out = _argmax_grid(objective, lo, hi, shape)
    out = np.asarray(out)
    return out if out.shape else float(out)
