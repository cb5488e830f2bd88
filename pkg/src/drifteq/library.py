"""Built-in problems used by the test-beds, the verifier, and the CLI."""

import numpy as np

from .errors import ConfigurationError
from .problems import (ConstantPolicy, ConstantVol, DiscountFunction,
                       IsoelasticWealthTerminal, LinearVol, PolyDrift,
                       PolyReward, PolyTerminal, ProblemSpec,
                       ProportionalConsumptionDrift,
                       ProportionalConsumptionReward)


def lq_problem(discount, horizon=1.0, x0=0.0, action_bound=2.0, label=None):
    """Linear-quadratic testbed: dX = a dt + dW, running reward -(a^2 + x^2),
    zero terminal reward, actions in [-action_bound, action_bound]."""
    if action_bound <= 0:
        raise ConfigurationError("action_bound must be positive")
    return ProblemSpec(
        horizon=horizon,
        x0=x0,
        action_box=[(-action_bound, action_bound)],
        sigma=ConstantVol(1.0),
        drift=PolyDrift([(1.0, 0, 0, 1)]),
        discount=discount,
        running_reward=PolyReward([(-1.0, 0, 0, 2), (-1.0, 0, 2, 0)]),
        terminal_reward=PolyTerminal([0.0]),
        label=label or "lq",
    )


def hyperbolic_lq(k=1.0, horizon=1.0, x0=0.0, action_bound=2.0):
    """The hyperbolically discounted LQ problem (triple-route testbed)."""
    return lq_problem(DiscountFunction.hyperbolic(k), horizon, x0, action_bound,
                      label="hyperbolic_lq")


def exponential_lq(theta=0.5, horizon=1.0, x0=0.0, action_bound=2.0):
    """The exponentially discounted LQ problem (classical-collapse testbed)."""
    return lq_problem(DiscountFunction.exponential(theta), horizon, x0, action_bound,
                      label="exponential_lq")


def crra_consumption(discount=None, eta=1.0, rate=0.05, beta=0.3, horizon=1.0,
                     x0=1.0, consumption_box=(0.05, 4.0), x_floor=1e-3):
    """Consumption-only wealth problem with the investment fraction frozen at
    its equilibrium value beta/eta.

    The control is the consumption *fraction* c of current wealth; wealth
    follows dX = (beta^2/eta + rate - c) X dt + (beta/eta) X dW, i.e. the
    normalized drift b = beta + (rate - c) eta / beta is bounded uniformly in
    the state, and the running reward is the utility of the consumed amount
    c * X.
    """
    if discount is None:
        discount = DiscountFunction.exponential(0.5)
    if not (0.0 < eta <= 1.0):
        raise ConfigurationError("eta must be in (0, 1], got %r" % eta)
    if beta <= 0:
        raise ConfigurationError("beta must be positive (the diffusion would vanish)")
    lo, hi = consumption_box
    if not (0.0 < lo < hi):
        raise ConfigurationError("consumption box must satisfy 0 < lo < hi")
    slope = beta / eta
    return ProblemSpec(
        horizon=horizon,
        x0=x0,
        action_box=[(float(lo), float(hi))],
        sigma=LinearVol(0.0, slope, floor=slope * x_floor),
        drift=ProportionalConsumptionDrift(beta, rate, eta),
        discount=discount,
        running_reward=ProportionalConsumptionReward(eta, x_floor),
        terminal_reward=IsoelasticWealthTerminal(eta, x_floor),
        label="crra_consumption",
        state_floor=x_floor,
    )


def proportional_consumption_policy(fraction=1.0):
    """Exploration policy consuming a fixed fraction of current wealth.

    The natural sampling policy for the fraction-controlled consumption
    problems: it keeps the wealth cloud lognormal-shaped, whereas fractions
    far above 1 starve it toward the floor.
    """
    if fraction <= 0:
        raise ConfigurationError("consumption fraction must be positive")
    return ConstantPolicy(float(fraction), label="proportional_consumption")


def constant_vol_diffusion(horizon=1.0, x0=0.0, terminal_coeffs=(0.0, 0.0, 1.0),
                           running_terms=(), discount=None):
    """Uncontrolled unit-volatility diffusion: singleton action {0}, b = 0.

    Handy for manufactured solutions: pick the running reward so the value is
    a known polynomial.  ``running_terms`` are (coeff, t_pow, x_pow, a_pow)
    monomials; ``terminal_coeffs`` ascending polynomial coefficients.
    """
    if discount is None:
        discount = DiscountFunction.exponential(0.0)
    return ProblemSpec(
        horizon=horizon,
        x0=x0,
        action_box=[(0.0, 0.0)],
        sigma=ConstantVol(1.0),
        drift=PolyDrift([(0.0, 0, 0, 0)]),
        discount=discount,
        running_reward=PolyReward(list(running_terms) or [(0.0, 0, 0, 0)]),
        terminal_reward=PolyTerminal(list(terminal_coeffs)),
        label="constant_vol_diffusion",
    )


BUILTIN_PROBLEMS = {
    "hyperbolic_lq": hyperbolic_lq,
    "exponential_lq": exponential_lq,
    "crra_consumption": crra_consumption,
}


def build_problem(name, **kwargs):
    """Instantiate a built-in problem by name with keyword overrides."""
    if name not in BUILTIN_PROBLEMS:
        raise ConfigurationError(
            "unknown built-in problem %r (available: %s)"
            % (name, ", ".join(sorted(BUILTIN_PROBLEMS))))
    return BUILTIN_PROBLEMS[name](**kwargs)
