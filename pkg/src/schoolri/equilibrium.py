"""Equilibrium solvers for both mechanisms, existence bounds, allocations, and welfare."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._numerics import bisect, log_expm1, scan_roots, softplus
from .info import (
    LogitStrategy,
    SignalStrategy,
    StepStrategy,
    logit_strategy,
    mutual_information,
    quad,
)
from .model import Capacities, MarketParams, Mechanism, delta, delta_coefficients, r_hat

BOUNDARY_EPS = 1e-9
SCAN_NODES = 512


class NoInteriorEquilibrium(ArithmeticError):
    """The fixed-point condition has no root with r in (r_hat, 1)."""


class MultipleEquilibria(RuntimeError):
    """More than one interior root was found; uniqueness was expected."""


class RegimeError(ValueError):
    """Parameters fall outside the regime a closed form assumes."""


@dataclass(frozen=True)
class VBounds:
    v_lower: float
    v_upper: float

    def contains(self, v: float) -> bool:
        return self.v_lower < v < self.v_upper


class AllocationDensity:
    """Probability ``g(theta)`` that a type-theta student is assigned school s.

    With s more selective than a only sab reporters reach s, so
    ``g = m * lambda_s / r``.
    """

    def __init__(self, strategy: SignalStrategy, r: float, caps: Capacities):
        self.strategy = strategy
        self.r = float(r)
        self.caps = caps
        self.scale = caps.lambda_s / self.r

    def __call__(self, theta):
        return self.scale * self.strategy(theta)

    def cumulative(self, theta):
        return self.scale * self.strategy.cumulative(theta)

    @property
    def mass(self) -> float:
        return float(self.cumulative(1.0))

    def first_moment(self) -> float:
        return self.scale * self.strategy.first_moment()

    def __repr__(self):
        return f"AllocationDensity(r={self.r:.6g}, strategy={self.strategy!r})"


@dataclass(frozen=True)
class Equilibrium:
    mechanism: Mechanism
    params: MarketParams
    r: float
    strategy: SignalStrategy
    g: AllocationDensity
    welfare: float
    info_cost: float
    residual: float
    threshold_theta: Optional[float] = None

    def summary(self) -> dict:
        return {
            "mechanism": self.mechanism.value,
            "v": self.params.v,
            "mu": self.params.mu,
            "r": self.r,
            "threshold_theta": self.threshold_theta,
            "residual": self.residual,
            "welfare": self.welfare,
            "info_cost": self.info_cost,
        }


def allocation_density(strategy: SignalStrategy, r: float, caps: Capacities) -> AllocationDensity:
    if not 0.0 < r < 1.0:
        raise ValueError(f"r must lie in (0, 1), got {r}")
    g = AllocationDensity(strategy, r, caps)
    if abs(g.mass - caps.lambda_s) > 1e-8:
        raise ValueError(f"strategy mean {strategy.mean!r} does not match r={r!r}")
    return g


def welfare(g: AllocationDensity, caps: Capacities) -> float:
    """Average preference shock among students assigned to school s."""
    return float(g.first_moment() / caps.lambda_s)


def complete_info_threshold(mech: Mechanism, params: MarketParams) -> tuple[float, float]:
    """Cutoff type ``theta`` and sab fraction ``1 - theta`` when information is free."""
    mech = Mechanism.parse(mech)
    caps, v = params.caps, params.v
    if v <= r_hat(caps):
        raise RegimeError(f"v={v} must exceed r_hat={r_hat(caps)}")
    if mech is Mechanism.DA:
        theta = 1.0 - v
        return theta, 1.0 - theta
    ls, la = caps.lambda_s, caps.lambda_a
    # first case: school a absorbs every asb report in round one
    linear = (1.0 - la) / ls - v
    linear_ok = 0.0 <= linear <= la
    x = la + ls * v
    quadratic = (-x + np.sqrt(x * x + 4.0 * ls * la)) / (2.0 * ls)
    quadratic_ok = la <= quadratic <= 1.0 - ls
    if linear_ok and quadratic_ok:
        if abs(linear - quadratic) > 1e-9:
            raise RegimeError("both indifference cases hold with different roots")
        return float(quadratic), float(1.0 - quadratic)
    if linear_ok:
        return float(linear), float(1.0 - linear)
    if quadratic_ok:
        return float(quadratic), float(1.0 - quadratic)
    raise RegimeError("no case of the Boston indifference condition applies")


def solve_complete_info(mech: Mechanism, params: MarketParams) -> Equilibrium:
    mech = Mechanism.parse(mech)
    theta, r = complete_info_threshold(mech, params)
    strategy = StepStrategy(theta)
    g = allocation_density(strategy, r, params.caps)
    residual = 0.0 if mech is Mechanism.DA else float(delta(mech, theta, r, params))
    return Equilibrium(mech, params, r, strategy, g, welfare(g, params.caps), 0.0,
                       abs(residual), threshold_theta=theta)


def log_rhs(mech: Mechanism, r: float, params: MarketParams) -> float:
    """Logarithm of the right-hand side of the closed-form fixed-point condition."""
    mu, ls = params.mu, params.caps.lambda_s
    c0, _ = delta_coefficients(mech, r, params)
    log_k = np.log((1.0 - r) / r) - c0 / mu
    a = log_expm1(ls / (r * mu)) - softplus(log_k)
    return float(softplus(a))


def eq_residual(mech: Mechanism, r: float, params: MarketParams) -> float:
    """``log RHS(r) - lambda_s / mu``; zero exactly at an interior equilibrium.

    The comparison is made in log space because ``exp(lambda_s / mu)``
    overflows for the small costs used in sweeps.  The sign matches the
    untransformed difference ``RHS(r) - exp(lambda_s / mu)``.
    """
    if params.mu <= 0:
        raise ValueError("residual needs mu > 0")
    lo = r_hat(params.caps)
    if not lo < r < 1.0:
        raise ValueError(f"r must lie in (r_hat, 1) = ({lo}, 1), got {r}")
    mu, ls = params.mu, params.caps.lambda_s
    z = ls / mu
    c0, _ = delta_coefficients(mech, r, params)
    log_k = np.log((1.0 - r) / r) - c0 / mu
    zr = z / r
    a = log_expm1(zr) - softplus(log_k)
    # log RHS - z, arranged so the O(1) pieces cancel analytically as r -> 1
    return float(z * (1.0 - r) / r + np.log1p(-np.exp(-zr)) - softplus(log_k) + softplus(-a))


def _scan_grid(params: MarketParams) -> np.ndarray:
    lo = r_hat(params.caps) + BOUNDARY_EPS
    return np.linspace(lo, 1.0 - BOUNDARY_EPS, SCAN_NODES)


def interior_roots(mech: Mechanism, params: MarketParams) -> list[float]:
    mech = Mechanism.parse(mech)
    return scan_roots(lambda r: eq_residual(mech, r, params), _scan_grid(params))


def solve_interior(mech: Mechanism, params: MarketParams) -> Equilibrium:
    """Interior equilibrium with costly information (``mu > 0``)."""
    mech = Mechanism.parse(mech)
    if params.mu <= 0:
        raise ValueError("solve_interior needs mu > 0; use solve_complete_info")
    roots = interior_roots(mech, params)
    if not roots:
        raise NoInteriorEquilibrium(
            f"{mech.value}: no interior equilibrium at v={params.v}, mu={params.mu}")
    if len(roots) > 1:
        raise MultipleEquilibria(f"{mech.value}: roots {roots}")
    r = roots[0]
    strategy = logit_strategy(mech, r, params)
    g = AllocationDensity(strategy, r, params.caps)
    return Equilibrium(
        mechanism=mech,
        params=params,
        r=r,
        strategy=strategy,
        g=g,
        welfare=welfare(g, params.caps),
        info_cost=params.mu * mutual_information(strategy),
        residual=abs(eq_residual(mech, r, params)),
    )


def solve(mech: Mechanism, params: MarketParams) -> Equilibrium:
    """Dispatch on ``mu``: free information uses the cutoff solution."""
    if params.mu == 0:
        return solve_complete_info(mech, params)
    return solve_interior(mech, params)


def self_consistency_gap(eq: Equilibrium) -> float:
    """``|int m - r|`` by adaptive quadrature, independent of the closed form."""
    mean = quad(lambda t: float(eq.strategy(t)), points=eq.strategy.breakpoints())
    return abs(mean - eq.r)


def _log_expm1_over(y: float) -> float:
    """log((e^y - 1) / y), accurate as y -> 0."""
    if y < 1e-6:
        return y / 2.0 + y * y / 24.0
    return log_expm1(y) - np.log(y)


def v_bounds_da(mu: float, caps: Capacities) -> VBounds:
    """Range of v for which DA has an interior equilibrium at cost ``mu``."""
    if not mu > 0:
        raise ValueError("bounds need mu > 0")
    z, w = caps.lambda_s / mu, caps.lambda_a / mu
    v_upper = _log_expm1_over(z) / z
    # log(w / (1 - e^{-w})) = w - log((e^w - 1) / w)
    v_lower = (_log_expm1_over(z) + w - _log_expm1_over(w)) / (z + w)
    return VBounds(float(v_lower), float(v_upper))


def mu_bar(v: float, caps: Capacities) -> float:
    """Cost at which v equals the DA upper bound; interior DA equilibria need mu below it."""
    if not 0.5 < v < 1.0:
        raise ValueError("mu_bar is defined for v in (1/2, 1)")

    fn = lambda log_mu: v_bounds_da(float(np.exp(log_mu)), caps).v_upper - v
    return float(np.exp(bisect(fn, np.log(1e-8), np.log(1e8), xtol=1e-14)))


def rhs_curve(mech: Mechanism, params: MarketParams, r_grid) -> np.ndarray:
    """Residual of the fixed-point condition along a grid, for plotting."""
    return np.array([eq_residual(mech, r, params) for r in r_grid])


__all__ = [
    "AllocationDensity",
    "Equilibrium",
    "LogitStrategy",
    "MultipleEquilibria",
    "NoInteriorEquilibrium",
    "RegimeError",
    "VBounds",
    "allocation_density",
    "complete_info_threshold",
    "eq_residual",
    "log_rhs",
    "mu_bar",
    "rhs_curve",
    "self_consistency_gap",
    "solve",
    "solve_complete_info",
    "solve_interior",
    "v_bounds_da",
    "welfare",
]
