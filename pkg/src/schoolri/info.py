"""Signal strategies, mutual-information cost, and rational-inattention best responses.

A signal strategy ``m(theta)`` is the probability of being recommended (and
reporting) ``sab`` given preference shock ``theta``.  Its cost is ``mu`` times
the mutual information between ``theta`` and the binary recommendation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import expit

from ._numerics import binary_entropy, scan_roots, softplus, xlogx
from .model import MarketParams, Mechanism, delta, delta_coefficients, r_hat

QUAD_ABS_TOL = 1e-10
_QUAD_KW = dict(epsabs=1e-13, epsrel=1e-12, limit=200)

# log-spaced likelihood scan used by consistency_solve
_LOG_L_NODES = np.linspace(np.log(1e-12), np.log(1e12), 64)


class CornerSolution(ArithmeticError):
    """No interior (mean strictly inside (0, 1)) solution exists."""


def quad(fn: Callable[[float], float], lo: float = 0.0, hi: float = 1.0, points=None) -> float:
    """Adaptive Gauss-Kronrod integral on [lo, hi]."""
    pts = None
    if points is not None:
        pts = [p for p in np.atleast_1d(points) if lo < p < hi] or None
    val, _ = integrate.quad(fn, lo, hi, points=pts, **_QUAD_KW)
    return float(val)


def _neg_entropy(m):
    """m ln m + (1 - m) ln(1 - m), pointwise."""
    return xlogx(m) + xlogx(1.0 - np.asarray(m, dtype=float))


class SignalStrategy:
    """Base class; subclasses provide the closed forms they can."""

    def __call__(self, theta):
        raise NotImplementedError

    def cumulative(self, theta):
        """Integral of m over [0, theta]."""
        raise NotImplementedError

    @property
    def mean(self) -> float:
        return float(self.cumulative(1.0))

    def first_moment(self) -> float:
        """Integral of theta * m(theta) over [0, 1]."""
        return quad(lambda t: t * float(self(t)), points=self.breakpoints())

    def neg_entropy_integral(self) -> float:
        """Integral of m ln m + (1 - m) ln(1 - m) over [0, 1]."""
        return quad(lambda t: float(_neg_entropy(self(t))), points=self.breakpoints())

    def derivative(self, theta):
        raise NotImplementedError

    def breakpoints(self) -> list[float]:
        return []


@dataclass(frozen=True)
class LogitStrategy(SignalStrategy):
    """``m(theta) = L e^{alpha (theta + beta)} / (L e^{alpha (theta + beta)} + 1)``."""

    alpha: float
    beta: float
    likelihood: float

    def __post_init__(self):
        if not self.likelihood > 0:
            raise ValueError("likelihood must be positive")

    @property
    def log_odds_at_zero(self) -> float:
        return float(np.log(self.likelihood) + self.alpha * self.beta)

    def __call__(self, theta):
        return expit(self.log_odds_at_zero + self.alpha * np.asarray(theta, dtype=float))

    def cumulative(self, theta):
        c = self.log_odds_at_zero
        theta = np.asarray(theta, dtype=float)
        if abs(self.alpha) < 1e-9:
            return expit(c) * theta
        return (softplus(c + self.alpha * theta) - softplus(c)) / self.alpha

    def derivative(self, theta):
        m = self(theta)
        return self.alpha * m * (1.0 - m)

    def center(self) -> float:
        """Preference shock at which m = 1/2."""
        return -self.log_odds_at_zero / self.alpha if self.alpha else np.nan

    def breakpoints(self) -> list[float]:
        c = self.center()
        return [c] if np.isfinite(c) else []


@dataclass(frozen=True)
class StepStrategy(SignalStrategy):
    """Complete-information cutoff rule: ``m = 1`` above the threshold.

    The value exactly at the threshold is measure-zero; it is set to 1.
    """

    threshold: float

    def __call__(self, theta):
        return np.where(np.asarray(theta, dtype=float) >= self.threshold, 1.0, 0.0)

    def cumulative(self, theta):
        return np.maximum(np.asarray(theta, dtype=float) - self.threshold, 0.0)

    def first_moment(self) -> float:
        t = min(max(self.threshold, 0.0), 1.0)
        return 0.5 * (1.0 - t * t)

    def neg_entropy_integral(self) -> float:
        return 0.0

    def derivative(self, theta):
        return np.zeros_like(np.asarray(theta, dtype=float))

    def breakpoints(self) -> list[float]:
        return [self.threshold]


@dataclass(frozen=True)
class GridStrategy(SignalStrategy):
    """Piecewise-linear interpolation of values ``m_k`` on nodes in [0, 1]."""

    nodes: np.ndarray
    values: np.ndarray
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if nodes.ndim != 1 or nodes.shape != values.shape or nodes.size < 2:
            raise ValueError("nodes and values must be matching 1-d arrays")
        if nodes[0] != 0.0 or nodes[-1] != 1.0 or np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must increase strictly from 0 to 1")
        if np.any(values < 0) or np.any(values > 1):
            raise ValueError("strategy values must lie in [0, 1]")
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(nodes))])
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_cum", cum)

    def __call__(self, theta):
        return np.interp(theta, self.nodes, self.values)

    def cumulative(self, theta):
        theta = np.clip(np.asarray(theta, dtype=float), 0.0, 1.0)
        k = np.clip(np.searchsorted(self.nodes, theta, side="right") - 1, 0, self.nodes.size - 2)
        x0 = self.nodes[k]
        m0 = self.values[k]
        mt = np.interp(theta, self.nodes, self.values)
        return self._cum[k] + 0.5 * (m0 + mt) * (theta - x0)

    def first_moment(self) -> float:
        x0, x1 = self.nodes[:-1], self.nodes[1:]
        m0, m1 = self.values[:-1], self.values[1:]
        xm, mm = 0.5 * (x0 + x1), 0.5 * (m0 + m1)
        # Simpson is exact for the quadratic integrand theta * m(theta)
        return float(np.sum((x1 - x0) / 6.0 * (x0 * m0 + 4 * xm * mm + x1 * m1)))

    def neg_entropy_integral(self) -> float:
        x0, x1 = self.nodes[:-1], self.nodes[1:]
        m0, m1 = self.values[:-1], self.values[1:]
        dm = m1 - m0
        flat = np.abs(dm) < 1e-7
        out = np.empty_like(dm)
        # exact antiderivative of phi(m) = m ln m + (1-m) ln(1-m) along a linear segment
        prim = lambda m: 0.5 * xlogx(m) * m - 0.25 * m * m - (0.5 * xlogx(1 - m) * (1 - m) - 0.25 * (1 - m) ** 2)
        steep = ~flat
        out[steep] = (x1 - x0)[steep] * (prim(m1[steep]) - prim(m0[steep])) / dm[steep]
        mid = 0.5 * (m0 + m1)
        out[flat] = (x1 - x0)[flat] / 6.0 * (_neg_entropy(m0[flat]) + 4 * _neg_entropy(mid[flat])
                                              + _neg_entropy(m1[flat]))
        return float(np.sum(out))

    def derivative(self, theta):
        k = np.clip(np.searchsorted(self.nodes, theta, side="right") - 1, 0, self.nodes.size - 2)
        return (self.values[k + 1] - self.values[k]) / (self.nodes[k + 1] - self.nodes[k])

    def breakpoints(self) -> list[float]:
        return list(self.nodes[1:-1])


@dataclass(frozen=True)
class ConstantStrategy(SignalStrategy):
    """Uninformative strategy ``m(theta) = p``."""

    p: float

    def __call__(self, theta):
        return np.full_like(np.asarray(theta, dtype=float), self.p)

    def cumulative(self, theta):
        return self.p * np.asarray(theta, dtype=float)

    def first_moment(self) -> float:
        return 0.5 * self.p

    def neg_entropy_integral(self) -> float:
        return float(_neg_entropy(self.p))

    def derivative(self, theta):
        return np.zeros_like(np.asarray(theta, dtype=float))


def mutual_information(m: SignalStrategy) -> float:
    """Mutual information (nats) between the shock and the binary recommendation."""
    mbar = min(max(m.mean, 0.0), 1.0)
    val = m.neg_entropy_integral() + binary_entropy(mbar)
    return float(min(max(val, 0.0), np.log(2.0)))


def logit_strategy(mech: Mechanism, r: float, params: MarketParams) -> LogitStrategy:
    """Logit strategy solving the first-order condition when the sab mean equals ``r``."""
    if params.mu <= 0:
        raise ValueError("logit strategy needs mu > 0; use the complete-information solver")
    if not 0.0 < r < 1.0:
        raise ValueError(f"r must lie in (0, 1), got {r}")
    c0, c1 = delta_coefficients(mech, r, params)
    return LogitStrategy(alpha=c1 / params.mu, beta=c0 / c1, likelihood=r / (1.0 - r))


def _consistency_gap(log_l: float, alpha: float, beta: float) -> float:
    """Mean of the logit minus L / (L + 1); zero at a consistent likelihood."""
    c0 = log_l + alpha * beta
    mean = (softplus(c0 + alpha) - softplus(c0)) / alpha
    return float(mean - expit(log_l))


def consistency_solve(alpha: float, beta: float) -> float:
    """Likelihood ratio L making the logit strategy's mean equal ``L / (L + 1)``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    fn = lambda x: _consistency_gap(x, alpha, beta)
    roots = scan_roots(fn, _LOG_L_NODES)
    if not roots:
        raise CornerSolution(f"no interior likelihood for alpha={alpha}, beta={beta}")
    return float(np.exp(roots[0]))


def consistency_residual(likelihood: float, alpha: float, beta: float) -> float:
    """Residual of the integral form ``int (e^{-alpha(theta+beta)} + L)^-1 - 1/(L+1)``."""
    L = likelihood
    c0 = np.log(L) + alpha * beta
    integral = (softplus(c0 + alpha) - softplus(c0)) / (alpha * L)
    return float(integral - 1.0 / (L + 1.0))


@dataclass(frozen=True)
class BestResponse:
    strategy: SignalStrategy
    mean: float
    interior: bool
    net_value: float


def _mbar_equation(mbar: float, alpha: float, v: float) -> float:
    """``f(mbar, alpha)`` rescaled by ``exp(-K)`` so large alpha does not overflow."""
    k = max(alpha * (v - mbar), 0.0)
    e1 = np.exp(-alpha * (mbar - v) - k)
    e2 = np.exp(-alpha * (1.0 - v) - k)
    e3 = np.exp(-alpha * mbar - k)
    e4 = np.exp(-k)
    return float(mbar * (e1 - e2) + (1.0 - mbar) * (e3 - e4))


_MBAR_NODES = expit(np.linspace(-25.0, 25.0, 64))


def _corner_response(c0: float, c1: float, mu: float) -> BestResponse:
    always = c0 + 0.5 * c1
    if always > 0:
        return BestResponse(ConstantStrategy(1.0), 1.0, False, always)
    return BestResponse(ConstantStrategy(0.0), 0.0, False, 0.0)


def best_response_da(r_belief: float, params: MarketParams) -> BestResponse:
    """Optimal DA signal when a fraction ``r_belief`` of others report sab."""
    caps, v, mu = params.caps, params.v, params.mu
    if mu <= 0:
        raise ValueError("best response needs mu > 0")
    if not r_hat(caps) < r_belief < 1.0:
        raise ValueError(f"r_belief must lie in (r_hat, 1), got {r_belief}")
    alpha = caps.lambda_s / (r_belief * mu)
    roots = scan_roots(lambda x: _mbar_equation(x, alpha, v), _MBAR_NODES)
    c0, c1 = delta_coefficients(Mechanism.DA, r_belief, params)
    if not roots:
        return _corner_response(c0, c1, mu)
    mbar = roots[0]
    strategy = LogitStrategy(alpha=alpha, beta=v - 1.0, likelihood=mbar / (1.0 - mbar))
    value = c0 * strategy.mean + c1 * strategy.first_moment() - mu * mutual_information(strategy)
    return BestResponse(strategy, float(strategy.mean), True, float(value))


def best_response_linear(intercept: float, slope: float, mu: float) -> BestResponse:
    """Optimal signal against a payoff gain ``intercept + slope * theta``."""
    if mu <= 0 or slope <= 0:
        raise ValueError("need mu > 0 and a positive slope")
    alpha, beta = slope / mu, intercept / slope
    try:
        L = consistency_solve(alpha, beta)
    except CornerSolution:
        return _corner_response(intercept, slope, mu)
    strategy = LogitStrategy(alpha, beta, L)
    value = intercept * strategy.mean + slope * strategy.first_moment() - mu * mutual_information(strategy)
    return BestResponse(strategy, float(strategy.mean), True, float(value))


def best_response(mech: Mechanism, r_belief: float, params: MarketParams) -> BestResponse:
    """Best response under either mechanism via the likelihood consistency equation."""
    c0, c1 = delta_coefficients(mech, r_belief, params)
    return best_response_linear(c0, c1, params.mu)


def binary_choice_response(x: float, mu: float) -> BestResponse:
    """Single-agent choice between a safe payoff ``x`` and the shock ``theta``."""
    return best_response_linear(-x, 1.0, mu)


def gross_gain(m: SignalStrategy, mech: Mechanism, r: float, params: MarketParams) -> float:
    c0, c1 = delta_coefficients(mech, r, params)
    return c0 * m.mean + c1 * m.first_moment()


def net_payoff(m: SignalStrategy, mech: Mechanism, r: float, params: MarketParams) -> float:
    """Expected gain from the sab recommendations minus the information cost."""
    c0, c1 = delta_coefficients(mech, r, params)
    gain = quad(lambda t: float(m(t)) * (c0 + c1 * t), points=m.breakpoints())
    return gain - params.mu * mutual_information(m)


def foc_residual(br: BestResponse, mech: Mechanism, r: float, params: MarketParams,
                 nodes: int = 101) -> float:
    """Largest violation of the interior first-order condition on a theta grid."""
    theta = np.linspace(0.0, 1.0, nodes)
    if isinstance(br.strategy, LogitStrategy):
        log_odds = br.strategy.log_odds_at_zero + br.strategy.alpha * theta
    else:
        m = br.strategy(theta)
        log_odds = np.log(m) - np.log1p(-m)
    lhs = delta(mech, theta, r, params)
    rhs = params.mu * (log_odds - (np.log(br.mean) - np.log1p(-br.mean)))
    return float(np.max(np.abs(lhs - rhs)))

