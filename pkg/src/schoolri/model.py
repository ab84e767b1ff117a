"""Economy primitives, population-level assignment tables, and payoff gains.

Three schools ``s`` (superior in expectation), ``a`` (average) and ``b``
(bad) face a unit mass of students.  Utilities are ``u_s = v + theta``,
``u_a = 1`` and ``u_b = 0`` with ``theta ~ U[0, 1]``.  Students submit one of
two rank-order lists, ``sab`` or ``asb``; ``r`` denotes the mass reporting
``sab``.  Priorities come from a single uniform lottery shared by all schools.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

SAB, ASB = 0, 1
S, A, B = 0, 1, 2
REPORTS = ("sab", "asb")
SCHOOLS = ("s", "a", "b")

_CAP_TOL = 1e-12


class Mechanism(str, enum.Enum):
    BOSTON = "boston"
    DA = "da"

    @classmethod
    def parse(cls, value: "str | Mechanism") -> "Mechanism":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"b": cls.BOSTON, "boston": cls.BOSTON, "ia": cls.BOSTON,
                   "d": cls.DA, "da": cls.DA, "deferred": cls.DA}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown mechanism {value!r}") from None


@dataclass(frozen=True)
class Capacities:
    """School capacities as fractions of the student population."""

    lambda_s: float
    lambda_a: float
    lambda_b: float

    def __post_init__(self):
        for name in ("lambda_s", "lambda_a", "lambda_b"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0:
                raise ValueError(f"{name} must be positive, got {val}")
        total = self.lambda_s + self.lambda_a + self.lambda_b
        if abs(total - 1.0) > _CAP_TOL:
            raise ValueError(f"capacities must sum to 1, got {total!r}")

    @classmethod
    def equal(cls) -> "Capacities":
        third = 1.0 / 3.0
        return cls(third, third, 1.0 - 2.0 * third)

    @classmethod
    def normalized(cls, lambda_s: float, lambda_a: float, lambda_b: float) -> "Capacities":
        """Rescale three positive weights so they sum to one exactly."""
        total = lambda_s + lambda_a + lambda_b
        ls, la = lambda_s / total, lambda_a / total
        return cls(ls, la, 1.0 - ls - la)

    def as_array(self) -> np.ndarray:
        return np.array([self.lambda_s, self.lambda_a, self.lambda_b])


@dataclass(frozen=True)
class MarketParams:
    v: float
    mu: float
    caps: Capacities

    def __post_init__(self):
        if not 0.0 < self.v < 1.0:
            raise ValueError(f"v must lie in (0, 1), got {self.v}")
        if not (np.isfinite(self.mu) and self.mu >= 0.0):
            raise ValueError(f"mu must be nonnegative, got {self.mu}")

    def with_mu(self, mu: float) -> "MarketParams":
        return MarketParams(self.v, mu, self.caps)


@dataclass(frozen=True)
class AllocationTable:
    """Mass of students by submitted list (rows) and assigned school (columns)."""

    mass: np.ndarray
    r: float

    def __post_init__(self):
        mass = np.array(self.mass, dtype=float)
        if mass.shape != (2, 3):
            raise ValueError("allocation table must be 2x3")
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)

    def conditional(self, report: int) -> np.ndarray:
        """Assignment probabilities over (s, a, b) given the submitted list."""
        size = self.r if report == SAB else 1.0 - self.r
        if size <= 0.0:
            raise ValueError("conditional probabilities undefined for an empty report group")
        return self.mass[report] / size

    def school_totals(self) -> np.ndarray:
        return self.mass.sum(axis=0)

    def as_dict(self) -> dict:
        return {f"{rep}_{sch}": float(self.mass[i, j])
                for i, rep in enumerate(REPORTS) for j, sch in enumerate(SCHOOLS)}


@dataclass(frozen=True)
class Cutoffs:
    p_s: float
    p_a: float
    p_b: float = 0.0


def r_hat(caps: Capacities) -> float:
    """Sab fraction above which school s is more selective than school a."""
    return caps.lambda_s / (caps.lambda_s + caps.lambda_a)


def _check_fraction(r: float) -> float:
    r = float(r)
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {r}")
    return r


def boston_table(r: float, caps: Capacities) -> AllocationTable:
    r = _check_fraction(r)
    ls, la, lb = caps.lambda_s, caps.lambda_a, caps.lambda_b
    if r >= 1.0 - la:
        # asb students all fit into a in round one
        mass = [[ls, la - (1.0 - r), lb],
                [0.0, 1.0 - r, 0.0]]
    elif r >= ls:
        mass = [[ls, 0.0, r - ls],
                [0.0, la, (1.0 - r) - la]]
    else:
        # rejected asb students take the seats s has left in round two
        mass = [[r, 0.0, 0.0],
                [ls - r, la, lb]]
    return AllocationTable(np.array(mass), r)


def da_cutoffs(r: float, caps: Capacities) -> Cutoffs:
    r = _check_fraction(r)
    if r <= 0.0:
        raise ValueError("cutoffs need a positive sab fraction")
    # The less selective cutoff solves (p_s - p_a) r + (1 - p_a)(1 - r) = lambda_a
    # (or its mirror image), which simplifies to lambda_b in both regimes.  The
    # max() only guards the last ulp at r = r_hat.
    lb = caps.lambda_b
    if r >= r_hat(caps):
        p_s, p_a = max(1.0 - caps.lambda_s / r, lb), lb
    else:
        p_s, p_a = lb, max(1.0 - caps.lambda_a / (1.0 - r), lb)
    clamp = lambda p: float(min(1.0, max(0.0, p)))
    return Cutoffs(clamp(p_s), clamp(p_a), 0.0)


def da_table(r: float, caps: Capacities) -> AllocationTable:
    """DA masses implied by the market-clearing cutoffs."""
    r = _check_fraction(r)
    if r == 0.0:
        return AllocationTable(np.array([[0.0, 0.0, 0.0], caps.as_array()]), r)
    c = da_cutoffs(r, caps)
    if r >= r_hat(caps):
        mass = [[(1.0 - c.p_s) * r, (c.p_s - c.p_a) * r, c.p_a * r],
                [0.0, (1.0 - c.p_a) * (1.0 - r), c.p_a * (1.0 - r)]]
    else:
        mass = [[(1.0 - c.p_s) * r, 0.0, c.p_s * r],
                [(c.p_a - c.p_s) * (1.0 - r), (1.0 - c.p_a) * (1.0 - r), c.p_s * (1.0 - r)]]
    return AllocationTable(np.array(mass), r)


def allocation_table(mech: Mechanism, r: float, caps: Capacities) -> AllocationTable:
    mech = Mechanism.parse(mech)
    return boston_table(r, caps) if mech is Mechanism.BOSTON else da_table(r, caps)


def delta_coefficients(mech: Mechanism, r: float, params: MarketParams) -> tuple[float, float]:
    """Return ``(intercept, slope)`` with ``delta(theta) = intercept + slope * theta``.

    The gain from listing ``sab`` over ``asb`` follows from the conditional
    assignment probabilities of the relevant table panel, which covers every
    ``r`` in (0, 1) and not only the regime where s is more selective.
    """
    r = float(r)
    if not 0.0 < r < 1.0:
        raise ValueError(f"delta needs r in (0, 1), got {r}")
    table = allocation_table(mech, r, params.caps)
    p_sab = table.conditional(SAB)
    p_asb = table.conditional(ASB)
    slope = p_sab[S] - p_asb[S]
    intercept = slope * params.v + (p_sab[A] - p_asb[A])
    return float(intercept), float(slope)


def delta(mech: Mechanism, theta, r: float, params: MarketParams):
    """Expected utility gain of reporting sab over asb for preference shock ``theta``."""
    c0, c1 = delta_coefficients(mech, r, params)
    return c0 + c1 * np.asarray(theta, dtype=float) if np.ndim(theta) else c0 + c1 * float(theta)
