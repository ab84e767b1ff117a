"""Best-response dynamics, cost sweeps, and allocation-ranking diagnostics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._numerics import bisect, sign_changes
from .equilibrium import (
    AllocationDensity,
    MultipleEquilibria,
    NoInteriorEquilibrium,
    RegimeError,
    solve_interior,
    welfare,
)
from .info import BestResponse, best_response_da, quad
from .model import Capacities, MarketParams, Mechanism, r_hat

log = logging.getLogger(__name__)

Density = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TatonnementStep:
    k: int
    r: float
    mbar: float
    g: AllocationDensity
    welfare: float


@dataclass
class TatonnementTrace:
    steps: list[TatonnementStep] = field(default_factory=list)
    converged: bool = False
    corner: bool = False
    limit: Optional[float] = None

    @property
    def means(self) -> np.ndarray:
        return np.array([s.mbar for s in self.steps])

    @property
    def welfares(self) -> np.ndarray:
        return np.array([s.welfare for s in self.steps])

    def rows(self) -> list[dict]:
        return [{"k": s.k, "r": s.r, "mbar": s.mbar, "welfare": s.welfare} for s in self.steps]


def tatonnement(params: MarketParams, r0: float, max_iter: int = 500,
                tol: float = 1e-10) -> TatonnementTrace:
    """Iterate ``r_{k+1} = mean of the DA best response to r_k``."""
    if params.mu <= 0:
        raise ValueError("tatonnement needs mu > 0")
    trace = TatonnementTrace()
    r = float(r0)
    for k in range(max_iter):
        br: BestResponse = best_response_da(r, params)
        if not br.interior:
            trace.corner = True
            log.info("corner best response at step %d (r=%.6g)", k, r)
            break
        g = AllocationDensity(br.strategy, br.mean, params.caps)
        trace.steps.append(TatonnementStep(k, r, br.mean, g, welfare(g, params.caps)))
        if abs(br.mean - r) < tol:
            trace.converged = True
            break
        if not r_hat(params.caps) < br.mean < 1.0:
            trace.corner = True
            break
        r = br.mean
    trace.limit = trace.steps[-1].mbar if trace.steps else None
    return trace


@dataclass(frozen=True)
class MuSweepRow:
    mu: float
    r_B: Optional[float]
    r_D: Optional[float]
    W_B: Optional[float]
    W_D: Optional[float]

    @property
    def eff_loss(self) -> Optional[float]:
        if self.W_B is None or self.W_D is None:
            return None
        return self.W_B - self.W_D

    @property
    def exists_B(self) -> bool:
        return self.r_B is not None

    @property
    def exists_D(self) -> bool:
        return self.r_D is not None

    def as_dict(self) -> dict:
        return {"mu": self.mu, "r_B": self.r_B, "r_D": self.r_D, "W_B": self.W_B,
                "W_D": self.W_D, "eff_loss": self.eff_loss,
                "exists_B": self.exists_B, "exists_D": self.exists_D}


def _try_solve(mech: Mechanism, params: MarketParams):
    try:
        return solve_interior(mech, params)
    except (NoInteriorEquilibrium, RegimeError):
        return None


def sweep_mu(v: float, caps: Capacities, mu_grid: Sequence[float]) -> list[MuSweepRow]:
    """Solve both mechanisms at each cost; nonexistence is recorded as ``None``."""
    mu_grid = list(mu_grid)
    if not mu_grid:
        raise ValueError("empty mu grid")
    rows = []
    for mu in mu_grid:
        params = MarketParams(v, float(mu), caps)
        eb = _try_solve(Mechanism.BOSTON, params)
        ed = _try_solve(Mechanism.DA, params)
        rows.append(MuSweepRow(
            mu=float(mu),
            r_B=None if eb is None else eb.r,
            r_D=None if ed is None else ed.r,
            W_B=None if eb is None else eb.welfare,
            W_D=None if ed is None else ed.welfare,
        ))
    return rows


def mu_grid(lo: float, hi: float, count: int, spacing: str = "log") -> np.ndarray:
    if count < 1 or not 0 < lo <= hi:
        raise ValueError("need 0 < lo <= hi and count >= 1")
    if spacing == "log":
        return np.geomspace(lo, hi, count)
    if spacing == "linear":
        return np.linspace(lo, hi, count)
    raise ValueError(f"unknown spacing {spacing!r}")


@dataclass(frozen=True)
class CrossingReport:
    crossings: list[float]
    directions: list[int]

    @property
    def from_below(self) -> bool:
        """True when every sign change of f - g goes from negative to positive."""
        return bool(self.directions) and all(d > 0 for d in self.directions)

    @property
    def single_from_below(self) -> bool:
        return len(self.crossings) == 1 and self.from_below


def interior_grid(grid_size: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, grid_size + 2)[1:-1]


def single_crossing_scan(f: Density, g: Density, grid_size: int = 999) -> CrossingReport:
    """Locate sign changes of ``f - g`` on an interior uniform grid."""
    nodes = interior_grid(grid_size)
    diff = lambda t: float(np.asarray(f(t)) - np.asarray(g(t)))
    vals = np.asarray(f(nodes), dtype=float) - np.asarray(g(nodes), dtype=float)
    s = np.sign(vals)
    crossings, directions = [], []
    for i in sign_changes(vals):
        j = i + 1
        while s[j] == 0:
            j += 1
        loc = nodes[i + 1] if j > i + 1 else bisect(diff, nodes[i], nodes[j], xtol=1e-10)
        crossings.append(float(loc))
        directions.append(int(np.sign(s[j] - s[i])))
    return CrossingReport(crossings, directions)


def _cumulative(h, nodes: np.ndarray) -> np.ndarray:
    if hasattr(h, "cumulative"):
        return np.asarray(h.cumulative(nodes), dtype=float)
    edges = np.concatenate([[0.0], nodes])
    pieces = [quad(lambda t: float(h(t)), a, b) for a, b in zip(edges[:-1], edges[1:])]
    return np.cumsum(pieces)


def cumulative_gap(f, g, grid_size: int = 999) -> np.ndarray:
    """``G(theta) - F(theta)`` for cumulative integrals at interior grid nodes."""
    nodes = interior_grid(grid_size)
    return _cumulative(g, nodes) - _cumulative(f, nodes)


def fosd_check(f, g, grid_size: int = 999, strict_margin: float = 1e-10) -> bool:
    """Whether allocation ``f`` first-order stochastically dominates ``g``."""
    mass_f = float(_cumulative(f, np.array([1.0]))[0])
    mass_g = float(_cumulative(g, np.array([1.0]))[0])
    if abs(mass_f - mass_g) > 1e-8:
        raise ValueError(f"mass mismatch: {mass_f} vs {mass_g}")
    gap = cumulative_gap(f, g, grid_size)
    return bool(np.all(gap >= -strict_margin) and np.any(gap > strict_margin))


@dataclass(frozen=True)
class LoopReport:
    mbar1: float
    mbar2: float
    crossing: CrossingReport

    @property
    def mean_increases(self) -> bool:
        return self.mbar1 < self.mbar2

    @property
    def holds(self) -> bool:
        return self.mean_increases and self.crossing.single_from_below


def intensifying_loop_check(v: float, caps: Capacities, mu1: float, mu2: float,
                            r: float, grid_size: int = 999) -> LoopReport:
    """Compare DA best responses to the same belief ``r`` at two costs."""
    if not 0 < mu1 <= mu2:
        raise ValueError("need 0 < mu1 <= mu2")
    if mu2 >= caps.lambda_s * (1.0 - v):
        raise ValueError("mu2 must stay below lambda_s * (1 - v)")
    if not r_hat(caps) < r < 1.0:
        raise ValueError("r must lie in (r_hat, 1)")
    br1 = best_response_da(r, MarketParams(v, mu1, caps))
    br2 = best_response_da(r, MarketParams(v, mu2, caps))
    if not (br1.interior and br2.interior):
        raise ValueError("best responses must be interior")
    g1 = AllocationDensity(br1.strategy, br1.mean, caps)
    g2 = AllocationDensity(br2.strategy, br2.mean, caps)
    return LoopReport(br1.mean, br2.mean, single_crossing_scan(g1, g2, grid_size))


def theta_table(densities: dict[str, Density], nodes: int = 1001) -> dict[str, np.ndarray]:
    """Evaluate named curves on a shared uniform theta grid (figure data)."""
    theta = np.linspace(0.0, 1.0, nodes)
    out = {"theta": theta}
    for name, fn in densities.items():
        out[name] = np.asarray(fn(theta), dtype=float)
    return out


__all__ = [
    "CrossingReport",
    "LoopReport",
    "MultipleEquilibria",
    "MuSweepRow",
    "TatonnementStep",
    "TatonnementTrace",
    "cumulative_gap",
    "fosd_check",
    "intensifying_loop_check",
    "interior_grid",
    "mu_grid",
    "single_crossing_scan",
    "sweep_mu",
    "tatonnement",
    "theta_table",
]
