"""Finite-population Monte Carlo runs of the Boston, DA and TTC mechanisms.

Each school's seat count is ``floor(lambda_j * N)``; leftover seats go to
school b so that seats always total N.  Priorities are a single uniform
lottery shared by all schools; a higher draw means higher priority.

Random draws come from Philox (a counter-based generator) with one stream
per variable spawned from the seed.  Student ``i`` always receives element
``i`` of each stream, so a student's draws do not depend on N or on how the
population is chunked.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Union

import numpy as np

from .info import SignalStrategy
from .model import (
    ASB,
    SAB,
    AllocationTable,
    Capacities,
    Cutoffs,
    MarketParams,
    Mechanism,
    S,
)

log = logging.getLogger(__name__)

# rank-order lists as school indices, indexed by report
PREFERENCE_LISTS = np.array([[0, 1, 2], [1, 0, 2]])
_STREAMS = ("theta", "priority", "report", "ttc")


@dataclass(frozen=True)
class StudentSample:
    """Column-oriented draws for a finite population."""

    theta: np.ndarray
    priority: np.ndarray
    report: np.ndarray

    def __post_init__(self):
        n = len(self.theta)
        if len(self.priority) != n or len(self.report) != n:
            raise ValueError("columns must have equal length")

    @property
    def n(self) -> int:
        return len(self.theta)

    @property
    def sab_fraction(self) -> float:
        return float(np.mean(self.report == SAB))

    def preference_lists(self) -> np.ndarray:
        return PREFERENCE_LISTS[self.report]

    def priority_rank(self) -> np.ndarray:
        """Position of each student in the priority order (0 = highest).

        Equal draws are broken by student index.
        """
        order = np.lexsort((np.arange(self.n), -self.priority))
        if self.n > 1 and np.any(np.diff(self.priority[order]) == 0):
            log.warning("tied priority draws; breaking ties by student index")
        rank = np.empty(self.n, dtype=np.int64)
        rank[order] = np.arange(self.n)
        return rank


@dataclass(frozen=True)
class FixedFraction:
    """Each student reports sab with probability r, independent of theta."""

    r: float


@dataclass(frozen=True)
class StrategyReporting:
    """Each student reports sab with probability m(theta_i)."""

    strategy: SignalStrategy


Reporting = Union[FixedFraction, StrategyReporting]


@dataclass(frozen=True)
class SimConfig:
    n_students: int
    seed: int
    reporting: Reporting

    def __post_init__(self):
        if self.n_students < 1:
            raise ValueError("n_students must be at least 1")


def streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {name: np.random.Generator(np.random.Philox(ss)) for name, ss in zip(_STREAMS, children)}


def seat_counts(caps: Capacities, n: int) -> np.ndarray:
    seats = np.floor(caps.as_array() * n).astype(np.int64)
    seats[2] = n - seats[0] - seats[1]
    return seats


def sample_students(config: SimConfig) -> StudentSample:
    rng = streams(config.seed)
    n = config.n_students
    theta = rng["theta"].random(n)
    priority = rng["priority"].random(n)
    u = rng["report"].random(n)
    if isinstance(config.reporting, FixedFraction):
        p_sab = np.full(n, config.reporting.r)
    else:
        p_sab = np.asarray(config.reporting.strategy(theta), dtype=float)
    report = np.where(u < p_sab, SAB, ASB).astype(np.int8)
    return StudentSample(theta, priority, report)


def run_boston(students: StudentSample, caps: Capacities) -> np.ndarray:
    """Immediate acceptance: every round's admissions are final."""
    seats = seat_counts(caps, students.n)
    prefs = students.preference_lists()
    rank = students.priority_rank()
    assigned = np.full(students.n, -1, dtype=np.int64)
    left = seats.copy()
    for k in range(prefs.shape[1]):
        for j in range(3):
            if left[j] == 0:
                continue
            cand = np.flatnonzero((assigned < 0) & (prefs[:, k] == j))
            if cand.size == 0:
                continue
            take = cand[np.argsort(rank[cand], kind="stable")][: left[j]]
            assigned[take] = j
            left[j] -= take.size
    return assigned


def run_da(students: StudentSample, caps: Capacities) -> np.ndarray:
    """Student-proposing deferred acceptance with tentative holds."""
    seats = seat_counts(caps, students.n)
    prefs = students.preference_lists()
    rank = students.priority_rank()
    next_choice = np.zeros(students.n, dtype=np.int64)
    held = [np.empty(0, dtype=np.int64) for _ in range(3)]
    free = np.arange(students.n)
    while free.size:
        target = prefs[free, next_choice[free]]
        rejected = []
        for j in range(3):
            pool = np.concatenate([held[j], free[target == j]])
            if pool.size <= seats[j]:
                held[j] = pool
                continue
            pool = pool[np.argsort(rank[pool], kind="stable")]
            held[j], out = pool[: seats[j]], pool[seats[j]:]
            rejected.append(out)
        free = np.concatenate(rejected) if rejected else np.empty(0, dtype=np.int64)
        next_choice[free] += 1
        if free.size and next_choice[free].max() >= prefs.shape[1]:
            raise RuntimeError("a student exhausted their list; seat counts are inconsistent")
    assigned = np.full(students.n, -1, dtype=np.int64)
    for j in range(3):
        assigned[held[j]] = j
    return assigned


def da_by_cutoffs(students: StudentSample, caps: Capacities) -> tuple[np.ndarray, np.ndarray]:
    """DA outcome via market-clearing cutoffs on the realized sample.

    Returns the assignment and the cutoffs expressed as priority ranks: a
    student clears school j when their rank is strictly below ``cut[j]``.
    Cutoffs start fully permissive and only tighten, so the iteration
    reaches the student-optimal clearing point.
    """
    seats = seat_counts(caps, students.n)
    prefs = students.preference_lists()
    rank = students.priority_rank()
    cut = np.full(3, students.n, dtype=np.int64)
    while True:
        choice = _best_cleared(prefs, rank, cut)
        new = cut.copy()
        for j in range(3):
            ranks_j = np.sort(rank[choice == j])
            if ranks_j.size > seats[j]:
                new[j] = min(new[j], ranks_j[seats[j]])
        if np.array_equal(new, cut):
            return choice, cut
        cut = new


def _best_cleared(prefs: np.ndarray, rank: np.ndarray, cut: np.ndarray) -> np.ndarray:
    choice = np.full(len(rank), -1, dtype=np.int64)
    for k in range(prefs.shape[1] - 1, -1, -1):
        ok = rank < cut[prefs[:, k]]
        choice = np.where(ok, prefs[:, k], choice)
    return choice


def realized_cutoffs(students: StudentSample, assigned: np.ndarray) -> Cutoffs:
    """Lowest admitted priority at s and a (zero for an empty school)."""
    vals = []
    for j in (0, 1):
        pr = students.priority[assigned == j]
        vals.append(float(pr.min()) if pr.size else 0.0)
    return Cutoffs(vals[0], vals[1], 0.0)


def _endow(rng: np.random.Generator, caps: Capacities, n: int) -> np.ndarray:
    return rng.permutation(np.repeat(np.arange(3), seat_counts(caps, n)))


def ttc_endowment(caps: Capacities, n: int, seed: int) -> np.ndarray:
    """The random seat endowment that ``run_ttc`` starts from."""
    return _endow(streams(seed)["ttc"], caps, n)


def run_ttc(students: StudentSample, caps: Capacities, seed: int) -> np.ndarray:
    """Random seat endowments followed by s-for-a trades.

    Only sab students holding an a seat and asb students holding an s seat
    gain from trading; a uniformly random subset of the larger side is
    matched one-to-one with the smaller side.  Holders of b seats keep them.
    """
    rng = streams(seed)["ttc"]
    endowment = _endow(rng, caps, students.n)
    sab_a = np.flatnonzero((students.report == SAB) & (endowment == 1))
    asb_s = np.flatnonzero((students.report == ASB) & (endowment == 0))
    k = min(sab_a.size, asb_s.size)
    give_s = rng.permutation(sab_a)[:k]
    give_a = rng.permutation(asb_s)[:k]
    assigned = endowment.astype(np.int64)
    assigned[give_s] = 0
    assigned[give_a] = 1
    return assigned


def run(mech: Mechanism | str, students: StudentSample, caps: Capacities, seed: int = 0) -> np.ndarray:
    if str(getattr(mech, "value", mech)).lower() == "ttc":
        return run_ttc(students, caps, seed)
    mech = Mechanism.parse(mech)
    return run_boston(students, caps) if mech is Mechanism.BOSTON else run_da(students, caps)


def mass_table(students: StudentSample, assigned: np.ndarray) -> np.ndarray:
    """Empirical report-by-school masses as fractions of N."""
    counts = np.zeros((2, 3))
    np.add.at(counts, (students.report.astype(np.int64), assigned), 1.0)
    return counts / students.n


def binomial_se(mass: np.ndarray, n: int) -> np.ndarray:
    p = np.clip(np.asarray(mass, dtype=float), 0.0, 1.0)
    return np.sqrt(p * (1.0 - p) / n)


def table_z_scores(empirical: np.ndarray, table: AllocationTable, n: int) -> np.ndarray:
    """Deviations in binomial standard errors; cells with zero mass use 1/N."""
    se = np.maximum(binomial_se(table.mass, n), 1.0 / n)
    return (empirical - table.mass) / se


def justified_envy(students: StudentSample, assigned: np.ndarray) -> list[tuple[int, int]]:
    """Pairs (i, k) where i prefers k's school and outranks k in priority."""
    prefs = students.preference_lists()
    pos = np.argsort(prefs, axis=1)  # pos[i, j] = place of school j in i's list
    own = pos[np.arange(students.n), assigned]
    pairs = []
    for i in range(students.n):
        better = pos[i, assigned] < own[i]
        lower = students.priority < students.priority[i]
        for k in np.flatnonzero(better & lower):
            pairs.append((i, int(k)))
    return pairs


def envy_count(students: StudentSample, assigned: np.ndarray) -> int:
    """Number of students with justified envy, O(N log N) for large samples."""
    prefs = students.preference_lists()
    pos = np.argsort(prefs, axis=1)
    own = pos[np.arange(students.n), assigned]
    lowest = np.full(3, np.inf)
    for j in range(3):
        pr = students.priority[assigned == j]
        if pr.size:
            lowest[j] = pr.min()
    envious = np.zeros(students.n, dtype=bool)
    for j in range(3):
        envious |= (pos[:, j] < own) & (students.priority > lowest[j])
    return int(envious.sum())


def utilities(theta: np.ndarray, v: float) -> np.ndarray:
    """Per-student utility of (s, a, b)."""
    theta = np.asarray(theta, dtype=float)
    return np.stack([v + theta, np.ones_like(theta), np.zeros_like(theta)], axis=-1)


def truthful_reports(theta: np.ndarray, v: float) -> np.ndarray:
    """Sab exactly when school s beats school a, i.e. ``v + theta > 1``."""
    return np.where(v + np.asarray(theta, dtype=float) > 1.0, SAB, ASB).astype(np.int8)


def da_flip_gains(theta: np.ndarray, report: np.ndarray, caps: Capacities, v: float) -> float:
    """Largest gain any student gets by leaving a truthful list, over all priority orders.

    Student i reports truthfully while the others keep ``report``, then
    flips that list.  Every strict priority ordering is enumerated, so keep N
    at six or below.
    """
    theta = np.asarray(theta, dtype=float)
    report = np.asarray(report, dtype=np.int8)
    n = len(theta)
    if n > 7:
        raise ValueError("enumeration is limited to small populations")
    util = utilities(theta, v)
    truth = truthful_reports(theta, v)
    worst = -np.inf
    for perm in itertools.permutations(range(n)):
        priority = 1.0 - (np.asarray(perm, dtype=float) + 0.5) / n
        for i in range(n):
            honest = report.copy()
            honest[i] = truth[i]
            flipped = honest.copy()
            flipped[i] = 1 - truth[i]
            base = run_da(StudentSample(theta, priority, honest), caps)[i]
            alt = run_da(StudentSample(theta, priority, flipped), caps)[i]
            worst = max(worst, util[i, alt] - util[i, base])
    return float(worst)


@dataclass(frozen=True)
class SimulationResult:
    table: np.ndarray
    table_se: np.ndarray
    welfare: float
    welfare_se: float
    sab_fraction: float
    n: int

    def as_dict(self) -> dict:
        out = {"n": self.n, "sab_fraction": self.sab_fraction,
               "welfare": self.welfare, "welfare_se": self.welfare_se}
        for i, rep in enumerate(("sab", "asb")):
            for j, sch in enumerate(("s", "a", "b")):
                out[f"{rep}_{sch}"] = float(self.table[i, j])
                out[f"{rep}_{sch}_se"] = float(self.table_se[i, j])
        return out


def simulate_welfare(config: SimConfig, caps: Capacities, params: MarketParams,
                     mech: Mechanism | str) -> SimulationResult:
    """Sample a population, run the mechanism, and summarize who gets school s."""
    students = sample_students(config)
    assigned = run(mech, students, caps, seed=config.seed)
    table = mass_table(students, assigned)
    th = students.theta[assigned == S]
    w = float(th.mean()) if th.size else float("nan")
    w_se = float(th.std(ddof=1) / np.sqrt(th.size)) if th.size > 1 else float("nan")
    return SimulationResult(table, binomial_se(table, students.n), w, w_se,
                            students.sab_fraction, students.n)


def cutoff_standard_errors(cutoffs: Cutoffs, students: StudentSample, caps: Capacities) -> np.ndarray:
    """Order-statistic standard errors for the realized s and a cutoffs.

    The more selective of s and a fills from one report group alone, so its
    cutoff is a quantile of that group's priorities; the other cutoff is a
    quantile over everyone who lists both ahead of b.
    """
    n_sab = max(int(np.sum(students.report == SAB)), 1)
    n_asb = max(students.n - n_sab, 1)
    if students.sab_fraction >= caps.lambda_s / (caps.lambda_s + caps.lambda_a):
        sizes = (n_sab, students.n)
    else:
        sizes = (students.n, n_asb)
    p = np.clip([cutoffs.p_s, cutoffs.p_a], 0.0, 1.0)
    return np.sqrt(p * (1.0 - p) / np.array(sizes, dtype=float))
