"""Acceptance criteria, one check per criterion.

Run directly (``python tests/test_acceptance.py``) to print one PASS/FAIL
line per criterion, or through pytest, which lists the same lines in the
terminal summary.
"""

from __future__ import annotations

import sys
import time

import numpy as np
from scipy import integrate, optimize

from schoolri.analysis import (
    cumulative_gap,
    intensifying_loop_check,
    mu_grid,
    single_crossing_scan,
    sweep_mu,
    tatonnement,
)
from schoolri.equilibrium import (
    NoInteriorEquilibrium,
    complete_info_threshold,
    mu_bar,
    self_consistency_gap,
    solve_interior,
    v_bounds_da,
)
from schoolri.info import binary_choice_response, mutual_information
from schoolri.model import Capacities, MarketParams, Mechanism, boston_table, da_cutoffs, da_table, r_hat
from schoolri import simulate as sim

EQUAL = Capacities.equal()
RESULTS: list[str] = []


def _record(number: int, title: str, ok: bool, detail: str) -> str:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title} | {detail}"
    RESULTS.append(line)
    return line


def criterion_1():
    t0 = time.perf_counter()
    p = MarketParams(0.6, 0.0, EQUAL)
    th_d, _ = complete_info_threshold(Mechanism.DA, p)
    th_b, _ = complete_info_threshold(Mechanism.BOSTON, p)

    def gain(theta):
        # Boston gain from sab with a fraction 1 - theta reporting sab
        r = 1.0 - theta
        return EQUAL.lambda_s * (0.6 + theta) / r - min(EQUAL.lambda_a / (1 - r), (1 - EQUAL.lambda_a) / r)

    oracle = optimize.bisect(gain, 1e-6, 0.5 - 1e-9, xtol=1e-15)
    elapsed = time.perf_counter() - t0
    ok = th_d == 0.4 and abs(th_b - oracle) <= 1e-10 and th_b > th_d and elapsed < 1.0
    return ok, f"theta_D={th_d!r} theta_B={th_b:.12f} |theta_B-oracle|={abs(th_b - oracle):.1e} time={elapsed:.3f}s"


def criterion_2():
    z = EQUAL.lambda_s / 0.1
    direct = np.log((np.exp(z) - 1) / z) / z
    b = v_bounds_da(0.1, EQUAL)
    solved = solve_interior(Mechanism.DA, MarketParams(0.6, 0.1, EQUAL))
    try:
        solve_interior(Mechanism.DA, MarketParams(0.64, 0.1, EQUAL))
        fails_above = False
    except NoInteriorEquilibrium:
        fails_above = True
    big = v_bounds_da(1e3, EQUAL).v_upper
    small = v_bounds_da(1e-3, EQUAL).v_upper
    checks = {
        "formula": abs(b.v_upper - direct) <= 1e-9,
        "solve@0.6": 0.5 < solved.r < 1,
        "none@0.64": fails_above,
        "mu=1e3->1/2": abs(big - 0.5) <= 1e-3,
        "mu=1e-3->1": abs(small - 1.0) <= 1e-2,
    }
    failed = [k for k, v in checks.items() if not v]
    return not failed, (f"v_upper(0.1)={b.v_upper:.10f} direct={direct:.10f} "
                        f"v_upper(1e3)={big:.6f} v_upper(1e-3)={small:.6f} "
                        f"(|gap|={abs(small - 1):.4f} vs 1e-2) failed={failed or 'none'}")


def criterion_3():
    t0 = time.perf_counter()
    worst_res = worst_gap = 0.0
    pairs = 0
    ordered = True
    for v in (0.6, 0.7):
        for mu in (0.01, 0.02, 0.05, 0.1):
            p = MarketParams(v, mu, EQUAL)
            try:
                eb = solve_interior(Mechanism.BOSTON, p)
                ed = solve_interior(Mechanism.DA, p)
            except NoInteriorEquilibrium:
                continue
            pairs += 1
            for eq in (eb, ed):
                worst_res = max(worst_res, eq.residual)
                worst_gap = max(worst_gap, self_consistency_gap(eq))
            ordered &= r_hat(EQUAL) < eb.r < ed.r < 1
    elapsed = time.perf_counter() - t0
    ok = worst_res <= 1e-10 and worst_gap <= 1e-9 and ordered and elapsed < 5.0 and pairs > 0
    return ok, (f"pairs={pairs}/8 max|residual|={worst_res:.1e} max|int m - r|={worst_gap:.1e} "
                f"ordering={ordered} time={elapsed:.2f}s")


def _equilibria(v=0.6, mu=0.05):
    p = MarketParams(v, mu, EQUAL)
    return solve_interior(Mechanism.BOSTON, p), solve_interior(Mechanism.DA, p)


def criterion_4():
    eb, ed = _equilibria()
    rep = single_crossing_scan(eb.g, ed.g, 999)
    gap = cumulative_gap(eb.g, ed.g, 999)
    ok = rep.single_from_below and bool(np.all(gap > 1e-10))
    return ok, (f"crossings={[round(c, 6) for c in rep.crossings]} from_below={rep.from_below} "
                f"min cumulative gap={gap.min():.3e}")


def criterion_5():
    eb, ed = _equilibria()
    rep = single_crossing_scan(eb.strategy.derivative, ed.strategy.derivative, 999)
    return rep.single_from_below, (f"crossings={[round(c, 6) for c in rep.crossings]} "
                                   f"from_below={rep.from_below}")


def criterion_6():
    eb, ed = _equilibria()
    p = MarketParams(0.6, 0.05, EQUAL)
    trace = tatonnement(p, eb.r, max_iter=500)
    means = trace.means
    incr = bool(np.all(np.diff(means) > 0))
    inside = bool(np.all((means > eb.r) & (means < ed.r)))
    close = trace.limit is not None and abs(trace.limit - ed.r) <= 1e-8
    w_ok = bool(np.all(np.diff(trace.welfares) <= 0))
    ok = 0.05 < EQUAL.lambda_s * 0.4 and incr and inside and close and w_ok and len(means) <= 500
    return ok, (f"steps={len(means)} increasing={incr} inside=(r_B,r_D):{inside} "
                f"|limit-r_D|={abs(trace.limit - ed.r):.1e} welfare nonincreasing={w_ok}")


def criterion_7():
    rep = intensifying_loop_check(0.6, EQUAL, 0.05, 0.1, 0.65)
    return rep.holds, (f"mbar(mu1)={rep.mbar1:.6f} mbar(mu2)={rep.mbar2:.6f} "
                       f"crossings={[round(c, 6) for c in rep.crossing.crossings]}")


def criterion_8():
    t0 = time.perf_counter()
    details, ok = [], True
    for v in (0.6, 0.7):
        top = mu_bar(v, EQUAL)
        rows = sweep_mu(v, EQUAL, mu_grid(0.005, 0.999 * top, 20, "log"))
        if not all(r.exists_B and r.exists_D for r in rows):
            ok = False
            details.append(f"v={v}: missing equilibria")
            continue
        r_d = np.array([r.r_D for r in rows])
        loss = np.array([r.eff_loss for r in rows])
        rd_ok = bool(np.all(np.diff(r_d) > 0)) and r_d[-1] > 0.99
        loss_ok = bool(np.all(np.diff(loss) >= 0))
        rb_ok = True
        if v == 0.6:
            rb_ok = max(r.r_B for r in rows) <= 2 / 3
        ok &= rd_ok and loss_ok and rb_ok
        details.append(f"v={v}: r_D {r_d[0]:.4f}->{r_d[-1]:.5f} increasing={rd_ok} "
                       f"max r_B={max(r.r_B for r in rows):.4f} loss {loss[0]:.4f}->{loss[-1]:.4f} "
                       f"monotone={loss_ok}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 30.0
    return ok, "; ".join(details) + f" time={elapsed:.1f}s"


def _random_pair(rng):
    """Capacities and a sab fraction kept 0.03 away from the DA regime switch."""
    while True:
        caps = Capacities.normalized(*rng.uniform(0.15, 1.0, 3))
        r = rng.uniform(0.05, 0.95)
        if abs(r - r_hat(caps)) > 0.03:
            return caps, r


def criterion_9():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240601)
    n = 100_000
    worst = {"boston": 0.0, "da": 0.0, "ttc": 0.0, "cutoffs": 0.0}
    beyond, total = 0, 0
    for k in range(20):
        caps, r = _random_pair(rng)
        students = sim.sample_students(sim.SimConfig(n, 1000 + k, sim.FixedFraction(r)))
        rt = students.sab_fraction
        a_b = sim.run_boston(students, caps)
        a_d = sim.run_da(students, caps)
        a_t = sim.run_ttc(students, caps, 1000 + k)
        for key, assigned, table in (("boston", a_b, boston_table(rt, caps)),
                                     ("da", a_d, da_table(rt, caps)),
                                     ("ttc", a_t, da_table(rt, caps))):
            z = sim.table_z_scores(sim.mass_table(students, assigned), table, n)
            worst[key] = max(worst[key], float(np.abs(z).max()))
        emp, th = sim.realized_cutoffs(students, a_d), da_cutoffs(rt, caps)
        se = np.maximum(sim.cutoff_standard_errors(th, students, caps), 1.0 / n)
        zc = np.abs((np.array([emp.p_s, emp.p_a]) - [th.p_s, th.p_a]) / se)
        worst["cutoffs"] = max(worst["cutoffs"], float(zc.max()))
        beyond += int(np.sum(zc > 3.0))
        total += zc.size
    envy = 0
    for _ in range(200):
        m = int(rng.integers(2, 101))
        caps = Capacities.normalized(*rng.uniform(0.1, 1.0, 3))
        s = sim.StudentSample(rng.random(m), rng.random(m), rng.integers(0, 2, m).astype(np.int8))
        envy += len(sim.justified_envy(s, sim.run_da(s, caps)))
    elapsed = time.perf_counter() - t0
    ok = all(w <= 3.0 for w in worst.values()) and envy == 0 and elapsed < 60.0
    return ok, (" ".join(f"max|z|_{k}={w:.2f}" for k, w in worst.items())
                + f" cutoff stats beyond 3 SE={beyond}/{total} envy_pairs={envy} time={elapsed:.1f}s")


def criterion_10():
    checks = []
    for mu in (0.2, 0.05):
        br = binary_choice_response(0.5, mu)
        m = br.strategy
        checks.append((mu, m.likelihood, float(m(0.5)), float(m.derivative(0.5)), mutual_information(m)))
    sym = all(abs(L - 1) <= 1e-12 and abs(m5 - 0.5) <= 1e-12 for _, L, m5, _, _ in checks)
    slope_up = checks[1][3] > checks[0][3]
    info_up = checks[1][4] > checks[0][4]
    # quadrature cross-check of the mutual information at the cheaper cost
    m = binary_choice_response(0.5, 0.05).strategy
    xlx = lambda p: p * np.log(p) if p > 0 else 0.0
    quad_mi = integrate.quad(lambda t: xlx(float(m(t))) + xlx(1 - float(m(t))), 0, 1)[0] + np.log(2)
    mi_ok = abs(quad_mi - checks[1][4]) <= 1e-9
    ok = sym and slope_up and info_up and mi_ok
    return ok, (f"L={checks[1][1]:.12f} m(1/2)={checks[1][2]:.12f} "
                f"slope {checks[0][3]:.4f}->{checks[1][3]:.4f} I {checks[0][4]:.5f}->{checks[1][4]:.5f}")


CRITERIA = [
    (1, "complete-information benchmark", criterion_1),
    (2, "existence bounds", criterion_2),
    (3, "equilibrium ordering and residuals", criterion_3),
    (4, "efficiency ranking", criterion_4),
    (5, "information-focus comparison", criterion_5),
    (6, "tatonnement", criterion_6),
    (7, "intensifying loop", criterion_7),
    (8, "comparative statics", criterion_8),
    (9, "Monte Carlo oracle", criterion_9),
    (10, "binary-choice micro example", criterion_10),
]


def _run(number: int):
    _, title, fn = CRITERIA[number - 1]
    ok, detail = fn()
    line = _record(number, title, ok, detail)
    print(line)
    assert ok, line


def test_criterion_01():
    _run(1)


def test_criterion_02():
    _run(2)


def test_criterion_03():
    _run(3)


def test_criterion_04():
    _run(4)


def test_criterion_05():
    _run(5)


def test_criterion_06():
    _run(6)


def test_criterion_07():
    _run(7)


def test_criterion_08():
    _run(8)


def test_criterion_09():
    _run(9)


def test_criterion_10():
    _run(10)


def main() -> int:
    failures = 0
    for number, title, fn in CRITERIA:
        ok, detail = fn()
        print(_record(number, title, ok, detail), flush=True)
        failures += not ok
    print(f"{len(CRITERIA) - failures}/{len(CRITERIA)} criteria passed")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
