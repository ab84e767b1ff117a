import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from schoolri.equilibrium import solve
from schoolri.info import (
    ConstantStrategy,
    GridStrategy,
    LogitStrategy,
    StepStrategy,
    best_response,
    best_response_da,
    binary_choice_response,
    consistency_residual,
    consistency_solve,
    foc_residual,
    logit_strategy,
    mutual_information,
    net_payoff,
)
from schoolri.model import MarketParams, Mechanism


def mi_oracle(fn, points=None):
    """Mutual information by brute-force quadrature of the defining integral."""
    def xlx(p):
        return p * np.log(p) if p > 0 else 0.0

    mbar = integrate.quad(fn, 0, 1, points=points, limit=400, epsabs=1e-13)[0]
    inner = integrate.quad(lambda t: xlx(fn(t)) + xlx(1 - fn(t)), 0, 1, points=points,
                           limit=400, epsabs=1e-13)[0]
    return inner - xlx(mbar) - xlx(1 - mbar)


class TestMutualInformation:
    def test_constant_is_free(self):
        assert mutual_information(ConstantStrategy(0.37)) == 0.0

    def test_fair_step(self):
        assert mutual_information(StepStrategy(0.5)) == pytest.approx(np.log(2), abs=1e-14)

    def test_step_closed_form(self):
        expected = -0.6 * np.log(0.6) - 0.4 * np.log(0.4)
        assert mutual_information(StepStrategy(0.4)) == pytest.approx(expected, abs=1e-14)
        assert expected == pytest.approx(0.673012, abs=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(alpha=st.floats(0.5, 60), c=st.floats(-30, 30))
    def test_logit_matches_quadrature(self, alpha, c):
        m = LogitStrategy(alpha, c / alpha, 1.0)
        val = mutual_information(m)
        assert 0.0 <= val <= np.log(2)
        assert val == pytest.approx(mi_oracle(lambda t: float(m(t))), abs=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(vals=st.lists(st.floats(0, 1), min_size=3, max_size=12))
    def test_grid_matches_quadrature_and_relabeling(self, vals):
        vals = np.sort(vals)
        nodes = np.linspace(0, 1, len(vals))
        m = GridStrategy(nodes, vals)
        mirrored = GridStrategy(1.0 - nodes[::-1], vals[::-1])
        val = mutual_information(m)
        assert val == pytest.approx(mutual_information(mirrored), abs=1e-12)
        assert val == pytest.approx(mi_oracle(lambda t: float(m(t)), points=nodes[1:-1]), abs=1e-8)

    def test_cost_falls_with_mu(self, caps):
        mus = np.linspace(0.02, 0.3, 15)
        costs = [mutual_information(logit_strategy(Mechanism.DA, 0.7, MarketParams(0.6, mu, caps)))
                 for mu in mus]
        assert np.all(np.diff(costs) <= 0)


class TestLogitStrategy:
    def test_da_indifference_gives_r(self, base_params):
        for r in (0.55, 0.7, 0.9):
            m = logit_strategy(Mechanism.DA, r, base_params)
            assert m(1 - base_params.v) == pytest.approx(r, abs=1e-14)

    def test_monotone_with_interior_root(self, base_params):
        m = logit_strategy(Mechanism.DA, 0.7, base_params)
        th = np.linspace(0, 1, 201)
        assert np.all(np.diff(m(th)) > 0)
        assert m(0.0) < 0.7 < m(1.0)

    def test_small_cost_is_sharp(self, caps):
        # evaluated at the equilibrium fraction for this cost
        p = MarketParams(0.6, 0.005, caps)
        m = logit_strategy(Mechanism.DA, solve(Mechanism.DA, p).r, p)
        assert m(0.4 - 0.05) < 0.01 and m(0.4 + 0.05) > 0.99

    def test_rejects_free_information(self, caps):
        with pytest.raises(ValueError):
            logit_strategy(Mechanism.DA, 0.7, MarketParams(0.6, 0.0, caps))

    def test_closed_form_mean_vs_quadrature(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            m = LogitStrategy(rng.uniform(0.1, 80), rng.uniform(-1.5, 0.5), float(np.exp(rng.uniform(-5, 5))))
            quad_mean = integrate.quad(lambda t: float(m(t)), 0, 1, points=m.breakpoints(),
                                       epsabs=1e-13, limit=200)[0]
            assert m.mean == pytest.approx(quad_mean, abs=1e-9)


class TestConsistency:
    def test_symmetric(self):
        for alpha in (0.5, 3.0, 40.0):
            assert consistency_solve(alpha, -0.5) == pytest.approx(1.0, abs=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(alpha=st.floats(0.2, 50), beta=st.floats(-0.9, -0.1))
    def test_residual(self, alpha, beta):
        try:
            L = consistency_solve(alpha, beta)
        except ArithmeticError:
            return
        assert abs(consistency_residual(L, alpha, beta)) <= 1e-12 * max(1.0, 1.0 / L)

    @settings(max_examples=40, deadline=None)
    @given(alpha=st.floats(1, 30), b1=st.floats(-0.8, -0.2), db=st.floats(0.01, 0.1))
    def test_increasing_in_shift(self, alpha, b1, db):
        try:
            l1, l2 = consistency_solve(alpha, b1), consistency_solve(alpha, b1 + db)
        except ArithmeticError:
            return
        assert l1 < l2

    def test_boston_belief_pushes_mean_up(self, eq_pair, base_params):
        eb, _ = eq_pair
        alpha = base_params.caps.lambda_s / (eb.r * base_params.mu)
        L = consistency_solve(alpha, base_params.v - 1)
        assert L / (1 + L) > eb.r

    def test_corner_reported(self):
        with pytest.raises(ArithmeticError):
            consistency_solve(0.5, 3.0)


class TestBestResponse:
    def test_fixed_point_at_da_equilibrium(self, eq_pair, base_params):
        _, ed = eq_pair
        assert best_response_da(ed.r, base_params).mean == pytest.approx(ed.r, abs=1e-10)

    def test_prop5_first_step(self, eq_pair, base_params):
        eb, ed = eq_pair
        br = best_response_da(eb.r, base_params)
        assert br.interior and eb.r < br.mean < ed.r

    def test_monotone_and_bounded(self, eq_pair, base_params):
        eb, ed = eq_pair
        rs = np.linspace(eb.r, ed.r, 12)[1:-1]
        means = [best_response_da(r, base_params).mean for r in rs]
        assert np.all(np.diff(means) > 0)
        assert all(eb.r < m < ed.r for m in means)

    @pytest.mark.parametrize("r", [0.52, 0.6, 0.75, 0.95])
    def test_two_routes_agree(self, base_params, r):
        a = best_response_da(r, base_params)
        b = best_response(Mechanism.DA, r, base_params)
        assert a.interior and b.interior
        assert a.mean == pytest.approx(b.mean, abs=1e-10)

    @pytest.mark.parametrize("mech", list(Mechanism))
    @pytest.mark.parametrize("r", [0.55, 0.7, 0.9])
    def test_foc(self, base_params, mech, r):
        br = best_response(mech, r, base_params)
        if br.interior:
            assert foc_residual(br, mech, r, base_params) <= 1e-8
        br = best_response_da(r, base_params)
        assert foc_residual(br, Mechanism.DA, r, base_params) <= 1e-8

    def test_corner_flag(self, caps):
        br = best_response_da(0.9, MarketParams(0.6, 50.0, caps))
        assert not br.interior and br.mean in (0.0, 1.0)

    def test_never_informed_is_zero(self, base_params):
        assert net_payoff(ConstantStrategy(0.0), Mechanism.DA, 0.7, base_params) == 0.0

    def test_random_search_cannot_beat_best_response(self, base_params):
        r = 0.7
        br = best_response_da(r, base_params)
        best = net_payoff(br.strategy, Mechanism.DA, r, base_params)
        assert best == pytest.approx(br.net_value, abs=1e-9)
        rng = np.random.default_rng(5)
        nodes = np.linspace(0, 1, 41)
        base = br.strategy(nodes)
        for _ in range(200):
            scale = rng.choice([0.3, 0.05, 0.005])
            vals = np.clip(base + scale * rng.standard_normal(nodes.size), 0, 1)
            cand = GridStrategy(nodes, np.maximum.accumulate(vals))
            assert net_payoff(cand, Mechanism.DA, r, base_params) <= best + 1e-9

    @pytest.mark.parametrize("mech", list(Mechanism))
    def test_information_has_value(self, eq_pair, base_params, mech):
        eq = eq_pair[0] if mech is Mechanism.BOSTON else eq_pair[1]
        informed = net_payoff(eq.strategy, mech, eq.r, base_params)
        uninformed = net_payoff(ConstantStrategy(eq.r), mech, eq.r, base_params)
        assert informed >= uninformed


class TestBinaryChoice:
    def test_symmetric_at_half(self):
        for mu in (0.05, 0.2):
            br = binary_choice_response(0.5, mu)
            assert br.strategy.likelihood == pytest.approx(1.0, abs=1e-12)
            assert br.strategy(0.5) == pytest.approx(0.5, abs=1e-12)

    def test_cheaper_information_sharpens(self):
        lo, hi = binary_choice_response(0.5, 0.05), binary_choice_response(0.5, 0.2)
        assert lo.strategy.derivative(0.5) > hi.strategy.derivative(0.5)
        assert mutual_information(lo.strategy) > mutual_information(hi.strategy)
        # slope at the center is 1 / (4 mu) when L = 1
        assert lo.strategy.derivative(0.5) == pytest.approx(1 / (4 * 0.05), rel=1e-10)
