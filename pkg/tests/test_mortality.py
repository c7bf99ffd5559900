import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from riskalloc.errors import ConvergenceError, DomainError, ShapeError
from riskalloc.exp_pricing import (
    RiskAversionSchedule,
    indifference_price_tree,
    log_l_recursion,
    selling_position_allocation,
)
from riskalloc.market import RateCurve
from riskalloc.mortality import (
    ClaimProfile,
    MortalityCurve,
    death_tree_log_l,
    h_recursion,
    indifference_premium,
    limit_premiums,
    premium_allocation,
    premium_bounds,
    solve_scale,
    term_claim,
    tp1,
    tp2,
)
from riskalloc.oracle import UtilitySpec, solve_problem_p
from riskalloc.tree import death_time_tree

E = np.e


@st.composite
def contracts(draw, max_term=6, interior=True):
    T = draw(st.integers(1, max_term))
    lo = 0.01 if interior else 0.0
    hi = 0.99 if interior else 1.0
    q = draw(st.lists(st.floats(lo, hi), min_size=T, max_size=T))
    z = draw(st.lists(st.floats(-2, 2), min_size=T + 1, max_size=T + 1))
    alpha = draw(st.lists(st.floats(0.05, 10), min_size=T, max_size=T))
    return RiskAversionSchedule(alpha), MortalityCurve(q), ClaimProfile(z)


class TestCurves:
    def test_survival(self):
        m = MortalityCurve([0.5, 0.5])
        np.testing.assert_allclose(m.death_probabilities(), [0.5, 0.25])
        assert m.survival_probability() == 0.25

    def test_rejects_out_of_range(self):
        with pytest.raises(DomainError):
            MortalityCurve([0.2, -0.1])

    def test_interior_flag(self):
        assert MortalityCurve([0.2, 0.3]).strictly_interior
        assert not MortalityCurve([0.2, 1.0]).strictly_interior

    def test_csv(self, tmp_path):
        path = tmp_path / "q.csv"
        path.write_text("t,q\n1,0.1\n2,0.2\n")
        np.testing.assert_allclose(MortalityCurve.from_csv(path).q, [0.1, 0.2])

    def test_claim_term(self):
        assert ClaimProfile([1, 2, 3]).term == 2


class TestTermClaim:
    def test_zero_rate(self):
        np.testing.assert_allclose(term_claim(RateCurve.flat(0.0, 3), 1.0).z, [1, 1, 1, 0])

    def test_discounted_unit_benefit(self):
        z = term_claim(RateCurve.flat(0.02, 4), 1.0).z
        np.testing.assert_allclose(z[:4], 1.02 ** -np.arange(1, 5), rtol=1e-15)
        assert z[4] == 0.0

    def test_benefit_vector(self):
        np.testing.assert_allclose(term_claim(RateCurve.flat(0.02, 2), [100.0, 0.0]).z, [100 / 1.02, 0, 0])

    def test_survival_value(self):
        assert term_claim(RateCurve.flat(0.0, 2), 1.0, survival_value=0.5).z[-1] == 0.5


class TestHRecursion:
    def test_zero_claim(self, two_period):
        schedule, mortality, _, _ = two_period
        np.testing.assert_array_equal(h_recursion(schedule, mortality, ClaimProfile([0, 0, 0])), 0.0)

    def test_single_period(self):
        log_h = h_recursion(RiskAversionSchedule([1.0]), MortalityCurve([0.5]), ClaimProfile([1.0, 0.0]))
        np.testing.assert_allclose(np.exp(log_h), [(E + 1) / 2, 1.0], rtol=1e-15)

    def test_two_period_by_hand(self, two_period):
        schedule, mortality, claim, _ = two_period
        h = np.exp(h_recursion(schedule, mortality, claim))
        h1 = 0.5 * E + 0.5
        h0 = (0.5 * np.exp(0.5) + 0.5 * h1**0.5) ** 2
        np.testing.assert_allclose(h, [h0, h1, 1.0], rtol=1e-14)
        assert h[1] == pytest.approx(1.85914, abs=1e-5)
        assert h[0] == pytest.approx(2.26837, abs=1e-5)

    def test_length_mismatch(self, two_period):
        schedule, mortality, _, _ = two_period
        with pytest.raises(ShapeError):
            h_recursion(schedule, mortality, ClaimProfile([1.0, 0.0]))

    def test_huge_aversion_is_finite(self):
        log_h = h_recursion(RiskAversionSchedule.constant(1e6, 3), MortalityCurve([0.1] * 3), ClaimProfile([1, 0.5, 2, 0]))
        assert np.all(np.isfinite(log_h))
        assert log_h[0] == pytest.approx(2.0, abs=1e-5)


class TestIndifferencePremium:
    @given(st.floats(-5, 5), st.integers(1, 5))
    def test_constant_claim(self, c, T):
        schedule = RiskAversionSchedule.constant(1.3, T)
        rep = indifference_premium(schedule, MortalityCurve([0.3] * T), ClaimProfile([c] * (T + 1)))
        assert rep.premium == pytest.approx(c, abs=1e-12)

    def test_two_period(self, two_period):
        schedule, mortality, claim, _ = two_period
        rep = indifference_premium(schedule, mortality, claim)
        assert rep.premium == pytest.approx(0.81907, abs=1e-5)
        assert rep.bounds == (0.75, 1.0)

    def test_two_period_by_numerical_optimisation(self, two_period):
        """Price through Def. of indifference using the brute-force optimiser only."""
        schedule, mortality, claim, curve = two_period
        tree = death_time_tree(mortality)
        utilities = UtilitySpec.exponential(schedule)
        base = solve_problem_p(tree, curve, utilities, np.zeros(tree.n_leaves)).objective

        def gap(x):
            return solve_problem_p(tree, curve, utilities, x - claim.z).objective - base

        root = brentq(gap, 0.0, 2.0, xtol=1e-13)
        assert root == pytest.approx(indifference_premium(schedule, mortality, claim).premium, abs=1e-8)

    def test_single_period(self):
        rep = indifference_premium(RiskAversionSchedule([1.0]), MortalityCurve([0.5]), ClaimProfile([1.0, 0.0]))
        assert rep.premium == pytest.approx(np.log((E + 1) / 2), abs=1e-14)

    @given(contracts(interior=False))
    @settings(max_examples=60)
    def test_matches_general_tree_price(self, contract):
        schedule, mortality, claim = contract
        tree = death_time_tree(mortality)
        H_tree = indifference_price_tree(tree, schedule, claim.z)
        assert indifference_premium(schedule, mortality, claim).premium == pytest.approx(H_tree, abs=1e-12)

    @given(contracts(interior=False))
    @settings(max_examples=60)
    def test_within_bounds(self, contract):
        rep = indifference_premium(*contract)
        lower, upper = rep.bounds
        assert lower - 1e-12 <= rep.premium <= upper + 1e-12


class TestClosedFormLogL:
    @given(contracts(interior=False))
    @settings(max_examples=60)
    def test_matches_general_recursion(self, contract):
        schedule, mortality, claim = contract
        closed = death_tree_log_l(schedule, mortality, claim)
        general = log_l_recursion(closed.tree, schedule, -claim.z)
        for t in range(1, mortality.term + 1):
            p = closed.tree.node_probabilities(t) > 0
            np.testing.assert_allclose(closed[t][p], general[t - 1][p], atol=1e-10, rtol=1e-10)


class TestPremiumAllocation:
    def test_zero(self, two_period):
        schedule, mortality, _, curve = two_period
        alloc = premium_allocation(schedule, mortality, ClaimProfile([0, 0, 0]), curve)
        for v in alloc.values:
            np.testing.assert_array_equal(v, 0.0)

    def test_deterministic_spread(self, two_period):
        schedule, mortality, _, curve = two_period
        alloc = premium_allocation(schedule, mortality, ClaimProfile([0, 0, 0]), curve, w=2.0)
        np.testing.assert_allclose(alloc[1], 0.5 * 2.0)
        np.testing.assert_allclose(alloc[2], 0.5 * 2.0)

    def test_matches_selling_position(self, two_period):
        schedule, mortality, claim, curve = two_period
        H = indifference_premium(schedule, mortality, claim).premium
        a = premium_allocation(schedule, mortality, claim, curve, w=0.3)
        b = selling_position_allocation(a.tree, curve, schedule, 0.3 + H, claim.z)
        assert a.max_abs_diff(b) < 1e-10

    @given(contracts(max_term=5), st.floats(-2, 2), st.floats(0, 0.1))
    @settings(max_examples=60)
    def test_matches_selling_position_random(self, contract, w, r):
        schedule, mortality, claim = contract
        curve = RateCurve.flat(r, mortality.term)
        H = indifference_premium(schedule, mortality, claim).premium
        a = premium_allocation(schedule, mortality, claim, curve, w)
        b = selling_position_allocation(a.tree, curve, schedule, w + H, claim.z)
        assert a.max_abs_diff(b) < 1e-9

    def test_paths_sum_to_position(self, two_period):
        schedule, mortality, claim, curve = two_period
        H = indifference_premium(schedule, mortality, claim).premium
        a = premium_allocation(schedule, mortality, claim, curve)
        np.testing.assert_allclose(a.discounted(curve).paths().sum(axis=1), H - claim.z, atol=1e-14)

    def test_short_rate_curve(self, two_period):
        schedule, mortality, claim, _ = two_period
        with pytest.raises(ShapeError):
            premium_allocation(schedule, mortality, claim, RateCurve([0.0]))


class TestTraditionalPremiums:
    def test_tp1_immortal(self):
        assert tp1(RateCurve.flat(0.02, 3), MortalityCurve([0, 0, 0])) == 0.0

    def test_tp1_single(self):
        assert tp1(RateCurve([0.02]), MortalityCurve([0.01])) == pytest.approx(0.01 / 1.02, rel=1e-14)

    def test_tp1_two_period(self):
        assert tp1(RateCurve([0, 0]), MortalityCurve([0.5, 0.5])) == pytest.approx(0.75)

    def test_tp2_immortal(self):
        assert tp2(RateCurve.flat(0.02, 2), MortalityCurve([0, 0])) == 0.0

    def test_tp2_single(self):
        expected = (0.01 + 0.01 * np.sqrt(0.0099)) / 1.02
        assert tp2(RateCurve([0.02]), MortalityCurve([0.01])) == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(0.0107794, abs=1e-7)

    def test_tp2_certain_death(self):
        assert tp2(RateCurve([0.0]), MortalityCurve([1.0])) == 1.0

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=10))
    def test_tp2_dominates_tp1(self, q):
        m = MortalityCurve(q)
        curve = RateCurve.flat(0.02, m.term)
        assert tp2(curve, m) >= tp1(curve, m)

    def test_tp1_equals_expected_claim(self):
        m = MortalityCurve([0.1, 0.2, 0.3])
        curve = RateCurve.flat(0.02, 3)
        assert tp1(curve, m) == pytest.approx(premium_bounds(m, term_claim(curve, 1.0))[0], rel=1e-14)


class TestBoundsAndLimits:
    def test_constant(self):
        assert premium_bounds(MortalityCurve([0.3, 0.4]), ClaimProfile([2, 2, 2])) == (2.0, 2.0)

    def test_two_period(self, two_period):
        _, mortality, claim, _ = two_period
        assert premium_bounds(mortality, claim) == (0.75, 1.0)
        assert limit_premiums(two_period[0], mortality, claim) == pytest.approx((0.75, 1.0))

    def test_immortal(self):
        assert premium_bounds(MortalityCurve([0, 0]), ClaimProfile([5, 5, 0])) == (0.0, 5.0)

    def test_limits_zero_claim(self, two_period):
        schedule, mortality, _, _ = two_period
        assert limit_premiums(schedule, mortality, ClaimProfile([0, 0, 0])) == (0.0, 0.0)

    def test_limits_need_interior(self):
        with pytest.raises(DomainError):
            limit_premiums(RiskAversionSchedule([1.0]), MortalityCurve([1.0]), ClaimProfile([1, 0]))

    @given(contracts())
    def test_zero_limit_is_expected_claim(self, contract):
        lower, _ = premium_bounds(contract[1], contract[2])
        assert limit_premiums(*contract)[0] == pytest.approx(lower, abs=1e-14)

    @given(contracts(max_term=4))
    @settings(max_examples=40)
    def test_aversion_limits_are_approached(self, contract):
        schedule, mortality, claim = contract
        zero, inf = limit_premiums(schedule, mortality, claim)
        small = indifference_premium(RiskAversionSchedule.constant(1e-7, mortality.term), mortality, claim).premium
        assert small == pytest.approx(zero, abs=1e-5)
        # the worst payout dominates once the aversion is large
        big = indifference_premium(RiskAversionSchedule.constant(1e7, mortality.term), mortality, claim).premium
        p_min = min(np.min(mortality.q), np.min(mortality.p))
        assert inf - big <= mortality.term * 2 * (-np.log(p_min ** mortality.term)) / 1e7 + 1e-12


class TestSolveScale:
    def test_fixed_point(self, two_period):
        schedule, mortality, claim, _ = two_period
        H = indifference_premium(schedule, mortality, claim).premium
        assert solve_scale(schedule, mortality, claim, H) == 1.0

    def test_interior_target(self, two_period):
        schedule, mortality, claim, _ = two_period
        p = solve_scale(schedule, mortality, claim, 0.9)
        assert indifference_premium(schedule.scaled(p), mortality, claim).premium == pytest.approx(0.9, abs=1e-10)
        assert p > 1.0

    def test_lower_target_shrinks_scale(self, two_period):
        schedule, mortality, claim, _ = two_period
        assert solve_scale(schedule, mortality, claim, 0.78) < 1.0

    @pytest.mark.parametrize("target", [0.75, 1.0, 0.5, 1.5])
    def test_target_outside_open_interval(self, two_period, target):
        schedule, mortality, claim, _ = two_period
        with pytest.raises(DomainError):
            solve_scale(schedule, mortality, claim, target)

    def test_unreachable_target(self, two_period):
        schedule, mortality, claim, _ = two_period
        with pytest.raises(ConvergenceError):
            solve_scale(schedule, mortality, claim, 1.0 - 1e-300 if False else np.nextafter(1.0, 0.0))
