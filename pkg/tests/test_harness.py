import math
from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from missingdigits import (
    ApproxTarget,
    DigitSystem,
    DomainError,
    EpsilonSelectionError,
    ExperimentPlan,
    IntegerPolynomial,
    MissingDigitMeasure,
    PlanRejectedError,
    PsiFunction,
    choose_epsilon,
    delta_threshold,
    lebesgue_baseline,
    lemma1_experiment,
    lemma2_check,
    survivor_experiment,
    tail_sum_experiment,
)
from missingdigits.harness import (
    divisor_weight_check,
    first_moment_bounds,
    parseval_bound_check,
    psi_decay_condition,
    rational_ceil,
    threshold_exponent,
)

from oracles import band_mass

CANTOR = DigitSystem(3, (0, 2))
LINEAR = IntegerPolynomial.monomial(1)
SQUARE = IntegerPolynomial.monomial(2)


def target(system=CANTOR, poly=LINEAR, d=1):
    return ApproxTarget(MissingDigitMeasure(system, d), poly)


def fixed_plan(delta, Q_grid, **kw):
    kw.setdefault("target", target())
    return ExperimentPlan(Q_grid=Q_grid, delta_schedule=f"fixed:{delta}", **kw)


# --- rational rounding ------------------------------------------------------


@given(st.floats(1e-300, 1e300))
def test_rational_ceil_is_a_tight_upper_bound(x):
    r = rational_ceil(x)
    assert F(x) <= r
    assert r <= F(x) * (1 + F(1, 2**6))
    assert (r.denominator & (r.denominator - 1)) == 0


# --- delta threshold --------------------------------------------------------


def test_threshold_degree_two_agrees_with_statement_exponent():
    t = delta_threshold(0.8, 2, 4)
    assert t.u == pytest.approx(3, abs=1e-12)
    assert t.statement_exponent == pytest.approx(3, abs=1e-12)
    assert F(1, 64) <= t.delta <= F(1, 64) * (1 + F(1, 2**6))


def test_threshold_degree_three_differs_from_statement_exponent():
    t = delta_threshold(0.9, 3, 2)
    assert t.u == pytest.approx(7, abs=1e-12)
    assert t.statement_exponent == pytest.approx(8, abs=1e-12)
    assert t.delta >= F(1, 2**7)


def test_threshold_degree_one_half():
    # (1 - n(1-v))/(1-v) at n = 1, v = 1/2 is 1, so delta_min = 1/Q
    t = delta_threshold(0.5, 1, 10)
    assert t.u == pytest.approx(1, abs=1e-15)
    assert F(1, 10) <= t.delta < F(1, 10) * (1 + F(1, 2**6))


def test_threshold_is_capped_at_one():
    assert delta_threshold(0.5, 1, 1).delta == 1


@pytest.mark.parametrize("v,n", [(0.5, 2), (0.66, 3), (1.0, 2), (1.2, 1)])
def test_threshold_rejects_v_outside_range(v, n):
    with pytest.raises(DomainError):
        delta_threshold(v, n, 8)


@given(st.integers(1, 5), st.floats(0.01, 0.99), st.integers(1, 10**6))
def test_threshold_dominates_power(n, frac, Q):
    lo = 1 - 1 / n
    v = lo + frac * (1 - lo)
    t = delta_threshold(v, n, Q)
    assert t.u == pytest.approx(threshold_exponent(v, n))
    assert float(t.delta) >= min(1.0, float(Q) ** -t.u) * (1 - 1e-15)


# --- epsilon selection ------------------------------------------------------


def test_choose_epsilon_worked_example():
    cert = choose_epsilon(0.8, 1, 0.9, PsiFunction.power(2), [16, 32, 64])
    assert cert.epsilon == 1 / 16
    assert cert.kappa_bound == pytest.approx(0.1)
    assert cert.degree_bound == pytest.approx(3)
    assert cert.psi_exponent_bound == 1
    assert cert.psi_constant == pytest.approx(16 ** (-2 + 1 + 1 / 16))  # max over the grid
    assert len(cert.lines()) == 4


def test_choose_epsilon_lower_boundary_fails_condition_two():
    with pytest.raises(EpsilonSelectionError) as e:
        choose_epsilon(0.5, 1, 0.9, PsiFunction.power(2), [16])
    assert e.value.condition == 2


def test_choose_epsilon_kappa_below_v_fails_condition_one():
    with pytest.raises(EpsilonSelectionError) as e:
        choose_epsilon(0.8, 1, 0.8, PsiFunction.power(2), [16])
    assert e.value.condition == 1


def test_choose_epsilon_slow_psi_fails_condition_three():
    with pytest.raises(EpsilonSelectionError) as e:
        choose_epsilon(0.8, 1, 0.9, PsiFunction.power(1), [16, 32])
    assert e.value.condition == 3
    with pytest.raises(EpsilonSelectionError):
        choose_epsilon(0.8, 1, 0.9, PsiFunction("log_power", a=2), [16, 32])


def test_choose_epsilon_table_psi():
    psi = PsiFunction("table", table=[F(1, q * q) for q in range(1, 65)], declared_convergent=True)
    assert choose_epsilon(0.8, 1, 0.9, psi, [8, 16, 32, 64]).epsilon == 1 / 16


def test_psi_decay_condition_power():
    ok, C, ceiling = psi_decay_condition(PsiFunction.power(F(3, 2)), 0.5, [1, 10, 100])
    assert ok and ceiling == 0.5 and C == pytest.approx(1.0)
    assert not psi_decay_condition(PsiFunction.power(F(3, 2)), 0.75, [1, 10])[0]
    assert psi_decay_condition(PsiFunction.zero(), 5.0, [1, 2])[0]


# --- psi --------------------------------------------------------------------


def test_psi_kinds():
    assert PsiFunction.power(2, 3)(2) == 0.75
    assert PsiFunction("log_power", c=1, a=2)(3) == pytest.approx(1 / (3 * math.log(4) ** 2))
    assert PsiFunction.power(2).rational(5) == F(1, 25)
    assert PsiFunction.power(F(3, 2)).rational(4) >= F(1, 8)


def test_psi_convergence_flags():
    assert PsiFunction.power(F(3, 2)).convergent
    assert not PsiFunction.power(1, F(1, 2)).convergent
    assert PsiFunction("log_power", a=2).convergent
    assert not PsiFunction("log_power", a=1).convergent
    assert PsiFunction.zero().convergent
    with pytest.raises(DomainError):
        PsiFunction("table", table=[F(1, 2)]).convergent


def test_psi_validation():
    with pytest.raises(DomainError):
        PsiFunction("exp")
    with pytest.raises(DomainError):
        PsiFunction.power(1, -1)
    with pytest.raises(DomainError):
        PsiFunction("table", table=[])
    with pytest.raises(DomainError):
        PsiFunction.power(2)(0)
    with pytest.raises(DomainError):
        PsiFunction("table", table=[F(1, 2)], declared_convergent=True)(2)
    with pytest.raises(DomainError):
        PsiFunction("table", table=[F(1, 4), F(1, 2)], declared_convergent=True).validate_monotone([1, 2])
    PsiFunction.power(2).validate_monotone(range(1, 100))


# --- plans ------------------------------------------------------------------


def test_plan_validation():
    with pytest.raises(DomainError):
        fixed_plan(F(1, 10), [4, 2])
    with pytest.raises(DomainError):
        fixed_plan(F(1, 10), [0, 2])
    with pytest.raises(DomainError):
        ExperimentPlan(target(), [4], "threshold")
    with pytest.raises(DomainError):
        ExperimentPlan(target(), [4], "psi")
    with pytest.raises(DomainError):
        ExperimentPlan(target(), [4], "sometimes")
    with pytest.raises(DomainError):
        fixed_plan(F(1, 10), [4], tol=0)


def test_theorem_range_is_stricter_than_lemma_range():
    plan = ExperimentPlan(target(poly=SQUARE), [4], "threshold", v=0.6, kappa_hat=0.9, epsilon=0.01)
    plan.check_lemma_range()
    with pytest.raises(PlanRejectedError):
        plan.check_theorem_range()
    good = ExperimentPlan(target(poly=SQUARE), [4], "threshold", v=0.8, kappa_hat=0.9, epsilon=1 / 16)
    good.check_theorem_range()
    with pytest.raises(PlanRejectedError):
        ExperimentPlan(target(poly=SQUARE), [4], "threshold", v=0.8, kappa_hat=0.9, epsilon=0.2).check_theorem_range()


# --- block sums -------------------------------------------------------------


def test_lemma1_single_block_oracle():
    # S_1 = m(A(1, 1/10)) + m(A(2, 1/10)) = 2/5 + 1/4 = 13/20
    exact = band_mass(3, (0, 2), 1, F(1, 10)) + band_mass(3, (0, 2), 2, F(1, 10))
    assert exact == F(13, 20)
    rep = lemma1_experiment(fixed_plan(F(1, 10), [1]))
    assert rep.rows[0].sum == pytest.approx(0.65, abs=1e-10)
    assert rep.rows[0].ratio == pytest.approx(6.5, abs=1e-9)
    assert rep.C == rep.rows[0].ratio and math.isnan(rep.trend_slope)


def test_lemma1_full_width_schedule():
    rep = lemma1_experiment(fixed_plan(F(1, 2), [1, 2, 4, 8, 16]))
    for r in rep.rows:
        assert r.sum == pytest.approx(r.Q + 1, abs=1e-9)
        assert r.ratio == pytest.approx(2 * (r.Q + 1) / r.Q, abs=1e-9)
    assert rep.bounded and rep.argmax == 0 and rep.max_in_first_half


def test_lemma1_empty_grid():
    rep = lemma1_experiment(fixed_plan(F(1, 10), []))
    assert rep.rows == [] and rep.argmax is None and rep.C == 0


def test_lemma1_threshold_violation_is_rejected():
    plan = ExperimentPlan(target(poly=SQUARE), [16, 32], "fixed:1/1000000000", v=0.8)
    with pytest.raises(PlanRejectedError, match="16"):
        lemma1_experiment(plan)
    # reporting a deliberately invalid schedule is allowed when asked for
    rep = lemma1_experiment(plan, check_threshold=False)
    assert len(rep.rows) == 2


def test_lemma1_threshold_schedule_runs():
    plan = ExperimentPlan(target(DigitSystem.one_missing(5), SQUARE), [4, 8, 16, 32], "threshold", v=0.8)
    rep = lemma1_experiment(plan)
    for r in rep.rows:
        assert r.delta == delta_threshold(0.8, 2, r.Q).delta
        assert math.isfinite(r.ratio) and r.ratio >= 0


def test_lemma1_thread_invariance():
    plan = ExperimentPlan(target(CANTOR, SQUARE), [8, 16, 32], "fixed:1/50")
    a = lemma1_experiment(plan)
    b = lemma1_experiment(plan, threads=4)
    assert [(r.sum, r.ratio) for r in a.rows] == [(r.sum, r.ratio) for r in b.rows]
    assert a.trend_slope == b.trend_slope


def test_lemma2_product_rows():
    tol = 1e-10
    rep = lemma2_check(fixed_plan(F(1, 10), [1], target=target(d=2), tol=tol))
    q1 = rep.rows[0]
    assert q1.q == 1 and q1.m_B == pytest.approx(4 / 25, abs=tol) and q1.m_A == pytest.approx(0.4, abs=tol)
    assert not rep.violations


def test_lemma2_dimension_one_equals_lemma1():
    plan = fixed_plan(F(1, 7), [2, 4, 8])
    a = lemma1_experiment(plan)
    b = lemma2_check(plan)
    assert [r.sum for r in b.report.rows] == pytest.approx([r.sum for r in a.rows], abs=1e-10)
    assert b.a_sums == pytest.approx([r.sum for r in a.rows], abs=1e-10)


def test_lemma2_zero_delta():
    rep = lemma2_check(fixed_plan(0, [1, 2, 4], target=target(d=3)))
    assert all(r.sum == 0 and r.ratio == 0 for r in rep.report.rows)
    assert not rep.violations


@pytest.mark.parametrize("d", [2, 3])
def test_lemma2_inequality_everywhere(d):
    plan = ExperimentPlan(target(DigitSystem.one_missing(5), SQUARE, d), [4, 8, 16], "threshold", v=0.8)
    rep = lemma2_check(plan)
    assert len(rep.rows) == sum(Q + 1 for Q in (4, 8, 16))
    assert not rep.violations
    for r in rep.rows:
        assert r.m_B == pytest.approx(r.m_A**d, abs=1e-12)


# --- tails ------------------------------------------------------------------


def psi_plan(psi, Q0, eps, **kw):
    kw.setdefault("target", target())
    return ExperimentPlan(Q_grid=[Q0], delta_schedule="psi", psi=psi, epsilon=eps, **kw)


def test_tail_zero_psi():
    rep = tail_sum_experiment(psi_plan(PsiFunction.zero(), 4, 0.25), PsiFunction.zero(), 4)
    assert all(r.block_sum == 0 and r.cumulative_tail == 0 for r in rep.rows)


def test_tail_first_block_oracle():
    psi = PsiFunction.power(2)
    rep = tail_sum_experiment(psi_plan(psi, 4, 0.25), psi, 4)
    first = rep.rows[0]
    assert first.Q == 4 and first.delta == F(1, 16)
    exact = sum(band_mass(3, (0, 2), q, F(1, 16)) for q in range(4, 9))
    assert first.block_sum == pytest.approx(float(exact), abs=1e-10)
    assert rep.strictly_decreasing
    assert [r.Q for r in rep.rows] == [4, 8, 16, 32]


def test_tail_lebesgue_stub_decays_like_one_over_Q():
    psi = PsiFunction.power(2)
    rep = tail_sum_experiment(psi_plan(psi, 64, 0.5), psi, 6, block_measure=lambda q, d: 2 * float(d))
    for r in rep.rows:
        assert r.block_sum == pytest.approx(2 * (r.Q + 1) / r.Q**2, rel=1e-12)
    assert rep.decay_exponent == pytest.approx(1, abs=0.02)
    assert rep.decays and rep.strictly_decreasing
    assert rep.geometric_constant == pytest.approx(1 / (1 - 2**-0.5))


def test_tail_rejects_divergent_psi_and_missing_epsilon():
    psi = PsiFunction.power(1)
    with pytest.raises(PlanRejectedError):
        tail_sum_experiment(psi_plan(psi, 4, 0.25), psi, 3)
    good = PsiFunction.power(2)
    with pytest.raises(PlanRejectedError):
        tail_sum_experiment(ExperimentPlan(target(), [4], "psi", psi=good), good, 3)


# --- survivors --------------------------------------------------------------


def survivor_plan(system=CANTOR, poly=SQUARE, d=1, count=2000, depth=40, seed=3):
    return ExperimentPlan(target(system, poly, d), [], "psi", psi=PsiFunction.zero(),
                          sample_count=count, sample_depth=depth, seed=seed)


def test_survivors_zero_psi():
    rows = survivor_experiment(survivor_plan(), PsiFunction.zero(), [1, 10, 100], 1000)
    assert all(r.survivors == 0 and r.indeterminate == 0 and r.total == 2000 for r in rows)


def test_survivors_constant_half():
    psi = PsiFunction.power(0, F(1, 2))
    rows = survivor_experiment(survivor_plan(poly=LINEAR), psi, [1, 10, 100], 200)
    for r in rows:
        assert r.fraction >= 0.99


def test_survivors_nonincreasing_and_below_first_moment():
    psi = PsiFunction.power(F(3, 2))
    plan = survivor_plan(count=4000)
    grid = [1, 10, 100, 1000]
    rows = survivor_experiment(plan, psi, grid, 2000)
    fr = [r.fraction for r in rows]
    assert all(b <= a for a, b in zip(fr, fr[1:]))
    bounds = first_moment_bounds(plan.target, psi, grid, 2000)
    for r, fm in zip(rows, bounds):
        assert r.fraction <= fm + 4 / math.sqrt(r.total)


def test_survivors_thread_invariance():
    psi = PsiFunction.power(F(3, 2))
    plan = survivor_plan(count=9000)
    a = survivor_experiment(plan, psi, [1, 50], 300)
    b = survivor_experiment(plan, psi, [1, 50], 300, threads=3)
    assert a == b


def test_survivors_depth_too_small():
    with pytest.raises(DomainError, match="need at least"):
        survivor_experiment(survivor_plan(depth=8), PsiFunction.power(2), [1, 10], 1000)


def test_survivors_bad_grid():
    with pytest.raises(DomainError):
        survivor_experiment(survivor_plan(), PsiFunction.power(2), [], 100)
    with pytest.raises(DomainError):
        survivor_experiment(survivor_plan(), PsiFunction.power(2), [200], 100)


# --- Lebesgue baseline ------------------------------------------------------


def test_baseline_inverse_square_tail():
    rep = lebesgue_baseline(PsiFunction.power(2), SQUARE, [10], 10**5)
    row = rep.rows[0]
    assert 2 / 10.5 < row.infinite_tail < 2 / 9.5
    assert row.tail_sum == pytest.approx(row.closed_form, abs=1e-12)
    assert rep.convergent


def test_baseline_harmonic_is_divergent():
    rep = lebesgue_baseline(PsiFunction.power(1, F(1, 4)), LINEAR, [10, 100], 10**4)
    assert not rep.convergent
    assert rep.rows[0].infinite_tail == math.inf
    assert rep.rows[0].closed_form == pytest.approx(0.5 * (math.log(10**4) - math.log(10)), abs=0.05)


def test_baseline_half_is_full_measure():
    rep = lebesgue_baseline(PsiFunction.power(0, F(1, 2)), LINEAR, [1], 20)
    assert all(m == 1.0 for _, m in rep.per_q)


@given(st.integers(2, 200), st.integers(2, 4), st.sampled_from([1, 2, 3]))
def test_baseline_matches_partial_sums(Q0, a, n):
    # Q0 >= 2 keeps psi <= 1/2, where the per-q measure is 2 psi
    Q_max = Q0 + 300
    rep = lebesgue_baseline(PsiFunction.power(a), IntegerPolynomial.monomial(n), [Q0], Q_max)
    exact = 2 * sum(F(1, q**a) for q in range(Q0, Q_max + 1))
    assert rep.rows[0].tail_sum == pytest.approx(float(exact), rel=1e-13)
    assert rep.rows[0].closed_form == pytest.approx(float(exact), rel=1e-10)


# --- proof-step checks ------------------------------------------------------


def test_parseval_ratio_is_stable_on_cantor():
    cells = [(q, F(1, 4 * q)) for q in (2, 4, 8, 16, 32, 64)]
    rep = parseval_bound_check(target(), cells)
    assert all(r.ratio > 0 and math.isfinite(r.ratio) for r in rep.rows)
    assert rep.stable


def test_divisor_weight_bound():
    chk = divisor_weight_check(target(poly=SQUARE), 8, F(1, 4))
    assert chk.holds and chk.multiplicity_sum > 0
