import csv
import math

import numpy as np
import pytest
import sympy
from hypothesis import given, strategies as st

from missingdigits import (
    DigitSystem,
    DomainError,
    KappaEstimate,
    LtSumSeries,
    MissingDigitMeasure,
    divisor_count,
    estimate_kappa,
    fourier_coefficient,
    fourier_coefficients,
    geometric_grid,
    large_base_search,
    lt_sum,
    sample_points,
)
from missingdigits.fourier import truncation_depth, write_coefficients_csv, write_series_csv

from oracles import cantor_abs_fourier_one, fourier_product

CANTOR = DigitSystem(3, (0, 2))


@st.composite
def systems(draw, max_base=12):
    b = draw(st.integers(2, max_base))
    digits = draw(st.sets(st.integers(0, b - 1), min_size=1, max_size=b))
    return DigitSystem(b, tuple(digits))


# --- coefficients -----------------------------------------------------------


@given(systems())
def test_zero_frequency_is_exactly_one(system):
    c = fourier_coefficient(system, 0)
    assert c.value == 1 and c.truncation_error == 0


def test_cantor_first_coefficient():
    c = fourier_coefficient(CANTOR, 1, 1e-8)
    assert abs(c.value) == pytest.approx(cantor_abs_fourier_one(), abs=1e-8)
    assert abs(c.value) == pytest.approx(0.3714, abs=5e-5)
    assert c.truncation_error <= 1e-8


def test_cantor_leading_factors():
    # |phi(3^-i)| = |cos(2 pi / 3^i)|
    factors = [abs(math.cos(2 * math.pi / 3**i)) for i in (1, 2, 3)]
    assert factors == pytest.approx([0.5, 0.766044, 0.973045], abs=1e-6)


def test_frequency_three_equals_frequency_one():
    a = fourier_coefficient(CANTOR, 1)
    b = fourier_coefficient(CANTOR, 3)
    assert abs(a.value - b.value) <= a.truncation_error + b.truncation_error + 1e-15
    assert b.value == pytest.approx(fourier_product(3, (0, 2), 3), abs=1e-12)


@given(systems(), st.integers(-10**6, 10**6))
def test_matches_direct_product(system, xi):
    c = fourier_coefficient(system, xi, 1e-11)
    ref = fourier_product(system.base, system.digits, xi, terms=90)
    assert abs(c.value - ref) <= c.truncation_error + 1e-9


@given(systems(), st.integers(-10**7, 10**7))
def test_refinement_invariance(system, xi):
    tol = 1e-10
    a = fourier_coefficient(system, xi, tol)
    b = fourier_coefficient(system, xi * system.base, tol)
    assert abs(a.value - b.value) <= 2 * tol


@given(systems(), st.integers(1, 10**7))
def test_conjugate_symmetry(system, xi):
    tol = 1e-10
    a = fourier_coefficient(system, xi, tol)
    b = fourier_coefficient(system, -xi, tol)
    assert abs(a.value - b.value.conjugate()) <= 2 * tol


@given(systems(), st.integers(1, 10**9))
def test_modulus_bounded_by_one(system, xi):
    c = fourier_coefficient(system, xi, 1e-10)
    assert abs(c.value) <= 1 + c.truncation_error + 1e-12


def test_arithmetic_progression_closed_form_matches_direct_sum():
    # a long progression goes through the geometric-sum formula
    system = DigitSystem.one_missing(23)
    xis = np.arange(-500, 501, 7)
    vals, errs = fourier_coefficients(system, xis, 1e-12)
    for x, v, e in zip(xis.tolist(), vals, errs):
        assert abs(v - fourier_product(23, system.digits, x, terms=40)) <= e + 1e-11


def test_vector_and_scalar_agree_and_threads_do_not_matter():
    xis = np.arange(0, 40000)
    v1, e1 = fourier_coefficients(CANTOR, xis, 1e-10)
    v4, e4 = fourier_coefficients(CANTOR, xis, 1e-10, threads=4, block=1000)
    assert np.array_equal(v1, v4) and np.array_equal(e1, e4)
    assert abs(v1[12345] - fourier_coefficient(CANTOR, 12345, 1e-10).value) <= 2e-10


def test_monte_carlo_cross_check():
    N, depth = 200_000, 30
    batch = sample_points(MissingDigitMeasure(CANTOR), N, depth, seed=7)
    x = batch.coordinates[:, 0]
    for xi in (1, 2, 5, 17, 40):
        emp = np.exp(-2j * np.pi * xi * x).mean()
        c = fourier_coefficient(CANTOR, xi)
        assert abs(emp - c.value) <= 2 * math.pi * xi * 3.0**-depth + 4 / math.sqrt(N)


def test_truncation_depth_meets_tolerance():
    for tol in (1e-3, 1e-8, 1e-14):
        N = truncation_depth(CANTOR, 10**6, tol)
        assert math.expm1(2 * math.pi * 10**6 * 2 / (2 * 3.0**N)) <= tol
        assert math.expm1(2 * math.pi * 10**6 * 2 / (2 * 3.0 ** (N - 1))) > tol


def test_truncation_depth_with_huge_frequency_does_not_overflow():
    assert truncation_depth(CANTOR, 2**62, 1e-12) > 0


def test_nonpositive_tolerance_rejected():
    with pytest.raises(DomainError):
        fourier_coefficient(CANTOR, 3, 0)


# --- l^t sums and kappa -----------------------------------------------------


def test_lt_sum_at_zero():
    assert lt_sum(CANTOR, 1, [0]).sums == (1.0,)


def test_lt_sum_matches_term_by_term_oracle():
    s = lt_sum(CANTOR, 1, [10], 1e-12)
    ref = math.fsum(abs(fourier_product(3, (0, 2), xi)) for xi in range(11))
    assert s.sums[0] == pytest.approx(ref, abs=1e-11)


@given(systems(max_base=8), st.floats(0.25, 3))
def test_lt_sum_is_nondecreasing_and_bounded(system, t):
    grid = [0, 3, 10, 50, 200]
    s = lt_sum(system, t, grid, 1e-10)
    assert s.sums[0] == 1.0
    assert all(b >= a for a, b in zip(s.sums, s.sums[1:]))
    if t >= 1:
        assert all(S <= Q + 1 + 1e-9 for Q, S in zip(grid, s.sums))


def test_lt_sum_rejects_unsorted_cutoffs():
    with pytest.raises(DomainError):
        lt_sum(CANTOR, 1, [10, 5])
    with pytest.raises(DomainError):
        lt_sum(CANTOR, 0, [10])


@pytest.mark.parametrize("s", [0.0, 0.25, 0.5, 0.9])
def test_estimate_kappa_recovers_power_laws(s):
    grid = [10, 100, 1000, 10_000, 100_000]
    sums = [Q ** (1 - s) for Q in grid]
    est = estimate_kappa(LtSumSeries(1.0, tuple(grid), tuple(sums)))
    assert est.s_hat == pytest.approx(s, abs=1e-12)
    assert est.slope_stderr < 1e-12


def test_estimate_kappa_constant_series():
    est = estimate_kappa(LtSumSeries(1.0, (10, 100, 1000, 10_000), (3.0,) * 4))
    assert est.s_hat == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize(
    "grid,sums",
    [
        ((10, 100), (1.0, 2.0)),  # too few points
        ((10, 20, 40, 80), (1.0, 2.0, 3.0, 4.0)),  # under two decades
        ((10, 100, 1000, 10_000), (1.0, 0.0, 3.0, 4.0)),  # non-positive sum
    ],
)
def test_estimate_kappa_degenerate_grids(grid, sums):
    with pytest.raises(DomainError):
        estimate_kappa(LtSumSeries(1.0, grid, sums))


def test_cantor_kappa_is_grid_shift_stable():
    a = estimate_kappa(lt_sum(CANTOR, 1, geometric_grid(2**6, 2, 13)))
    b = estimate_kappa(lt_sum(CANTOR, 1, geometric_grid(2**7, 2, 13)))
    assert abs(a.s_hat - b.s_hat) <= 0.05
    assert 0 <= a.s_hat <= 1 + a.slope_stderr


def test_geometric_grid():
    assert geometric_grid(16, 2, 4) == [16, 32, 64, 128]
    with pytest.raises(DomainError):
        geometric_grid(0, 2, 3)


# --- divisor function -------------------------------------------------------


@pytest.mark.parametrize("xi,tau", [(1, 1), (7, 2), (12, 6), (36, 9), (720720, 240)])
def test_divisor_count_values(xi, tau):
    assert divisor_count(xi) == tau


@given(st.integers(1, 10**6), st.integers(1, 10**6))
def test_divisor_count_is_multiplicative(a, b):
    if math.gcd(a, b) == 1:
        assert divisor_count(a * b) == divisor_count(a) * divisor_count(b)


@given(st.integers(1, 10**9))
def test_divisor_count_matches_sympy(xi):
    assert divisor_count(xi) == sympy.divisor_count(xi)


def test_divisor_count_domain():
    with pytest.raises(DomainError):
        divisor_count(0)


# --- base search ------------------------------------------------------------


def _fixed(s, se=0.0):
    return lambda system: KappaEstimate(1.0, s, se, ())


def test_base_search_perfect_estimator_passes_everything():
    for n in (1, 2, 5):
        verdicts = large_base_search(n, range(3, 9), [], estimator=_fixed(1.0))
        assert all(v.passed for v in verdicts)


def test_base_search_impossible_margin():
    verdicts = large_base_search(1, range(3, 9), [], margin=1.5, estimator=_fixed(1.0))
    assert not any(v.passed for v in verdicts)


def test_base_search_empty_range():
    with pytest.raises(DomainError):
        large_base_search(1, [], [], estimator=_fixed(1.0))


def test_base_search_uses_one_missing_digit_systems():
    seen = []

    def est(system):
        seen.append(system)
        return KappaEstimate(1.0, 0.7, 0.0, ())

    large_base_search(2, [4, 6], [], estimator=est)
    assert seen == [DigitSystem.one_missing(4), DigitSystem.one_missing(6)]
    large_base_search(2, [5], [], estimator=est, missing=lambda b: 0)
    assert seen[-1].digits == (1, 2, 3, 4)


def test_base_search_degree_one_screen():
    # regression fixture from the first run on grid 2^6..2^13: kappa_hat grows with the base
    grid = geometric_grid(2**6, 2, 8)
    verdicts = large_base_search(1, range(3, 9), grid)
    s = [v.s_hat for v in verdicts]
    assert all(b > a for a, b in zip(s, s[1:]))
    smallest = next(v.base for v in verdicts if v.passed)
    assert smallest == 4
    assert verdicts[0].s_hat == pytest.approx(0.40554, abs=1e-4)


# --- CSV --------------------------------------------------------------------


def test_csv_writers(tmp_path):
    xis = np.arange(0, 5)
    vals, errs = fourier_coefficients(CANTOR, xis, 1e-12)
    p = tmp_path / "c.csv"
    write_coefficients_csv(p, xis, vals, errs)
    rows = list(csv.reader(p.open()))
    assert rows[0] == ["xi", "re", "im", "abs", "truncation_error"]
    assert len(rows) == 6 and rows[1][1] == "1"
    q = tmp_path / "s.csv"
    write_series_csv(q, lt_sum(CANTOR, 1, [0, 10]))
    rows = list(csv.reader(q.open()))
    assert rows[0] == ["Q", "S"] and len(rows) == 3
