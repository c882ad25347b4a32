"""Experiments for the block-sum lemmas and the convergence Khintchine property.

Every reduction over q runs in ascending order through math.fsum, and parallel
workers only ever compute independent terms, so reports are bit-identical for
any thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import special, stats

from .diophantine import ApproxTarget, measure_A, measure_B_details
from .errors import DomainError, EpsilonSelectionError, PlanRejectedError
from .fourier import divisor_count, fourier_coefficients
from .measure import sample_points

SLOPE_TOLERANCE = 0.05


def rational_ceil(x: float, bits: int = 8) -> Fraction:
    """A dyadic rational >= x with about ``bits`` significant bits."""
    if x < 0:
        raise DomainError(f"expected x >= 0, got {x}")
    if x == 0:
        return Fraction(0)
    mant, e = math.frexp(x)  # x = mant 2^e, 1/2 <= mant < 1
    # float inputs carry ~1 ulp of error; the +1 keeps the result an upper bound
    num = math.floor(math.ldexp(mant, bits) * (1 + 2.0**-50)) + 1
    return Fraction(num) * Fraction(2) ** (e - bits)


def _map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# --- psi ------------------------------------------------------------------------------


@dataclass(frozen=True)
class PsiFunction:
    """psi(q) = c q^-a ("power"), c / (q log(q+1)^a) ("log_power"), or a table for q = 1, 2, ..."""

    kind: str
    c: Fraction = Fraction(1)
    a: Fraction = Fraction(0)
    table: tuple[Fraction, ...] = ()
    declared_convergent: bool | None = None

    def __post_init__(self):
        if self.kind not in ("power", "log_power", "table"):
            raise DomainError(f"unknown psi kind {self.kind!r}")
        object.__setattr__(self, "c", Fraction(self.c))
        object.__setattr__(self, "a", Fraction(self.a))
        object.__setattr__(self, "table", tuple(Fraction(v) for v in self.table))
        if self.c < 0:
            raise DomainError(f"psi constant must be >= 0, got {self.c}")
        if self.kind == "table":
            if not self.table:
                raise DomainError("psi table is empty")
            if any(v < 0 for v in self.table):
                raise DomainError("psi table values must be >= 0")

    @classmethod
    def power(cls, a, c=1) -> "PsiFunction":
        return cls("power", c=c, a=a)

    @classmethod
    def zero(cls) -> "PsiFunction":
        return cls("power", c=0, a=0)

    @property
    def convergent(self) -> bool:
        if self.c == 0 and self.kind != "table":
            return True
        if self.kind in ("power", "log_power"):
            return self.a > 1
        if self.declared_convergent is None:
            raise DomainError("a psi table must declare whether its series converges")
        return self.declared_convergent

    def is_zero(self) -> bool:
        if self.kind == "table":
            return all(v == 0 for v in self.table)
        return self.c == 0

    def __call__(self, q: int) -> float:
        if q < 1:
            raise DomainError(f"psi is defined for q >= 1, got {q}")
        if self.kind == "power":
            return float(self.c) * float(q) ** -float(self.a)
        if self.kind == "log_power":
            return float(self.c) / (q * math.log(q + 1) ** float(self.a))
        if q > len(self.table):
            raise DomainError(f"psi table has no value for q = {q}")
        return float(self.table[q - 1])

    def rational(self, q: int, bits: int = 8) -> Fraction:
        """A rational upper bound for psi(q); exact whenever psi(q) is rational."""
        if self.kind == "table":
            self(q)
            return self.table[q - 1]
        if self.c == 0:
            return Fraction(0)
        if self.kind == "power" and self.a.denominator == 1:
            return self.c / Fraction(q) ** int(self.a)
        return rational_ceil(self(q), bits)

    def validate_monotone(self, q_values: Sequence[int]) -> None:
        vals = [self(q) for q in sorted(q_values)]
        for (q0, v0), (q1, v1) in zip(zip(sorted(q_values), vals), zip(sorted(q_values)[1:], vals[1:])):
            if v1 > v0:
                raise DomainError(f"psi is not decreasing: psi({q1}) = {v1} > psi({q0}) = {v0}")

    def to_config(self) -> dict:
        if self.kind == "table":
            return {"kind": "table", "values": [str(v) for v in self.table],
                    "convergent": self.declared_convergent}
        return {"kind": self.kind, "c": str(self.c), "a": str(self.a)}


# --- thresholds and epsilon -----------------------------------------------------------


@dataclass(frozen=True)
class DeltaThreshold:
    delta: Fraction
    u: float
    statement_exponent: float


def threshold_exponent(v: float, n: int) -> float:
    """u = (1 - n(1 - v)) / (1 - v); valid block sums need delta >= Q^-u."""
    if n < 1:
        raise DomainError(f"degree n must be >= 1, got {n}")
    if not (1 - 1 / n < v < 1):
        raise DomainError(f"v = {v} outside (1 - 1/n, 1) = ({1 - 1 / n}, 1) for n = {n}")
    return (1 - n * (1 - v)) / (1 - v)


def delta_threshold(v: float, n: int, Q: int, bits: int = 8) -> DeltaThreshold:
    """Smallest admissible delta at block start Q, rounded up to a dyadic rational.

    ``statement_exponent`` is (2v - 1)/(1 - v), which agrees with u only for n = 2.
    """
    u = threshold_exponent(v, n)
    if Q < 1:
        raise DomainError(f"Q must be >= 1, got {Q}")
    raw = float(Q) ** -u
    if raw == 0:
        # Q^-u underflows; a power of two a couple of binades up is still >= Q^-u
        delta = Fraction(1, 2 ** max(0, math.floor(u * math.log2(Q)) - 2))
    else:
        delta = Fraction(1) if raw >= 1 else min(Fraction(1), rational_ceil(raw, bits))
    return DeltaThreshold(delta, u, (2 * v - 1) / (1 - v))


@dataclass(frozen=True)
class EpsilonCertificate:
    epsilon: float
    kappa_bound: float
    degree_bound: float
    psi_constant: float
    psi_exponent_bound: float

    def lines(self) -> list[str]:
        return [
            f"epsilon = {self.epsilon}",
            f"condition 1: epsilon < kappa_hat - v = {self.kappa_bound}",
            f"condition 2: epsilon < ((n+1)v - n)/(1 - v) = {self.degree_bound}",
            f"condition 3: psi(Q) <= C Q^-(1+epsilon) with C = {self.psi_constant}"
            f" (epsilon <= {self.psi_exponent_bound})",
        ]


def psi_decay_condition(psi: PsiFunction, eps: float, grid: Sequence[int]):
    """(holds, C, epsilon ceiling) for psi(Q) <= C Q^-(1+eps)."""
    consts = [psi(Q) * float(Q) ** (1 + eps) for Q in grid]
    C = max(consts) if consts else 0.0
    if psi.is_zero():
        return True, 0.0, math.inf
    if psi.kind == "power":
        ceiling = float(psi.a) - 1
        return eps <= ceiling, C, ceiling
    if psi.kind == "log_power":
        return False, C, 0.0
    ok = all(c1 <= c0 * (1 + 1e-12) for c0, c1 in zip(consts, consts[1:]))
    return ok, C, math.nan


def choose_epsilon(v: float, n: int, kappa_hat: float, psi: PsiFunction, Q_grid: Sequence[int]) -> EpsilonCertificate:
    """Largest epsilon = 2^-j satisfying the three selection conditions."""
    bound1 = kappa_hat - v
    if bound1 <= 0:
        raise EpsilonSelectionError(1, f"condition 1 fails: kappa_hat - v = {bound1} <= 0")
    if v >= 1:
        raise EpsilonSelectionError(2, f"condition 2 undefined for v = {v} >= 1")
    bound2 = ((n + 1) * v - n) / (1 - v)
    if bound2 <= 0:
        raise EpsilonSelectionError(2, f"condition 2 fails: ((n+1)v - n)/(1-v) = {bound2} <= 0")
    for j in range(0, 61):
        eps = 2.0**-j
        if not (eps < bound1 and eps < bound2):
            continue
        ok, C, ceiling = psi_decay_condition(psi, eps, Q_grid)
        if ok:
            return EpsilonCertificate(eps, bound1, bound2, C, ceiling)
    raise EpsilonSelectionError(3, "condition 3 fails: psi does not decay like Q^-(1+epsilon) for any epsilon = 2^-j")


# --- plans and reports ----------------------------------------------------------------


@dataclass
class ExperimentPlan:
    target: ApproxTarget
    Q_grid: list[int]
    delta_schedule: str = "threshold"
    v: float | None = None
    epsilon: float | None = None
    kappa_hat: float | None = None
    psi: PsiFunction | None = None
    tol: float = 1e-10
    seed: int = 0
    sample_count: int = 10_000
    sample_depth: int = 40
    threshold_bits: int = 8

    def __post_init__(self):
        self.Q_grid = [int(Q) for Q in self.Q_grid]
        if any(Q < 1 for Q in self.Q_grid):
            raise DomainError("Q grid entries must be >= 1")
        if any(b <= a for a, b in zip(self.Q_grid, self.Q_grid[1:])):
            raise DomainError("Q grid must be strictly increasing")
        if not self.tol > 0:
            raise DomainError(f"tol must be > 0, got {self.tol}")
        self._fixed = None
        if self.delta_schedule.startswith("fixed:"):
            self._fixed = Fraction(self.delta_schedule[len("fixed:"):])
            if self._fixed < 0:
                raise DomainError("fixed delta must be >= 0")
        elif self.delta_schedule == "threshold":
            if self.v is None:
                raise DomainError("the threshold schedule needs v")
            threshold_exponent(self.v, self.degree)
        elif self.delta_schedule == "psi":
            if self.psi is None:
                raise DomainError("the psi schedule needs a psi function")
        else:
            raise DomainError(f"unknown delta schedule {self.delta_schedule!r}")
        if self.Q_grid:
            self.target.polynomial.validate_positive(range(1, 2 * self.Q_grid[-1] + 1))

    @property
    def degree(self) -> int:
        return self.target.polynomial.degree

    def delta(self, Q: int) -> Fraction:
        if self._fixed is not None:
            return self._fixed
        if self.delta_schedule == "threshold":
            return delta_threshold(self.v, self.degree, Q, self.threshold_bits).delta
        return self.psi.rational(Q)

    def check_lemma_range(self) -> None:
        """1 - 1/n < v < kappa_hat, the range under which the block-sum bound is claimed."""
        n = self.degree
        if self.v is None:
            raise PlanRejectedError("plan has no v")
        if not self.v > 1 - 1 / n:
            raise PlanRejectedError(f"v = {self.v} must exceed 1 - 1/n = {1 - 1 / n}")
        if self.kappa_hat is not None and not self.v < self.kappa_hat:
            raise PlanRejectedError(f"v = {self.v} must be below kappa_hat = {self.kappa_hat}")

    def check_theorem_range(self) -> None:
        """The stronger range 1 - 1/(n+1) < v < kappa_hat plus a valid epsilon."""
        n = self.degree
        if self.v is None or self.kappa_hat is None or self.epsilon is None:
            raise PlanRejectedError("theorem experiments need v, kappa_hat and epsilon")
        lower = 1 - 1 / (n + 1)
        if not lower < self.v < self.kappa_hat:
            raise PlanRejectedError(
                f"v = {self.v} outside ({lower}, kappa_hat = {self.kappa_hat})"
            )
        if not 0 < self.epsilon < min(self.kappa_hat - self.v, ((n + 1) * self.v - n) / (1 - self.v)):
            raise PlanRejectedError(f"epsilon = {self.epsilon} violates the selection conditions")

    def describe(self) -> dict:
        return {
            "system": self.target.system.to_config(),
            "dimension": self.target.dimension,
            "polynomial": list(self.target.polynomial.coefficients),
            "Q_grid": list(self.Q_grid),
            "delta_schedule": self.delta_schedule,
            "v": self.v,
            "epsilon": self.epsilon,
            "kappa_hat": self.kappa_hat,
            "psi": None if self.psi is None else self.psi.to_config(),
            "tol": self.tol,
            "seed": self.seed,
            "sample_count": self.sample_count,
            "sample_depth": self.sample_depth,
        }


@dataclass(frozen=True)
class RatioRow:
    Q: int
    delta: Fraction
    sum: float
    ratio: float


@dataclass
class RatioReport:
    rows: list[RatioRow]
    C: float
    trend_slope: float
    slope_tolerance: float = SLOPE_TOLERANCE

    @property
    def argmax(self) -> int | None:
        if not self.rows:
            return None
        return max(range(len(self.rows)), key=lambda i: self.rows[i].ratio)

    @property
    def max_in_first_half(self) -> bool:
        i = self.argmax
        return i is not None and i < (len(self.rows) + 1) // 2

    @property
    def bounded(self) -> bool:
        """The operational reading of "<<": finite max ratio, non-growing trend."""
        return math.isfinite(self.C) and (math.isnan(self.trend_slope) or self.trend_slope <= self.slope_tolerance)


def _ratio_report(rows: list[RatioRow]) -> RatioReport:
    if not rows:
        return RatioReport([], 0.0, math.nan)
    C = max(r.ratio for r in rows)
    good = [r for r in rows if r.ratio > 0]
    if len(good) >= 2 and len({r.Q for r in good}) >= 2:
        fit = stats.linregress(np.log([r.Q for r in good]), np.log([r.ratio for r in good]))
        slope = float(fit.slope)
    else:
        slope = math.nan
    return RatioReport(rows, C, slope)


def _ratio(total: float, delta: Fraction, Q: int) -> float:
    if total == 0:
        return 0.0
    return total / (float(delta) * Q)


def _check_threshold(plan: ExperimentPlan, Q: int, delta: Fraction):
    u = threshold_exponent(plan.v, plan.degree)
    # compare exactly against the rounded-up threshold; tiny float slack for Q^-u itself
    if float(delta) < float(Q) ** -u * (1 - 1e-12):
        raise PlanRejectedError(f"delta({Q}) = {delta} is below the threshold Q^-u = {float(Q) ** -u:.6g} (u = {u:.6g})")


def lemma1_experiment(plan: ExperimentPlan, *, threads: int = 1, check_threshold: bool | None = None) -> RatioReport:
    """Block sums S_Q = sum_{q=Q}^{2Q} m(A(q, delta(Q))) and ratios S_Q / (delta Q).

    The threshold is enforced whenever the plan carries v, unless
    ``check_threshold=False`` (used to report deliberately invalid schedules).
    """
    if check_threshold is None:
        check_threshold = plan.v is not None
    deltas = [plan.delta(Q) for Q in plan.Q_grid]
    if check_threshold:
        for Q, delta in zip(plan.Q_grid, deltas):
            _check_threshold(plan, Q, delta)
    rows = []
    for Q, delta in zip(plan.Q_grid, deltas):
        per = plan.tol / (Q + 1)
        terms = _map(lambda q: measure_A(plan.target, q, delta, per), range(Q, 2 * Q + 1), threads)
        total = math.fsum(terms)
        rows.append(RatioRow(Q, delta, total, _ratio(total, delta, Q)))
    return _ratio_report(rows)


@dataclass(frozen=True)
class InequalityRow:
    q: int
    delta: Fraction
    m_B: float
    m_A: float
    holds: bool


@dataclass
class Lemma2Report:
    report: RatioReport
    a_sums: list[float]
    rows: list[InequalityRow]

    @property
    def violations(self) -> list[InequalityRow]:
        return [r for r in self.rows if not r.holds]


def lemma2_check(plan: ExperimentPlan, *, threads: int = 1, check_threshold: bool | None = None) -> Lemma2Report:
    """Block sums of m_d(B) plus the row-wise check m_d(B) <= m_1(A) within 2 tol."""
    if check_threshold is None:
        check_threshold = plan.v is not None
    deltas = [plan.delta(Q) for Q in plan.Q_grid]
    if check_threshold:
        for Q, delta in zip(plan.Q_grid, deltas):
            _check_threshold(plan, Q, delta)
    rows, ineq, a_sums = [], [], []
    for Q, delta in zip(plan.Q_grid, deltas):
        per = plan.tol / (Q + 1)
        qs = list(range(Q, 2 * Q + 1))
        res = _map(lambda q: measure_B_details(plan.target, q, delta, per), qs, threads)
        for q, r in zip(qs, res):
            ineq.append(InequalityRow(q, delta, r.value, r.one_coordinate_bound,
                                      r.value <= r.one_coordinate_bound + 2 * per))
        total = math.fsum(r.value for r in res)
        a_sums.append(math.fsum(r.one_coordinate_bound for r in res))
        rows.append(RatioRow(Q, delta, total, _ratio(total, delta, Q)))
    return Lemma2Report(_ratio_report(rows), a_sums, ineq)


@dataclass(frozen=True)
class TailRow:
    k: int
    Q: int
    delta: Fraction
    block_sum: float
    cumulative_tail: float


@dataclass
class TailReport:
    rows: list[TailRow]
    decay_exponent: float
    epsilon: float
    geometric_constant: float
    exponent_tolerance: float = 0.1

    @property
    def strictly_decreasing(self) -> bool:
        tails = [r.cumulative_tail for r in self.rows]
        return all(b < a for a, b in zip(tails, tails[1:]))

    @property
    def decays(self) -> bool:
        return self.decay_exponent >= self.epsilon - self.exponent_tolerance


def _block_sum(target, Q, delta, tol, threads):
    per = tol / (Q + 1)
    return math.fsum(_map(lambda q: measure_B_details(target, q, delta, per).value, range(Q, 2 * Q + 1), threads))


def tail_sum_experiment(
    plan: ExperimentPlan,
    psi: PsiFunction,
    blocks: int,
    *,
    threads: int = 1,
    block_measure: Callable[[int, Fraction], float] | None = None,
) -> TailReport:
    """Dyadic blocks sum_{q=2^k Q}^{2^{k+1} Q} m_d(B(q, psi(2^k Q))), k < blocks.

    Each block uses psi at its left end, which bounds psi(q) on the block by
    monotonicity. ``block_measure(q, delta)`` replaces m_d(B) (e.g. a Lebesgue stub).
    """
    if not psi.convergent:
        raise PlanRejectedError("tail sums need a convergent psi; use survivor_experiment for divergent psi")
    if plan.epsilon is None:
        raise PlanRejectedError("tail sums need the plan's epsilon")
    if not plan.Q_grid:
        raise PlanRejectedError("plan has an empty Q grid")
    Q0 = plan.Q_grid[0]
    plan.target.polynomial.validate_positive(range(1, 2**blocks * Q0 + 1))
    sums, starts, deltas = [], [], []
    for k in range(blocks):
        Qk = Q0 * 2**k
        delta = psi.rational(Qk)
        if block_measure is None:
            s = _block_sum(plan.target, Qk, delta, plan.tol, threads)
        else:
            s = math.fsum(block_measure(q, delta) for q in range(Qk, 2 * Qk + 1))
        sums.append(s)
        starts.append(Qk)
        deltas.append(delta)
    tails = [math.fsum(sums[k:]) for k in range(blocks)]
    rows = [TailRow(k, starts[k], deltas[k], sums[k], tails[k]) for k in range(blocks)]
    positive = [(Q, s) for Q, s in zip(starts, sums) if s > 0]
    if len(positive) >= 2:
        fit = stats.linregress(np.log([p[0] for p in positive]), np.log([p[1] for p in positive]))
        exponent = -float(fit.slope)
    else:
        exponent = math.inf
    eps = plan.epsilon
    return TailReport(rows, exponent, eps, 1 / (1 - 2.0**-eps))


# --- survivors ------------------------------------------------------------------------


@dataclass(frozen=True)
class SurvivorRow:
    Q0: int
    survivors: int
    indeterminate: int
    total: int

    @property
    def fraction(self) -> float:
        return self.survivors / self.total


def required_depth(base: int, p_max: int, psi_max: float, safety: int = 4) -> int:
    scale = p_max / psi_max if psi_max > 0 else p_max
    return math.ceil(math.log(scale, base)) + safety


def survivor_experiment(
    plan: ExperimentPlan,
    psi: PsiFunction,
    Q0_grid: Sequence[int],
    Q_max: int,
    *,
    threads: int = 1,
    q_block: int = 256,
) -> list[SurvivorRow]:
    """Fraction of sampled points with a hit max_i ||P(q) x_i|| < psi(q) for some q in [Q0, Q_max]."""
    Q0_grid = sorted(int(Q) for Q in Q0_grid)
    if not Q0_grid or Q0_grid[0] < 1 or Q0_grid[-1] > Q_max:
        raise DomainError("Q0 grid must be non-empty, >= 1 and <= Q_max")
    target = plan.target
    P = target.polynomial
    P.validate_positive(range(Q0_grid[0], Q_max + 1))
    b = target.system.base
    p_max = max(P(q) for q in range(Q0_grid[0], Q_max + 1))
    if p_max >= 2**53:
        raise DomainError(f"P(Q_max) = {p_max} exceeds exact float range")
    need = required_depth(b, p_max, psi(Q_max))
    if plan.sample_depth < need:
        raise DomainError(f"sample depth {plan.sample_depth} too small; need at least {need}")
    batch = sample_points(target.measure, plan.sample_count, plan.sample_depth, plan.seed)
    x = batch.coordinates
    qs = np.arange(Q0_grid[0], Q_max + 1)
    p_vals = np.array([P(int(q)) for q in qs], dtype=np.float64)
    thr = np.array([psi(int(q)) for q in qs], dtype=np.float64)
    # truncation moves P x by at most P b^-depth; float rounding adds ~P 2^-52
    band = p_vals * (2 * math.pi * float(b) ** -plan.sample_depth + 2.0**-50)

    def scan(span):
        s, e = span
        xs = x[s:e]
        last_hit = np.zeros(e - s, dtype=np.int64)
        last_ind = np.zeros(e - s, dtype=np.int64)
        for lo in range(0, qs.size, q_block):
            hi = min(qs.size, lo + q_block)
            y = xs[:, :, None] * p_vals[None, None, lo:hi]
            dist = np.abs(y - np.rint(y)).max(axis=1)
            t = thr[None, lo:hi]
            bd = band[None, lo:hi]
            hit = dist + bd < t
            ind = ~hit & (dist - bd < t)
            qrow = qs[None, lo:hi]
            last_hit = np.maximum(last_hit, np.where(hit, qrow, 0).max(axis=1))
            last_ind = np.maximum(last_ind, np.where(ind, qrow, 0).max(axis=1))
        return last_hit, last_ind

    chunk = 4096
    spans = [(s, min(len(batch), s + chunk)) for s in range(0, len(batch), chunk)]
    parts = _map(scan, spans, threads)
    last_hit = np.concatenate([p[0] for p in parts])
    last_ind = np.concatenate([p[1] for p in parts])
    rows = []
    for Q0 in Q0_grid:
        alive = last_hit >= Q0
        unsure = ~alive & (last_ind >= Q0)
        rows.append(SurvivorRow(Q0, int(alive.sum()), int(unsure.sum()), len(batch)))
    return rows


def first_moment_bounds(
    target: ApproxTarget, psi: PsiFunction, Q0_grid: Sequence[int], Q_max: int, tol: float = 1e-10, *, threads: int = 1
) -> list[float]:
    """sum_{q=Q0}^{Q_max} m_d(B(q, psi(q))) per Q0, the union (first-moment) bound on survivors."""
    Q0_grid = sorted(int(Q) for Q in Q0_grid)
    qs = list(range(Q0_grid[0], Q_max + 1))
    per = tol / len(qs)
    terms = _map(lambda q: measure_B_details(target, q, psi.rational(q), per).value, qs, threads)
    return [math.fsum(terms[Q0 - Q0_grid[0]:]) for Q0 in Q0_grid]


# --- Lebesgue baseline ----------------------------------------------------------------


@dataclass(frozen=True)
class BaselineRow:
    Q0: int
    tail_sum: float
    closed_form: float
    infinite_tail: float


@dataclass
class BaselineReport:
    rows: list[BaselineRow]
    per_q: list[tuple[int, float]]
    convergent: bool


def lebesgue_baseline(psi: PsiFunction, P, Q0_grid: Sequence[int], Q_max: int) -> BaselineReport:
    """Lebesgue tails 2 sum_{q=Q0}^{Q_max} psi(q), using lambda{||P(q) x|| < delta} = 2 delta.

    The closed form (Hurwitz zeta) is filled in for power psi; NaN otherwise.
    """
    Q0_grid = sorted(int(Q) for Q in Q0_grid)
    P.validate_positive(range(Q0_grid[0], Q_max + 1))
    qs = range(Q0_grid[0], Q_max + 1)
    per_q = [(q, 2 * min(psi(q), 0.5)) for q in qs]
    vals = [m for _, m in per_q]
    rows = []
    for Q0 in Q0_grid:
        tail = math.fsum(vals[Q0 - Q0_grid[0]:])
        closed, infinite = math.nan, math.nan
        if psi.kind == "power" and psi(Q0) <= 0.5:
            c, a = float(psi.c), float(psi.a)
            if c == 0:
                closed = infinite = 0.0
            elif a > 1:
                infinite = 2 * c * float(special.zeta(a, Q0))
                closed = infinite - 2 * c * float(special.zeta(a, Q_max + 1))
            elif a == 1:
                closed = 2 * c * float(special.digamma(Q_max + 1) - special.digamma(Q0))
                infinite = math.inf
            else:
                infinite = math.inf
        rows.append(BaselineRow(Q0, tail, closed, infinite))
    return BaselineReport(rows, per_q, psi.convergent)


# --- proof-step checks ----------------------------------------------------------------


@dataclass(frozen=True)
class ParsevalRow:
    q: int
    delta: Fraction
    m_A: float
    fourier_sum: float
    ratio: float


@dataclass
class ParsevalReport:
    rows: list[ParsevalRow]
    C: float
    first_half_max: float
    second_half_max: float

    @property
    def stable(self) -> bool:
        return self.second_half_max <= self.first_half_max


def parseval_bound_check(target: ApproxTarget, cells: Sequence[tuple[int, Fraction]], tol: float = 1e-10) -> ParsevalReport:
    """m(A) / (delta sum_{|xi| <= 2P/delta, P | xi} |m^(xi)|) on a grid of (q, delta) cells."""
    rows = []
    for q, delta in cells:
        delta = Fraction(delta)
        p = target.polynomial(q)
        J = math.floor(2 / delta)
        vals, _ = fourier_coefficients(target.system, np.arange(1, J + 1, dtype=np.int64) * p, 1e-12)
        fsum_ = 1 + 2 * math.fsum(np.abs(vals).tolist())
        mA = measure_A(target, q, delta, tol)
        rows.append(ParsevalRow(q, delta, mA, fsum_, mA / (float(delta) * fsum_)))
    ratios = [r.ratio for r in rows]
    half = (len(ratios) + 1) // 2
    first = max(ratios[:half]) if ratios else 0.0
    second = max(ratios[half:]) if len(ratios) > half else 0.0
    return ParsevalReport(rows, max(ratios) if ratios else 0.0, first, second)


@dataclass(frozen=True)
class DivisorWeightCheck:
    multiplicity_sum: float
    divisor_weighted_sum: float

    @property
    def holds(self) -> bool:
        return self.multiplicity_sum <= self.divisor_weighted_sum * (1 + 1e-12)


def divisor_weight_check(target: ApproxTarget, Q: int, delta) -> DivisorWeightCheck:
    """sum_q sum_{0<xi<=X, P(q)|xi} |m^(xi)| versus sum_{0<xi<=X} tau(xi) |m^(xi)|, X = 2 P(2Q)/delta.

    Each xi is divisible by at most tau(xi) of the distinct values P(q).
    """
    delta = Fraction(delta)
    P = target.polynomial
    X = math.floor(2 * P(2 * Q) / delta)
    vals, _ = fourier_coefficients(target.system, np.arange(1, X + 1, dtype=np.int64), 1e-12)
    mags = np.abs(vals)
    lhs = []
    for q in range(Q, 2 * Q + 1):
        p = P(q)
        lhs.append(math.fsum(mags[p - 1 :: p].tolist()))
    taus = [divisor_count(xi) for xi in range(1, X + 1)]
    rhs = math.fsum((mags * np.asarray(taus)).tolist())
    return DivisorWeightCheck(math.fsum(lhs), rhs)


# --- CSV ------------------------------------------------------------------------------


def _fmt(x) -> str:
    return f"{float(x):.12g}"


def ratio_csv_rows(report: RatioReport):
    yield ["Q", "delta", "sum", "ratio"]
    for r in report.rows:
        yield [r.Q, str(r.delta), _fmt(r.sum), _fmt(r.ratio)]


def tail_csv_rows(report: TailReport):
    yield ["k", "block_sum", "cumulative_tail"]
    for r in report.rows:
        yield [r.k, _fmt(r.block_sum), _fmt(r.cumulative_tail)]


def survivor_csv_rows(rows: Sequence[SurvivorRow]):
    yield ["Q0", "survivors", "indeterminate", "total"]
    for r in rows:
        yield [r.Q0, r.survivors, r.indeterminate, r.total]


def baseline_csv_rows(report: BaselineReport):
    yield ["Q0", "tail_sum", "closed_form", "infinite_tail"]
    for r in report.rows:
        yield [r.Q0, _fmt(r.tail_sum), _fmt(r.closed_form), _fmt(r.infinite_tail)]
