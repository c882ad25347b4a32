"""Missing digit sets K_{b,D}, their self-similar measures, and exact interval measures.

A point of K_{b,D} is sum_i d_i b^-i with every d_i in D. The missing digit
measure draws the digits i.i.d. uniformly from D. Level-k cylinders are indexed
by the integer j whose k base-b digits form the prefix; the closed convex hull
of the support inside cylinder j is

    [(j + min(D)/(b-1)) / b^k, (j + max(D)/(b-1)) / b^k]

and carries mass |D|^-k. All comparisons between hulls and query endpoints are
done in exact integer/rational arithmetic, so the only error is the mass of the
unresolved frontier, which is reported two-sided.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DegenerateMeasureWarning, DomainError, ToleranceUnreachableError
from .rng import uniform_digit_indices


@dataclass(frozen=True)
class DigitSystem:
    """Base ``base`` together with the allowed digit set ``digits``."""

    base: int
    digits: tuple[int, ...]

    def __post_init__(self):
        if isinstance(self.base, bool) or not isinstance(self.base, (int, np.integer)):
            raise DomainError(f"base must be an integer, got {self.base!r}")
        if self.base < 2:
            raise DomainError(f"base must be >= 2, got {self.base}")
        digits = tuple(int(d) for d in self.digits)
        if len(digits) == 0:
            raise DomainError("digit set must be non-empty")
        if len(set(digits)) != len(digits):
            raise DomainError(f"digits must be distinct, got {list(digits)}")
        bad = [d for d in digits if not 0 <= d <= self.base - 1]
        if bad:
            raise DomainError(
                f"digits must satisfy 0 <= d <= base-1 = {self.base - 1}; offending: {bad}"
            )
        object.__setattr__(self, "base", int(self.base))
        object.__setattr__(self, "digits", tuple(sorted(digits)))

    @classmethod
    def one_missing(cls, base: int, missing: int | None = None) -> "DigitSystem":
        """All digits except ``missing`` (default: the top digit ``base - 1``)."""
        if missing is None:
            missing = base - 1
        return cls(base, tuple(d for d in range(base) if d != missing))

    @classmethod
    def from_config(cls, obj: dict) -> "DigitSystem":
        try:
            return cls(obj["base"], tuple(obj["digits"]))
        except KeyError as exc:
            raise DomainError(f"digit system config is missing field {exc.args[0]!r}") from None

    def to_config(self) -> dict:
        return {"base": self.base, "digits": list(self.digits)}

    @property
    def size(self) -> int:
        return len(self.digits)

    @property
    def missing_count(self) -> int:
        return self.base - len(self.digits)

    @property
    def hull(self) -> tuple[Fraction, Fraction]:
        """Convex hull of K_{b,D}, i.e. [min(D)/(b-1), max(D)/(b-1)]."""
        return (Fraction(self.digits[0], self.base - 1), Fraction(self.digits[-1], self.base - 1))

    @property
    def dimension(self) -> float:
        """Similarity dimension log|D| / log b (Hausdorff dimension of K)."""
        return math.log(self.size) / math.log(self.base)

    def contains_digits(self, digits: Iterable[int]) -> bool:
        allowed = set(self.digits)
        return all(int(d) in allowed for d in digits)


@dataclass(frozen=True)
class MissingDigitMeasure:
    """The missing digit measure m_d on K^d (product of d copies of m)."""

    system: DigitSystem
    dimension: int = 1

    def __post_init__(self):
        if self.dimension < 1:
            raise DomainError(f"dimension must be >= 1, got {self.dimension}")

    @property
    def degenerate(self) -> bool:
        return self.system.size == 1


@dataclass(frozen=True)
class RationalInterval:
    lower: Fraction
    upper: Fraction
    closed_lower: bool = True
    closed_upper: bool = True

    def __post_init__(self):
        lo, hi = self.lower, self.upper
        if type(lo) is not Fraction:
            lo = Fraction(lo)
            object.__setattr__(self, "lower", lo)
        if type(hi) is not Fraction:
            hi = Fraction(hi)
            object.__setattr__(self, "upper", hi)
        if lo > hi:
            raise DomainError(f"interval lower bound {lo} exceeds upper bound {hi}")

    @property
    def length(self) -> Fraction:
        return self.upper - self.lower

    def __contains__(self, x) -> bool:
        x = Fraction(x)
        above = x >= self.lower if self.closed_lower else x > self.lower
        below = x <= self.upper if self.closed_upper else x < self.upper
        return above and below

    def __str__(self):
        left = "[" if self.closed_lower else "("
        right = "]" if self.closed_upper else ")"
        return f"{left}{self.lower}, {self.upper}{right}"


@dataclass(frozen=True)
class SamplePoint:
    """A sampled point of K^d, each coordinate a depth-``depth`` truncated expansion."""

    digits: tuple[tuple[int, ...], ...]
    base: int

    @property
    def depth(self) -> int:
        return len(self.digits[0])

    @property
    def coordinates(self) -> tuple[Fraction, ...]:
        """Exact rational values of the truncated expansions."""
        scale = self.base ** self.depth
        out = []
        for row in self.digits:
            n = 0
            for d in row:
                n = n * self.base + d
            out.append(Fraction(n, scale))
        return tuple(out)


@dataclass
class SampleBatch(Sequence):
    """Array-backed sequence of :class:`SamplePoint`.

    ``digits`` has shape (count, dimension, depth); ``coordinates`` holds the
    float64 values of the truncated expansions, shape (count, dimension).
    """

    system: DigitSystem
    digits: np.ndarray
    coordinates: np.ndarray = field(repr=False)

    @property
    def depth(self) -> int:
        return self.digits.shape[2]

    @property
    def truncation_error(self) -> float:
        # true point lies in [x, x + b^-depth * max(D)/(b-1)]
        return float(self.system.base) ** (-self.depth)

    def __len__(self) -> int:
        return self.digits.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[k] for k in range(*i.indices(len(self)))]
        row = self.digits[i]
        return SamplePoint(tuple(tuple(int(d) for d in c) for c in row), self.system.base)

    def __iter__(self) -> Iterator[SamplePoint]:
        for i in range(len(self)):
            yield self[i]


def _check_tol(tol):
    if not tol > 0:
        raise DomainError(f"tol must be > 0, got {tol}")


def _max_levels(system: DigitSystem) -> int:
    # deep enough that a single cylinder weighs less than 2^-64
    return math.ceil(64 / math.log2(system.size)) + 1


def _interval_mass_bounds(system: DigitSystem, lo: Fraction, hi: Fraction, tol) -> tuple[Fraction, Fraction]:
    """Return (inside mass, unresolved frontier mass) for the closed interval [lo, hi]."""
    if lo >= hi:
        return Fraction(0), Fraction(0)
    b = system.base
    n = system.size
    h0, h1 = system.hull
    inside = Fraction(0)
    frontier = [0]
    scale = 1
    cap = _max_levels(system)
    for level in range(cap + 1):
        weight = Fraction(1, n**level)
        partial = []
        for j in frontier:
            c_lo = (j + h0) / scale
            c_hi = (j + h1) / scale
            if lo <= c_lo and c_hi <= hi:
                inside += weight
            elif c_hi <= lo or c_lo >= hi:
                continue
            else:
                partial.append(j)
        remaining = weight * len(partial)
        if remaining <= tol or not partial:
            return inside, remaining
        frontier = [j * b + d for j in partial for d in system.digits]
        scale *= b
    raise ToleranceUnreachableError(
        f"tolerance {tol} unreachable within {cap} digit levels for interval [{lo}, {hi}]"
    )


def _validate_interval(interval: RationalInterval):
    if interval.lower < 0 or interval.upper > 1:
        raise DomainError(f"interval {interval} is not contained in [0, 1]")


def _dirac_mass(system: DigitSystem, interval: RationalInterval) -> float:
    warnings.warn(
        f"digit set {list(system.digits)} has a single digit; the measure is a Dirac mass",
        DegenerateMeasureWarning,
        stacklevel=3,
    )
    point = Fraction(system.digits[0], system.base - 1)
    return 1.0 if point in interval else 0.0


def measure_interval(measure: MissingDigitMeasure, interval: RationalInterval, tol: float = 1e-12) -> float:
    """m(interval) within +-tol by cylinder recursion.

    Cylinders are refined until the ones straddling an endpoint weigh less than
    ``tol`` in total; the midpoint of the resulting bounds is returned.
    """
    if measure.dimension != 1:
        raise DomainError("measure_interval needs a one-dimensional measure")
    _check_tol(tol)
    _validate_interval(interval)
    system = measure.system
    if measure.degenerate:
        return _dirac_mass(system, interval)
    inside, remaining = _interval_mass_bounds(system, interval.lower, interval.upper, tol)
    return float(inside + remaining / 2)


def measure_interval_union(
    measure: MissingDigitMeasure, intervals: Sequence[RationalInterval], tol: float = 1e-12
) -> float:
    """Sum of measures of pairwise interior-disjoint intervals; total error <= tol."""
    _check_tol(tol)
    if not intervals:
        return 0.0
    ordered = sorted(intervals, key=lambda iv: (iv.lower, iv.upper))
    for prev, nxt in zip(ordered, ordered[1:]):
        if nxt.lower < prev.upper:
            raise DomainError(f"intervals {prev} and {nxt} overlap")
    for iv in ordered:
        _validate_interval(iv)
    if measure.degenerate:
        return float(sum(_dirac_mass(measure.system, iv) for iv in ordered))
    per = Fraction(tol) / len(ordered)
    total = Fraction(0)
    for iv in ordered:
        inside, remaining = _interval_mass_bounds(measure.system, iv.lower, iv.upper, per)
        total += inside + remaining / 2
    return float(total)


def _expansion_values(digits: np.ndarray, base: int) -> np.ndarray:
    # Horner from the least significant digit keeps the float error at ~1 ulp
    x = np.zeros(digits.shape[:-1], dtype=np.float64)
    for i in range(digits.shape[-1] - 1, -1, -1):
        x = (digits[..., i] + x) / base
    return x


def sample_points(
    measure: MissingDigitMeasure, count: int, depth: int, seed: int, *, chunk: int = 1 << 15
) -> SampleBatch:
    """Draw ``count`` points of K^d with i.i.d. uniform digits from D.

    Digit (point i, coordinate c, position k) is a pure function of
    (seed, i, c, k), so the output does not depend on ``chunk``.
    """
    if count < 1:
        raise DomainError(f"count must be >= 1, got {count}")
    if depth < 1:
        raise DomainError(f"depth must be >= 1, got {depth}")
    system = measure.system
    d = measure.dimension
    dt = np.uint8 if system.base <= 256 else np.int64
    table = np.asarray(system.digits, dtype=dt)
    digits = np.empty((count, d, depth), dtype=dt)
    for start in range(0, count, chunk):
        stop = min(count, start + chunk)
        idx = uniform_digit_indices(seed, start, stop, d * depth, system.size)
        digits[start:stop] = table[idx].reshape(stop - start, d, depth)
    return SampleBatch(system, digits, _expansion_values(digits, system.base))


def empirical_interval_fraction(batch: SampleBatch, interval: RationalInterval) -> float:
    """Fraction of one-dimensional samples falling in ``interval``."""
    x = batch.coordinates[:, 0]
    lo, hi = float(interval.lower), float(interval.upper)
    return float(np.count_nonzero((x >= lo) & (x <= hi))) / len(batch)


# --- measure of {x : ||P x|| < delta} -------------------------------------------------
#
# Cylinder j at level k maps under y = P x (mod 1) onto t + sigma * [h0, h1] with
# t = (P j mod b^k) / b^k and sigma = P / b^k, so only R = P j mod b^k matters.
# Once the image is no longer than the gap between target components, each
# cylinder meets at most one component; from then on the component is tracked in
# the cylinder's local coordinate (x = (j + s) / b^k), where refinement is the
# affine map s -> b s - d and all numerators stay bounded.

_INT64_LIMIT = 1 << 62
_ENUM_CHUNK = 1 << 20


def _expand_residues(R: np.ndarray, b: int, P: int, digits: np.ndarray, power: int):
    """Children residues at the next level; ``power`` is b^k of the parent level."""
    nxt = power * b
    return ((R[:, None] * b + P * digits[None, :]) % nxt).ravel(), nxt


def _band_chunk(R, k, power, system, P, c_num, h_num, E, dtype, tol_chunk, counts, cap):
    """Classify level-k cylinders with residues R and refine until the frontier mass <= tol_chunk.

    Adds inside counts per level to ``counts`` and returns (level, frontier count).
    A frontier item is the target component (a, g) in local numerators; an end
    that has left the hull is clamped to a sentinel just outside it.
    """
    b = system.base
    n = system.size
    lo_d, hi_d = system.digits[0], system.digits[-1]
    T = (b - 1) * power
    R = R.astype(dtype)
    Yh = R * (b - 1) + P * hi_d
    X = Yh * E + (h_num - c_num) * T
    m = -((-X) // (T * E)) - 1
    a = (b - 1) * ((m * E + (c_num - h_num)) * power - R * E)
    g = a + (b - 1) * 2 * h_num * power
    H0 = lo_d * P * E
    H1 = hi_d * P * E
    step = (b - 1) * P * E
    member = np.zeros(b + 2, dtype=bool)
    member[np.asarray(system.digits) + 1] = True
    cum = np.concatenate([[0], np.cumsum(member[1 : b + 1])])

    level = k
    inside = (a <= H0) & (g >= H1)
    n_in = int(np.count_nonzero(inside))
    if n_in:
        counts[level] = counts.get(level, 0) + n_in
    keep = ~(inside | (g <= H0) | (a >= H1))
    a = np.maximum(a[keep], H0 - 1)
    g = np.minimum(g[keep], H1 + 1)
    while True:
        if a.size == 0 or Fraction(a.size, n**level) <= tol_chunk:
            return level, int(a.size)
        if level >= cap:
            raise ToleranceUnreachableError(
                f"tolerance {float(tol_chunk):.3g} unreachable by level {cap} (P={P})"
            )
        level += 1
        ba = a * b
        bg = g * b
        # children entirely inside: d*step in [ba - H0, bg - H1]
        d_lo = -((H0 - ba) // step)
        d_hi = (bg - H1) // step
        top = np.clip(d_hi + 1, 0, b).astype(np.int64)
        bot = np.clip(d_lo, 0, b).astype(np.int64)
        n_in = int(np.maximum(cum[top] - cum[bot], 0).sum())
        if n_in:
            counts[level] = counts.get(level, 0) + n_in
        # the child whose hull strictly contains an end: ba - H1 < d*step < ba - H0
        da = (ba - H0 - 1) // step
        dg = (bg - H0 - 1) // step
        va = member[np.clip(da, -1, b).astype(np.int64) + 1] & (da * step > ba - H1)
        vg = member[np.clip(dg, -1, b).astype(np.int64) + 1] & (dg * step > bg - H1)
        both = va & vg & (da == dg)
        only_a = va & ~both
        only_g = vg & ~both
        a = np.concatenate([
            ba[both] - da[both] * step,
            ba[only_a] - da[only_a] * step,
            np.full(int(np.count_nonzero(only_g)), H0 - 1, dtype=a.dtype),
        ])
        g = np.concatenate([
            bg[both] - da[both] * step,
            np.full(int(np.count_nonzero(only_a)), H1 + 1, dtype=g.dtype),
            bg[only_g] - dg[only_g] * step,
        ])


def _compiled_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


# below this P the numpy path takes ~1 ms, far less than the one-off kernel compile.
# The choice depends only on the inputs so reruns pick the same engine.
_COMPILE_MIN_P = 4096


def band_measure_bounds(
    system: DigitSystem, P: int, delta, tol: float = 1e-12, *, engine: str = "auto"
) -> tuple[float, float]:
    """Return (value, error bound) for m{x in [0,1] : ||P x|| < delta}, delta rational.

    ``engine`` is "numpy" (vectorised, adaptive stop), "compiled" (numba,
    depth-first) or "auto". Both give the same value up to ``tol``.
    """
    if engine not in ("auto", "numpy", "compiled"):
        raise DomainError(f"unknown engine {engine!r}")
    _check_tol(tol)
    P = int(P)
    if P < 1:
        raise DomainError(f"P must be a positive integer, got {P}")
    delta = Fraction(delta)
    if delta <= 0:
        return 0.0, 0.0
    if delta >= Fraction(1, 2):
        return 1.0, 0.0
    if system.size == 1:
        point = Fraction(system.digits[0], system.base - 1)
        y = P * point
        return (1.0 if abs(y - round(y)) < delta else 0.0), 0.0
    dn, dd = delta.numerator, delta.denominator
    E = 2 * dd
    complement = delta > Fraction(1, 4)
    if complement:
        # ||Px|| >= delta  <=>  ||Px - 1/2|| <= 1/2 - delta
        c_num, h_num = dd, dd - 2 * dn
    else:
        c_num, h_num = 0, 2 * dn
    b = system.base
    n = system.size
    span = system.digits[-1] - system.digits[0]
    # switch level: image length P*span/((b-1) b^k) no longer than the gap 1 - 2h
    k_s, power = 0, 1
    while P * span * E > (E - 2 * h_num) * (b - 1) * power:
        k_s += 1
        power *= b
    # largest magnitudes: local ends ~8(b-1) dd b^k, the component search ~4 b dd (b^k + P),
    # refinement ~4 b^2 P dd; keep a factor 4 of headroom below 2^62
    bound = 4 * max(8 * (b - 1) * dd * power, 4 * b * dd * (power + P), 4 * b * b * P * dd)
    exact64 = bound < _INT64_LIMIT and power * b < _INT64_LIMIT
    dtype = np.int64 if exact64 else object
    if engine == "auto":
        use = exact64 and P >= _COMPILE_MIN_P and _compiled_available()
        engine = "compiled" if use else "numpy"
    if engine == "compiled" and not exact64:
        raise DomainError("the compiled engine needs int64-sized intermediates")
    # enumerate top levels, then finish each block of prefixes independently
    k2 = 0
    while k2 < k_s and n ** (k2 + 1) <= _ENUM_CHUNK:
        k2 += 1
    k1 = k_s - k2
    digits = np.asarray(system.digits, dtype=dtype)
    R = np.zeros(1, dtype=dtype)
    pw = 1
    for _ in range(k1):
        R, pw = _expand_residues(R, b, P, digits, pw)
    per_chunk = max(1, _ENUM_CHUNK // n**k2)
    cap = k_s + _max_levels(system) + 64
    counts: dict[int, int] = {}
    frontier = Fraction(0)
    tol_f = Fraction(tol)
    if engine == "compiled":
        from ._kernels import band_kernel

        # fixed stop level: 2 chains per level-k_s cylinder, each weighing n^-stop
        stop = k_s + math.ceil(math.log(2 / tol) / math.log(n)) + 1
        if stop > cap:
            raise ToleranceUnreachableError(f"tolerance {tol:.3g} unreachable by level {cap} (P={P})")
        member = np.zeros(b + 2, dtype=np.bool_)
        member[np.asarray(system.digits) + 1] = True
        cum = np.concatenate([[0], np.cumsum(member[1 : b + 1])]).astype(np.int64)
    for start in range(0, R.size, per_chunk):
        block = R[start : start + per_chunk]
        pw_b = pw
        for _ in range(k2):
            block, pw_b = _expand_residues(block, b, P, digits, pw_b)
        if engine == "compiled":
            lv_counts, left = band_kernel(
                block, pw_b, b, P, system.digits[0], system.digits[-1], member, cum,
                c_num, h_num, E, k_s, stop,
            )
            for lv in np.nonzero(lv_counts)[0]:
                counts[int(lv)] = counts.get(int(lv), 0) + int(lv_counts[lv])
            frontier += Fraction(int(left), n**stop)
            continue
        share = tol_f * Fraction(min(per_chunk, R.size - start), n**k1)
        level, left = _band_chunk(
            block, k_s, pw_b, system, P, c_num, h_num, E, dtype, share, counts, cap
        )
        frontier += Fraction(left, n**level)
    inside = sum(Fraction(c, n**lv) for lv, c in counts.items())
    value = inside + frontier / 2
    if complement:
        value = 1 - value
    return float(value), float(frontier / 2)


def band_measure(system: DigitSystem, P: int, delta, tol: float = 1e-12) -> float:
    """m{x : ||P x|| < delta} within +-tol."""
    return band_measure_bounds(system, P, delta, tol)[0]
