"""Fourier coefficients of missing digit measures and the Fourier l^t-dimension.

The measure is the law of sum_i D_i b^-i, so its transform factorises:

    m^(xi) = prod_{i>=1} phi(xi b^-i),   phi(u) = |D|^-1 sum_{d in D} e^{-2 pi i d u}.

Truncating after N factors leaves a tail whose distance from 1 is at most
exp(2 pi |xi| max(D) b^-N / (b-1)) - 1, which fixes N for a requested tolerance.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .errors import DomainError
from .measure import DigitSystem

_INT64_SAFE = 1 << 62


@dataclass(frozen=True)
class FourierCoefficient:
    xi: int
    value: complex
    truncation_error: float


@dataclass(frozen=True)
class LtSumSeries:
    t: float
    grid: tuple[int, ...]
    sums: tuple[float, ...]


@dataclass(frozen=True)
class KappaEstimate:
    t: float
    s_hat: float
    slope_stderr: float
    grid: tuple[int, ...]


def truncation_depth(system: DigitSystem, xi_max: int, tol: float) -> int:
    """Smallest N whose neglected tail bound is <= tol for every |xi| <= xi_max."""
    if not tol > 0:
        raise DomainError(f"tol must be > 0, got {tol}")
    top = system.digits[-1]
    if xi_max == 0 or top == 0:
        return 0
    b = system.base
    scale = 2 * math.pi * xi_max * top / (b - 1)
    N = max(0, math.ceil(math.log(scale / math.log1p(tol), b)) - 1)
    while math.expm1(min(scale / float(b) ** N, 700.0)) > tol:
        N += 1
    return N


def tail_bound(system: DigitSystem, xi, N: int):
    top = system.digits[-1]
    b = system.base
    return np.expm1(2 * np.pi * np.abs(xi) * top / ((b - 1) * float(b) ** N))


def _arithmetic_progression(digits: Sequence[int]):
    if len(digits) < 2:
        return None
    step = digits[1] - digits[0]
    if all(digits[k + 1] - digits[k] == step for k in range(len(digits) - 1)):
        return digits[0], step, len(digits)
    return None


def _phi(system: DigitSystem, u: np.ndarray) -> np.ndarray:
    """phi at phases u in [0, 1)."""
    digits = system.digits
    prog = _arithmetic_progression(digits)
    if prog is None or len(digits) <= 8:
        d = np.asarray(digits, dtype=np.float64)
        return np.exp(-2j * np.pi * np.multiply.outer(u, d)).mean(axis=-1)
    d0, step, L = prog
    # geometric sum; reduce step*u to [-1/2, 1/2) so sin(pi w) keeps relative accuracy
    su = step * u
    w = su - np.rint(su)
    den = L * np.sin(np.pi * w)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(w == 0, 1.0, np.sin(np.pi * L * w) / np.where(w == 0, 1.0, den))
    return np.exp(-2j * np.pi * d0 * u) * np.exp(-1j * np.pi * (L - 1) * w) * ratio


def _product(system: DigitSystem, xis: np.ndarray, N: int) -> np.ndarray:
    b = system.base
    a = np.abs(xis)
    out = np.ones(xis.shape, dtype=np.complex128)
    power = 1
    for _ in range(N):
        power *= b
        if power < _INT64_SAFE:
            # exact fractional part of xi / b^i
            u = (a % power).astype(np.float64) / float(power)
        else:
            u = a.astype(np.float64) / float(power)
        out *= _phi(system, u)
    return np.where(xis < 0, np.conj(out), out)


def fourier_coefficients(
    system: DigitSystem, xis, tol: float = 1e-12, *, threads: int = 1, block: int = 1 << 14
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised m^(xi) over an integer array; returns (values, truncation_errors).

    Workers get contiguous index blocks and results are placed back by index, so
    output is independent of ``threads``.
    """
    xis = np.asarray(xis, dtype=np.int64)
    if xis.size == 0:
        return np.zeros(0, dtype=np.complex128), np.zeros(0)
    N = truncation_depth(system, int(np.abs(xis).max()), tol)
    values = np.empty(xis.shape, dtype=np.complex128)
    flat_x = xis.ravel()
    flat_v = values.reshape(-1)
    bounds = [(s, min(s + block, flat_x.size)) for s in range(0, flat_x.size, block)]

    def run(span):
        s, e = span
        flat_v[s:e] = _product(system, flat_x[s:e], N)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, bounds))
    else:
        for span in bounds:
            run(span)
    values[xis == 0] = 1.0
    errors = np.where(xis == 0, 0.0, tail_bound(system, xis, N))
    return values, errors


def fourier_coefficient(system: DigitSystem, xi: int, tol: float = 1e-12) -> FourierCoefficient:
    """m^(xi) by the truncated infinite product."""
    xi = int(xi)
    if not tol > 0:
        raise DomainError(f"tol must be > 0, got {tol}")
    if xi == 0:
        return FourierCoefficient(0, 1 + 0j, 0.0)
    values, errors = fourier_coefficients(system, [xi], tol)
    return FourierCoefficient(xi, complex(values[0]), float(errors[0]))


def lt_sum(
    system: DigitSystem, t: float, cutoffs: Sequence[int], tol: float = 1e-10, *, threads: int = 1
) -> LtSumSeries:
    """S(Q) = sum_{xi=0}^{Q} |m^(xi)|^t at each cutoff Q.

    Each S(Q) is an exactly rounded (math.fsum) sum of the ascending-xi terms.
    """
    if not t > 0:
        raise DomainError(f"t must be > 0, got {t}")
    cutoffs = [int(Q) for Q in cutoffs]
    if not cutoffs:
        return LtSumSeries(float(t), (), ())
    if cutoffs[0] < 0 or any(b <= a for a, b in zip(cutoffs, cutoffs[1:])):
        raise DomainError(f"cutoffs must be strictly increasing and >= 0, got {cutoffs}")
    q_max = cutoffs[-1]
    values, _ = fourier_coefficients(
        system, np.arange(q_max + 1), tol / (q_max + 1), threads=threads
    )
    terms = (np.abs(values) ** t).tolist()
    sums = []
    head = 0
    partial = []
    for Q in cutoffs:
        # exact partial of each increment, then an exact sum of the increments
        partial.append(math.fsum(terms[head : Q + 1]))
        head = Q + 1
        sums.append(math.fsum(partial))
    return LtSumSeries(float(t), tuple(cutoffs), tuple(sums))


def geometric_grid(start: int, factor: int, count: int) -> list[int]:
    if start < 1 or factor < 2 or count < 0:
        raise DomainError(f"bad geometric grid start={start} factor={factor} count={count}")
    return [start * factor**k for k in range(count)]


def estimate_kappa(series: LtSumSeries) -> KappaEstimate:
    """Least-squares slope of log S(Q) against log Q; s_hat = 1 - slope."""
    grid = np.asarray(series.grid, dtype=np.float64)
    sums = np.asarray(series.sums, dtype=np.float64)
    if grid.size < 4:
        raise DomainError(f"need at least 4 grid points, got {grid.size}")
    if grid.min() < 1:
        raise DomainError("grid cutoffs must be >= 1 for a log-log fit")
    if np.log10(grid.max() / grid.min()) < 2 - 1e-12:
        raise DomainError("grid must span at least two decades")
    if np.any(sums <= 0):
        raise DomainError("all sums must be positive")
    fit = stats.linregress(np.log(grid), np.log(sums))
    return KappaEstimate(series.t, 1.0 - float(fit.slope), float(fit.stderr), tuple(series.grid))


def divisor_count(xi: int) -> int:
    """Number of positive divisors of xi, by trial division up to sqrt(xi)."""
    xi = int(xi)
    if xi < 1:
        raise DomainError(f"divisor_count needs xi >= 1, got {xi}")
    count = 0
    r = math.isqrt(xi)
    for d in range(1, r + 1):
        if xi % d == 0:
            count += 2
    if r * r == xi:
        count -= 1
    return count


@dataclass(frozen=True)
class BaseVerdict:
    base: int
    s_hat: float
    slope_stderr: float
    passed: bool


def large_base_search(
    n: int,
    base_range: Sequence[int],
    grid: Sequence[int],
    margin: float = 0.0,
    *,
    t: float = 1.0,
    tol: float = 1e-10,
    missing: Callable[[int], int] | None = None,
    estimator: Callable[[DigitSystem], KappaEstimate] | None = None,
    threads: int = 1,
) -> list[BaseVerdict]:
    """Screen one-missing-digit bases b for s_hat - stderr > 1 - 1/(n+1) + margin.

    ``missing(b)`` picks the dropped digit (default b - 1). This is an empirical
    screen on a finite grid, not a certified bound.
    """
    if n < 1:
        raise DomainError(f"polynomial degree must be >= 1, got {n}")
    bases = list(base_range)
    if not bases:
        raise DomainError("empty base range")
    threshold = 1 - 1 / (n + 1) + margin
    if estimator is None:

        def estimator(system):
            return estimate_kappa(lt_sum(system, t, grid, tol, threads=threads))

    out = []
    for b in bases:
        system = DigitSystem.one_missing(b, None if missing is None else missing(b))
        est = estimator(system)
        out.append(BaseVerdict(b, est.s_hat, est.slope_stderr, est.s_hat - est.slope_stderr > threshold))
    return out


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_coefficients_csv(path, xis, values, errors):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["xi", "re", "im", "abs", "truncation_error"])
        for x, v, e in zip(xis, values, errors):
            w.writerow([int(x), _fmt(v.real), _fmt(v.imag), _fmt(abs(v)), _fmt(e)])


def write_series_csv(path, series: LtSumSeries):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["Q", "S"])
        for Q, S in zip(series.grid, series.sums):
            w.writerow([Q, _fmt(S)])
