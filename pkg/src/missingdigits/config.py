"""Run configurations and manifests for the command-line front end.

A config is one JSON document. Rationals are "num/den" strings (or integers),
never floats, so every delta and psi parameter is exact. A manifest wraps the
fully resolved config (no "auto" left) and can be fed back as a config.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

from .diophantine import ApproxTarget, IntegerPolynomial
from .errors import ConfigError, MissingDigitsError
from .fourier import geometric_grid
from .harness import ExperimentPlan, PsiFunction
from .measure import DigitSystem, MissingDigitMeasure

MANIFEST_FORMAT = "missingdigits-manifest/1"

_TOP_KEYS = {
    "system", "dimension", "polynomial", "psi", "v", "epsilon", "kappa_hat", "kappa",
    "Q_grid", "delta_schedule", "tol", "seed", "sample_count", "sample_depth", "output",
    "fourier", "tail", "survivor", "baseline", "base_search",
}
_SECTION_KEYS = {
    "kappa": {"t", "grid", "tol", "series"},
    "fourier": {"xi_start", "xi_stop"},
    "tail": {"blocks"},
    "survivor": {"Q0_grid", "Q_max", "first_moment", "contrast_psi"},
    "baseline": {"Q0_grid", "Q_max"},
    "base_search": {"n", "bases", "margin", "missing"},
}


def _fail(path: str, msg: str):
    raise ConfigError(f"field '{path}': {msg}")


def _int(obj, path, lo=None):
    if isinstance(obj, bool) or not isinstance(obj, int):
        _fail(path, f"expected an integer, got {obj!r}")
    if lo is not None and obj < lo:
        _fail(path, f"must be >= {lo}, got {obj}")
    return obj


def _real(obj, path, positive=False):
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        _fail(path, f"expected a number, got {obj!r}")
    x = float(obj)
    if not math.isfinite(x) or (positive and x <= 0):
        _fail(path, f"must be a finite{' positive' if positive else ''} number, got {obj!r}")
    return x


def _rational(obj, path) -> Fraction:
    if isinstance(obj, bool) or isinstance(obj, float):
        _fail(path, f"rationals are written as \"num/den\" strings or integers, got {obj!r}")
    if isinstance(obj, int):
        return Fraction(obj)
    if isinstance(obj, str):
        try:
            return Fraction(obj.strip())
        except (ValueError, ZeroDivisionError):
            _fail(path, f"cannot parse rational {obj!r}")
    _fail(path, f"expected a rational, got {obj!r}")


def _auto_or_real(obj, path):
    if obj is None or obj == "auto":
        return obj
    return _real(obj, path)


def _grid(obj, path) -> list[int]:
    """Either an explicit increasing list or {"start", "factor", "count"}."""
    if isinstance(obj, list):
        vals = [_int(v, f"{path}[{i}]", 1) for i, v in enumerate(obj)]
        if any(b <= a for a, b in zip(vals, vals[1:])):
            _fail(path, "must be strictly increasing")
        return vals
    if isinstance(obj, dict):
        extra = set(obj) - {"start", "factor", "count"}
        if extra:
            _fail(path, f"unknown keys {sorted(extra)}")
        start = _int(obj.get("start"), f"{path}.start", 1)
        factor = _int(obj.get("factor", 2), f"{path}.factor", 2)
        count = _int(obj.get("count"), f"{path}.count", 0)
        return geometric_grid(start, factor, count)
    _fail(path, "expected a list of integers or {start, factor, count}")


def _grid_to_config(grid: list[int]):
    return list(grid)


def _psi(obj, path) -> PsiFunction:
    if not isinstance(obj, dict):
        _fail(path, "expected an object with a 'kind'")
    kind = obj.get("kind")
    try:
        if kind == "table":
            values = obj.get("values")
            if not isinstance(values, list):
                _fail(f"{path}.values", "expected a list of rationals")
            conv = obj.get("convergent")
            if not isinstance(conv, bool):
                _fail(f"{path}.convergent", "a table must declare convergent: true/false")
            return PsiFunction(
                "table",
                table=tuple(_rational(v, f"{path}.values[{i}]") for i, v in enumerate(values)),
                declared_convergent=conv,
            )
        extra = set(obj) - {"kind", "c", "a"}
        if extra:
            _fail(path, f"unknown keys {sorted(extra)}")
        return PsiFunction(kind, c=_rational(obj.get("c", 1), f"{path}.c"), a=_rational(obj.get("a", 0), f"{path}.a"))
    except ConfigError:
        raise
    except MissingDigitsError as exc:
        _fail(path, str(exc))


@dataclass
class KappaSpec:
    t: float = 1.0
    grid: list[int] = field(default_factory=lambda: geometric_grid(64, 2, 13))
    tol: float = 1e-10
    series: tuple[list[int], list[float]] | None = None

    def to_config(self) -> dict:
        out: dict[str, Any] = {"t": self.t, "grid": _grid_to_config(self.grid), "tol": self.tol}
        if self.series is not None:
            out["series"] = {"grid": list(self.series[0]), "sums": list(self.series[1])}
        return out


@dataclass
class RunConfig:
    """Every input of one run; ``from_dict`` re-validates all type invariants."""

    system: DigitSystem
    dimension: int = 1
    polynomial: IntegerPolynomial = IntegerPolynomial((0, 1))
    psi: PsiFunction | None = None
    v: float | str | None = None
    epsilon: float | str | None = None
    kappa_hat: float | None = None
    kappa: KappaSpec = field(default_factory=KappaSpec)
    Q_grid: list[int] = field(default_factory=list)
    delta_schedule: str = "threshold"
    tol: float = 1e-10
    seed: int = 0
    sample_count: int = 10_000
    sample_depth: int = 40
    output: str = "results"
    sections: dict[str, dict] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(obj) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown top-level fields {sorted(unknown)}")
        if "system" not in obj:
            raise ConfigError("field 'system': required")
        try:
            system = DigitSystem.from_config(obj["system"])
        except (MissingDigitsError, TypeError, KeyError) as exc:
            _fail("system", str(exc))
        dimension = _int(obj.get("dimension", 1), "dimension", 1)
        coeffs = obj.get("polynomial", [0, 1])
        if not isinstance(coeffs, list):
            _fail("polynomial", "expected a coefficient list, constant term first")
        try:
            poly = IntegerPolynomial(tuple(_int(c, f"polynomial[{i}]") for i, c in enumerate(coeffs)))
        except ConfigError:
            raise
        except MissingDigitsError as exc:
            _fail("polynomial", str(exc))
        psi = _psi(obj["psi"], "psi") if obj.get("psi") is not None else None
        v = _auto_or_real(obj.get("v"), "v")
        eps = _auto_or_real(obj.get("epsilon"), "epsilon")
        kh = obj.get("kappa_hat")
        kh = None if kh is None else _real(kh, "kappa_hat")

        ks = obj.get("kappa") or {}
        if not isinstance(ks, dict):
            _fail("kappa", "expected an object")
        extra = set(ks) - _SECTION_KEYS["kappa"]
        if extra:
            _fail("kappa", f"unknown keys {sorted(extra)}")
        kappa = KappaSpec()
        if "t" in ks:
            kappa.t = _real(ks["t"], "kappa.t", positive=True)
        if "grid" in ks:
            kappa.grid = _grid(ks["grid"], "kappa.grid")
        if "tol" in ks:
            kappa.tol = _real(ks["tol"], "kappa.tol", positive=True)
        if ks.get("series") is not None:
            s = ks["series"]
            if not isinstance(s, dict) or not isinstance(s.get("grid"), list) or not isinstance(s.get("sums"), list):
                _fail("kappa.series", "expected {grid: [...], sums: [...]}")
            g = [_int(x, f"kappa.series.grid[{i}]", 0) for i, x in enumerate(s["grid"])]
            sums = [_real(x, f"kappa.series.sums[{i}]") for i, x in enumerate(s["sums"])]
            if len(g) != len(sums):
                _fail("kappa.series", "grid and sums differ in length")
            kappa.series = (g, sums)

        Q_grid = _grid(obj.get("Q_grid", []), "Q_grid")
        schedule = obj.get("delta_schedule", "threshold")
        if not isinstance(schedule, str):
            _fail("delta_schedule", "expected \"threshold\", \"psi\" or \"fixed:<rational>\"")
        if schedule.startswith("fixed:"):
            _rational(schedule[len("fixed:"):], "delta_schedule")
        elif schedule not in ("threshold", "psi"):
            _fail("delta_schedule", f"unknown schedule {schedule!r}")
        if schedule == "psi" and psi is None:
            _fail("delta_schedule", "the psi schedule needs a 'psi' field")

        sections = {}
        for name in ("fourier", "tail", "survivor", "baseline", "base_search"):
            sec = obj.get(name)
            if sec is None:
                continue
            if not isinstance(sec, dict):
                _fail(name, "expected an object")
            extra = set(sec) - _SECTION_KEYS[name]
            if extra:
                _fail(name, f"unknown keys {sorted(extra)}")
            sections[name] = dict(sec)

        out = obj.get("output", "results")
        if not isinstance(out, str) or not out:
            _fail("output", "expected a directory path")
        return cls(
            system=system,
            dimension=dimension,
            polynomial=poly,
            psi=psi,
            v=v,
            epsilon=eps,
            kappa_hat=kh,
            kappa=kappa,
            Q_grid=Q_grid,
            delta_schedule=schedule,
            tol=_real(obj.get("tol", 1e-10), "tol", positive=True),
            seed=_int(obj.get("seed", 0), "seed", 0),
            sample_count=_int(obj.get("sample_count", 10_000), "sample_count", 1),
            sample_depth=_int(obj.get("sample_depth", 40), "sample_depth", 1),
            output=out,
            sections=sections,
        )

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "system": self.system.to_config(),
            "dimension": self.dimension,
            "polynomial": list(self.polynomial.coefficients),
            "psi": None if self.psi is None else self.psi.to_config(),
            "v": self.v,
            "epsilon": self.epsilon,
            "kappa_hat": self.kappa_hat,
            "kappa": self.kappa.to_config(),
            "Q_grid": _grid_to_config(self.Q_grid),
            "delta_schedule": self.delta_schedule,
            "tol": self.tol,
            "seed": self.seed,
            "sample_count": self.sample_count,
            "sample_depth": self.sample_depth,
            "output": self.output,
        }
        out.update({k: dict(v) for k, v in self.sections.items()})
        return out

    # helpers used by the commands

    def section(self, name: str) -> dict:
        return self.sections.get(name, {})

    def target(self) -> ApproxTarget:
        return ApproxTarget(MissingDigitMeasure(self.system, self.dimension), self.polynomial)

    def plan(self, *, v=None, epsilon=None, kappa_hat=None, Q_grid=None, schedule=None) -> ExperimentPlan:
        try:
            return ExperimentPlan(
                target=self.target(),
                Q_grid=self.Q_grid if Q_grid is None else Q_grid,
                delta_schedule=self.delta_schedule if schedule is None else schedule,
                v=v,
                epsilon=epsilon,
                kappa_hat=kappa_hat,
                psi=self.psi,
                tol=self.tol,
                seed=self.seed,
                sample_count=self.sample_count,
                sample_depth=self.sample_depth,
            )
        except ConfigError:
            raise
        except MissingDigitsError as exc:
            raise ConfigError(f"plan: {exc}") from exc


@dataclass
class RunManifest:
    command: str
    config: dict
    resolved: dict
    version: str
    started: str
    finished: str
    outputs: list[str]

    def to_dict(self) -> dict:
        return {
            "format": MANIFEST_FORMAT,
            "command": self.command,
            "version": self.version,
            "started": self.started,
            "finished": self.finished,
            "resolved": self.resolved,
            "outputs": list(self.outputs),
            "config": self.config,
        }


def load_document(path) -> tuple[dict, str | None]:
    """Parse a config or manifest file; returns (config dict, manifest command or None)."""
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if isinstance(obj, dict) and obj.get("format") == MANIFEST_FORMAT:
        if not isinstance(obj.get("config"), dict):
            raise ConfigError("manifest has no 'config' object")
        return obj["config"], obj.get("command")
    return obj, None
