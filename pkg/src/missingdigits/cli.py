"""Command-line front end: one subcommand per experiment.

Each run validates and resolves its config, computes every report in memory,
then writes ``<command>.manifest.json`` followed by the report files. Nothing is
written when validation or the computation fails.

Exit codes: 0 success, 1 validation failure, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, RunManifest, load_document, _psi
from .errors import ConfigError, DomainError, NumericalError
from .fourier import (
    LtSumSeries,
    estimate_kappa,
    fourier_coefficients,
    large_base_search,
    lt_sum,
)
from .harness import (
    baseline_csv_rows,
    choose_epsilon,
    delta_threshold,
    first_moment_bounds,
    lebesgue_baseline,
    lemma1_experiment,
    lemma2_check,
    psi_decay_condition,
    ratio_csv_rows,
    survivor_csv_rows,
    survivor_experiment,
    tail_csv_rows,
    tail_sum_experiment,
)

COMMANDS = ("fourier", "kappa", "lemma1", "lemma2", "tail", "survivor", "baseline", "base-search")


def _fmt(x) -> str:
    return f"{float(x):.12g}"


def _csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _finite(x):
    # JSON has no NaN/inf; write them as strings so the file stays standard
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


# --- resolution of v, epsilon and kappa_hat -------------------------------------------


def _kappa_estimate(cfg: RunConfig, threads: int):
    ks = cfg.kappa
    if ks.series is not None:
        grid, sums = ks.series
        series = LtSumSeries(ks.t, tuple(grid), tuple(sums))
    else:
        series = lt_sum(cfg.system, ks.t, ks.grid, ks.tol, threads=threads)
    return series, estimate_kappa(series)


def _resolve(cfg: RunConfig, lower: float, threads: int, *, eps_grid=None, need_v=True):
    """Fill in kappa_hat, v and (optionally) epsilon, recording how each was obtained."""
    resolved = {}
    kh = cfg.kappa_hat
    if kh is None and (cfg.v == "auto" or cfg.epsilon == "auto"):
        _, est = _kappa_estimate(cfg, threads)
        kh = est.s_hat
        resolved["kappa_source"] = {"t": est.t, "grid": list(est.grid), "slope_stderr": est.slope_stderr}
    v = cfg.v
    if v == "auto":
        if kh is None or not kh > lower:
            raise ConfigError(f"field 'v': auto needs kappa_hat > {lower}, got {kh}")
        v = (lower + kh) / 2
    if v is None and need_v:
        raise ConfigError("field 'v': required by this command (a number or \"auto\")")
    eps = cfg.epsilon
    if eps_grid is not None:
        if cfg.psi is None:
            raise ConfigError("field 'psi': required by this command")
        if eps is None:
            raise ConfigError("field 'epsilon': required by this command (a number or \"auto\")")
        if kh is None:
            raise ConfigError("field 'kappa_hat': required to validate epsilon")
        if eps == "auto":
            cert = choose_epsilon(v, cfg.polynomial.degree, kh, cfg.psi, eps_grid)
            eps = cert.epsilon
            resolved["epsilon_certificate"] = cert.lines()
        else:
            ok, C, _ = psi_decay_condition(cfg.psi, eps, eps_grid)
            if not ok:
                raise ConfigError(f"field 'epsilon': psi(Q) <= C Q^-(1+epsilon) fails for epsilon = {eps}")
    resolved.update({"v": v, "epsilon": eps, "kappa_hat": kh})
    return v, (None if eps_grid is None else eps), kh, resolved


def _pin(cfg: RunConfig, v, eps, kh) -> dict:
    """The config with every "auto" replaced by its resolved value."""
    out = cfg.to_dict()
    out["v"], out["kappa_hat"] = v, kh
    out["epsilon"] = eps if eps is not None else (None if cfg.epsilon == "auto" else cfg.epsilon)
    return out


# --- commands -------------------------------------------------------------------------
#
# Each returns (pinned config, resolved values, [(file name, content)]).


def cmd_fourier(cfg: RunConfig, threads: int):
    sec = cfg.section("fourier")
    start = sec.get("xi_start", 0)
    stop = sec.get("xi_stop", 10)
    if not all(isinstance(x, int) and not isinstance(x, bool) for x in (start, stop)) or stop < start:
        raise ConfigError("field 'fourier': xi_start <= xi_stop must be integers")
    xis = np.arange(start, stop + 1, dtype=np.int64)
    vals, errs = fourier_coefficients(cfg.system, xis, cfg.tol, threads=threads)
    rows = [["xi", "re", "im", "abs", "truncation_error"]]
    for x, v, e in zip(xis.tolist(), vals.tolist(), errs.tolist()):
        rows.append([x, _fmt(v.real), _fmt(v.imag), _fmt(abs(v)), _fmt(e)])
    return cfg.to_dict(), {}, [("coefficients.csv", _csv(rows))]


def cmd_kappa(cfg: RunConfig, threads: int):
    series, est = _kappa_estimate(cfg, threads)
    rows = [["Q", "S"]] + [[Q, _fmt(S)] for Q, S in zip(series.grid, series.sums)]
    report = {"t": est.t, "s_hat": est.s_hat, "slope_stderr": est.slope_stderr, "grid": list(est.grid)}
    return cfg.to_dict(), {"kappa_hat": est.s_hat}, [("kappa_series.csv", _csv(rows)), ("kappa.json", _json(report))]


def _ratio_summary(report) -> dict:
    i = report.argmax
    return {
        "C": _finite(report.C),
        "trend_slope": _finite(report.trend_slope),
        "argmax_Q": None if i is None else report.rows[i].Q,
        "max_in_first_half": report.max_in_first_half,
        "bounded": report.bounded,
    }


def _lemma_plan(cfg: RunConfig, threads: int):
    n = cfg.polynomial.degree
    need_v = cfg.delta_schedule == "threshold"
    if cfg.v is None and not need_v:
        v, kh, resolved = None, cfg.kappa_hat, {}
    else:
        v, _, kh, resolved = _resolve(cfg, 1 - 1 / n, threads, need_v=need_v)
    plan = cfg.plan(v=v, kappa_hat=kh)
    if v is not None:
        plan.check_lemma_range()
        th = delta_threshold(v, n, max(plan.Q_grid[0], 1) if plan.Q_grid else 1)
        resolved["u"] = th.u
        resolved["statement_exponent"] = th.statement_exponent
    resolved["deltas"] = [str(plan.delta(Q)) for Q in plan.Q_grid]
    return plan, v, kh, resolved


def cmd_lemma1(cfg: RunConfig, threads: int):
    plan, v, kh, resolved = _lemma_plan(cfg, threads)
    report = lemma1_experiment(plan, threads=threads)
    files = [("lemma1.csv", _csv(ratio_csv_rows(report))), ("lemma1_summary.json", _json(_ratio_summary(report)))]
    return _pin(cfg, v, None, kh), resolved, files


def cmd_lemma2(cfg: RunConfig, threads: int):
    plan, v, kh, resolved = _lemma_plan(cfg, threads)
    out = lemma2_check(plan, threads=threads)
    ineq = [["q", "delta", "m_B", "m_A", "holds"]]
    for r in out.rows:
        ineq.append([r.q, str(r.delta), _fmt(r.m_B), _fmt(r.m_A), int(r.holds)])
    summary = _ratio_summary(out.report)
    summary["violations"] = len(out.violations)
    files = [
        ("lemma2.csv", _csv(ratio_csv_rows(out.report))),
        ("lemma2_inequality.csv", _csv(ineq)),
        ("lemma2_summary.json", _json(summary)),
    ]
    return _pin(cfg, v, None, kh), resolved, files


def cmd_tail(cfg: RunConfig, threads: int):
    blocks = cfg.section("tail").get("blocks", 6)
    if not isinstance(blocks, int) or isinstance(blocks, bool) or blocks < 1:
        raise ConfigError("field 'tail.blocks': expected an integer >= 1")
    if not cfg.Q_grid:
        raise ConfigError("field 'Q_grid': the first entry is the first block start")
    Q0 = cfg.Q_grid[0]
    starts = [Q0 * 2**k for k in range(blocks)]
    n = cfg.polynomial.degree
    v, eps, kh, resolved = _resolve(cfg, 1 - 1 / (n + 1), threads, eps_grid=starts)
    plan = cfg.plan(v=v, epsilon=eps, kappa_hat=kh, Q_grid=[Q0])
    plan.check_theorem_range()
    report = tail_sum_experiment(plan, cfg.psi, blocks, threads=threads)
    summary = {
        "decay_exponent": _finite(report.decay_exponent),
        "epsilon": report.epsilon,
        "geometric_constant": report.geometric_constant,
        "strictly_decreasing": report.strictly_decreasing,
        "decays": report.decays,
        "block_starts": starts,
        "deltas": [str(r.delta) for r in report.rows],
    }
    files = [("tail.csv", _csv(tail_csv_rows(report))), ("tail_summary.json", _json(summary))]
    return _pin(cfg, v, eps, kh), resolved, files


def _q0_range(cfg: RunConfig, name: str, default_qmax: int):
    sec = cfg.section(name)
    Q0 = sec.get("Q0_grid", [1, 10, 100, 1000])
    Q_max = sec.get("Q_max", default_qmax)
    if not isinstance(Q0, list) or not Q0 or not all(isinstance(q, int) and q >= 1 for q in Q0):
        raise ConfigError(f"field '{name}.Q0_grid': expected a non-empty list of integers >= 1")
    if any(b <= a for a, b in zip(Q0, Q0[1:])):
        raise ConfigError(f"field '{name}.Q0_grid': must be strictly increasing")
    if not isinstance(Q_max, int) or Q_max < Q0[-1]:
        raise ConfigError(f"field '{name}.Q_max': expected an integer >= the largest Q0")
    return Q0, Q_max


def cmd_survivor(cfg: RunConfig, threads: int):
    if cfg.psi is None:
        raise ConfigError("field 'psi': required by this command")
    Q0, Q_max = _q0_range(cfg, "survivor", 10_000)
    sec = cfg.section("survivor")
    plan = cfg.plan(Q_grid=[], schedule="psi")
    try:
        cfg.psi.validate_monotone(range(Q0[0], Q_max + 1))
    except DomainError as exc:
        raise ConfigError(f"field 'psi': {exc}") from exc
    contrast = None
    if sec.get("contrast_psi") is not None:
        contrast = _psi(sec["contrast_psi"], "survivor.contrast_psi")
    rows = survivor_experiment(plan, cfg.psi, Q0, Q_max, threads=threads)
    files = [("survivor.csv", _csv(survivor_csv_rows(rows)))]
    if sec.get("first_moment", True):
        bounds = first_moment_bounds(plan.target, cfg.psi, Q0, Q_max, cfg.tol, threads=threads)
        mc = 4 / math.sqrt(cfg.sample_count)
        out = [["Q0", "fraction", "first_moment", "mc_error"]]
        for r, m in zip(rows, bounds):
            out.append([r.Q0, _fmt(r.fraction), _fmt(m), _fmt(mc)])
        files.append(("survivor_bounds.csv", _csv(out)))
    if contrast is not None:
        crows = survivor_experiment(plan, contrast, Q0, Q_max, threads=threads)
        files.append(("survivor_contrast.csv", _csv(survivor_csv_rows(crows))))
    return cfg.to_dict(), {}, files


def cmd_baseline(cfg: RunConfig, threads: int):
    if cfg.psi is None:
        raise ConfigError("field 'psi': required by this command")
    Q0, Q_max = _q0_range(cfg, "baseline", 100_000)
    if cfg.psi(Q0[0]) > 0.5:
        raise ConfigError(f"field 'psi': baseline needs psi(Q0) <= 1/2, got {cfg.psi(Q0[0])}")
    try:
        report = lebesgue_baseline(cfg.psi, cfg.polynomial, Q0, Q_max)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.to_dict(), {"convergent": report.convergent}, [("baseline.csv", _csv(baseline_csv_rows(report)))]


def cmd_base_search(cfg: RunConfig, threads: int):
    sec = cfg.section("base_search")
    n = sec.get("n", cfg.polynomial.degree)
    bases = sec.get("bases", {"start": 3, "stop": 20})
    if isinstance(bases, dict):
        if set(bases) - {"start", "stop"}:
            raise ConfigError("field 'base_search.bases': expected {start, stop} or a list")
        bases = list(range(bases.get("start", 3), bases.get("stop", 20) + 1))
    if not isinstance(bases, list) or not all(isinstance(b, int) and b >= 2 for b in bases):
        raise ConfigError("field 'base_search.bases': expected integers >= 2")
    margin = sec.get("margin", 0.0)
    missing = sec.get("missing")
    if missing is not None and not (isinstance(missing, int) and missing >= 0):
        raise ConfigError("field 'base_search.missing': expected a digit or null (drop b - 1)")
    if missing is not None and any(missing >= b for b in bases):
        raise ConfigError("field 'base_search.missing': digit not below every base")
    verdicts = large_base_search(
        n, bases, cfg.kappa.grid, margin, t=cfg.kappa.t, tol=cfg.kappa.tol,
        missing=None if missing is None else (lambda b: missing), threads=threads,
    )
    rows = [["base", "s_hat", "slope_stderr", "passes"]]
    for r in verdicts:
        rows.append([r.base, _fmt(r.s_hat), _fmt(r.slope_stderr), int(r.passed)])
    smallest = next((r.base for r in verdicts if r.passed), None)
    return cfg.to_dict(), {"threshold": 1 - 1 / (n + 1) + margin, "smallest_passing_base": smallest}, [
        ("base_search.csv", _csv(rows))
    ]


_DISPATCH = {
    "fourier": cmd_fourier,
    "kappa": cmd_kappa,
    "lemma1": cmd_lemma1,
    "lemma2": cmd_lemma2,
    "tail": cmd_tail,
    "survivor": cmd_survivor,
    "baseline": cmd_baseline,
    "base-search": cmd_base_search,
}


def run(command: str, config_path, out=None, threads: int = 1, seed: int | None = None) -> RunManifest:
    """Run one subcommand; returns the manifest after writing all files."""
    raw, manifest_command = load_document(config_path)
    if manifest_command is not None and manifest_command != command:
        raise ConfigError(f"manifest was written by '{manifest_command}', not '{command}'")
    if isinstance(raw, dict) and seed is not None:
        raw = dict(raw, seed=seed)
    cfg = RunConfig.from_dict(raw)
    if threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {threads}")
    started = datetime.now(timezone.utc).isoformat()
    pinned, resolved, files = _DISPATCH[command](cfg, threads)
    finished = datetime.now(timezone.utc).isoformat()
    out_dir = Path(out if out is not None else cfg.output)
    pinned["output"] = str(out_dir)
    manifest = RunManifest(command, pinned, {k: _finite(v) for k, v in resolved.items()},
                           __version__, started, finished, [name for name, _ in files])
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{command}.manifest.json").write_text(_json(manifest.to_dict()))
    for name, content in files:
        (out_dir / name).write_text(content)
    return manifest


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="missingdigits", description="Missing digit measure experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON config or a manifest from an earlier run")
        s.add_argument("--out", default=None, help="output directory (default: the config's 'output')")
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = run(args.command, args.config, args.out, args.threads, args.seed)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DomainError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    print(f"{args.command}: wrote {len(manifest.outputs)} report(s) to {manifest.config['output']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
