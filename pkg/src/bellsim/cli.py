"""Command-line runner for the five studies.

Each run writes ``report.json`` (config echo, per-point results, theory
references, checks) and ``points.csv`` into ``--out``. Exit status is 0 when
every check passes, 1 when a check fails and 2 for configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__, kernels, qstate
from .chain import (
    build_branches,
    decoherence_scan_point,
    loglog_slope,
    reduced_density_dense_oracle,
    reduced_density_structured,
)
from .correlate import (
    MIN_CHSH_TRIALS,
    chsh_combine,
    chsh_pairs,
    correlation,
    nosignal_audit,
    sample_trials,
    trial_key,
)
from .detector import make_array, parse_dist

SCHEMA_VERSION = "1.0"
STUDIES = ("correlate", "decohere-scan", "chsh", "nosignal", "oracle-check")

CORRELATION_SIGMAS = 4.0
CHSH_SIGMAS = 4.0
SLOPE_TARGET, SLOPE_TOL = -4.0, 0.3
F2_REL_TOL = 0.10
ORACLE_TOL = 1e-12

CSV_COLUMNS = {
    "correlate": ["theta_a", "theta_b", "theta_rel", "n", "estimate", "stderr", "theory", "p_similar", "sigmas", "pass"],
    "decohere-scan": ["M", "n_seeds", "median_offdiag", "mean_abs_f2", "expected_abs_f2", "f2_rel_error", "pass"],
    "chsh": ["pair", "sign", "theta_a", "theta_b", "n", "estimate", "stderr", "theory"],
    "nosignal": ["station", "theta_fixed", "theta_varied", "n", "freq_plus", "stderr", "sigmas_from_half"],
    "oracle-check": ["M", "theta", "seed", "K", "max_deviation", "hermitian_error", "trace_error", "min_eigenvalue", "valid", "pass"],
}


class ConfigError(ValueError):
    """Invalid experiment configuration (exit status 2)."""


_ANGLE = re.compile(
    r"(?P<sign>[+-]?)\s*(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\s*\*?\s*"
    r"(?P<pi>pi|π)?\s*(?:/\s*(?P<den>\d+\.?\d*))?"
)


def parse_angle(text: str | float) -> float:
    """Radians from ``"0.3"``, ``"pi"``, ``"pi/8"``, ``"3pi/8"``, ``"-3*pi/4"``..."""
    if isinstance(text, (int, float)):
        value = float(text)
    else:
        m = _ANGLE.fullmatch(text.strip().lower())
        if m is None or (m["num"] is None and m["pi"] is None):
            raise ConfigError(f"cannot parse angle {text!r}")
        value = float(m["num"]) if m["num"] else 1.0
        if m["pi"]:
            value *= math.pi
        if m["den"]:
            value /= float(m["den"])
        if m["sign"] == "-":
            value = -value
    if not math.isfinite(value):
        raise ConfigError(f"angle must be finite, got {text!r}")
    return value


def parse_angle_list(text: str | list) -> tuple[float, ...]:
    items = text if isinstance(text, list) else [t for t in str(text).split(",") if t.strip()]
    return tuple(parse_angle(t) for t in items)


def parse_grid(text: str | list) -> tuple[float, ...]:
    """``start:stop:count`` (inclusive, evenly spaced) or a comma list."""
    if isinstance(text, list):
        return parse_angle_list(text)
    parts = str(text).split(":")
    if len(parts) == 1:
        return parse_angle_list(text)
    if len(parts) != 3:
        raise ConfigError(f"theta grid must be start:stop:count, got {text!r}")
    try:
        count = int(parts[2])
    except ValueError:
        raise ConfigError(f"grid count must be an integer, got {parts[2]!r}") from None
    if count < 1:
        raise ConfigError("grid count must be at least 1")
    start, stop = parse_angle(parts[0]), parse_angle(parts[1])
    return tuple(float(x) for x in np.linspace(start, stop, count))


def parse_int_list(text: str | int | list) -> tuple[int, ...]:
    if isinstance(text, int):
        return (text,)
    items = text if isinstance(text, list) else str(text).split(",")
    try:
        return tuple(int(x) for x in items)
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


@dataclasses.dataclass
class ExperimentConfig:
    study: str
    seed: int = 0
    M: tuple[int, ...] = (8,)
    dist: str = "uniform"
    theta_grid: tuple[float, ...] = ()
    n_trials: int = 100_000
    seeds: int = 1
    theta_fixed: float = 0.0
    settings: tuple[float, ...] = ()
    dense_cap: int = qstate.DENSE_CAP

    def validate(self) -> ExperimentConfig:
        if self.study not in STUDIES:
            raise ConfigError(f"unknown study {self.study!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if not self.M or any(m < 1 for m in self.M):
            raise ConfigError("M values must be >= 1")
        if self.study in ("correlate", "chsh", "nosignal") and len(self.M) not in (1, 4):
            raise ConfigError("--M takes one value or four (LV, LH, RV, RH)")
        try:
            parse_dist(self.dist, 2)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.n_trials < 1:
            raise ConfigError("n must be >= 1")
        if self.seeds < 1:
            raise ConfigError("seeds must be >= 1")
        angles = self.theta_grid + self.settings + (self.theta_fixed,)
        if not all(math.isfinite(t) for t in angles):
            raise ConfigError("angles must be finite")
        if self.study != "chsh" and not self.theta_grid:
            raise ConfigError("theta grid is empty")
        if self.study == "chsh":
            if len(self.settings) != 4:
                raise ConfigError("chsh needs four settings a,a',b,b'")
            if self.n_trials < MIN_CHSH_TRIALS:
                raise ConfigError(f"chsh needs n >= {MIN_CHSH_TRIALS} per setting pair")
        if self.study == "nosignal" and len(self.theta_grid) < 2:
            raise ConfigError("nosignal needs at least two remote settings")
        return self

    def echo(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @property
    def detector_dims(self) -> int | tuple[int, ...]:
        return self.M[0] if len(self.M) == 1 else self.M


STUDY_DEFAULTS: dict[str, dict[str, Any]] = {
    "correlate": {"theta_grid": "0:pi/2:9"},
    "decohere-scan": {"M": "2,4,8,16,32", "seeds": 1000, "theta_grid": "0"},
    "chsh": {"settings": "0,pi/4,pi/8,3pi/8"},
    "nosignal": {"theta_grid": "0:pi/2:5"},
    "oracle-check": {"M": "1,2,3", "theta_grid": "0,pi/8,pi/4", "seeds": 20},
}

_PARSERS = {
    "seed": int,
    "M": parse_int_list,
    "dist": str,
    "theta_grid": parse_grid,
    "n_trials": int,
    "seeds": int,
    "theta_fixed": parse_angle,
    "settings": parse_angle_list,
    "dense_cap": int,
}
_ALIASES = {"n": "n_trials", "theta": "theta_grid", "theta-grid": "theta_grid"}


def build_config(study: str, file_values: dict[str, Any], flag_values: dict[str, Any]) -> ExperimentConfig:
    """Merge study defaults, a config file and command-line flags (in that order)."""
    raw: dict[str, Any] = dict(STUDY_DEFAULTS.get(study, {}))
    for source in (file_values, flag_values):
        for k, v in source.items():
            if v is None:
                continue
            k = _ALIASES.get(k, k).replace("-", "_")
            if k not in _PARSERS:
                raise ConfigError(f"unknown config key {k!r}")
            raw[k] = v
    values = {}
    for k, v in raw.items():
        try:
            values[k] = _PARSERS[k](v)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {k}: {v!r} ({exc})") from None
    return ExperimentConfig(study=study, **values).validate()


def _pmap(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def _check(name: str, passed: bool, value: float, threshold: float | str) -> dict[str, Any]:
    return {"name": name, "passed": bool(passed), "value": value, "threshold": threshold}


def _correlate_task(cfg: ExperimentConfig, task):
    i, theta = task
    dets = make_array(cfg.seed, cfg.detector_dims, cfg.dist)
    ta, tb = cfg.theta_fixed, cfg.theta_fixed + theta
    return correlation(sample_trials(ta, tb, dets, cfg.n_trials, trial_key(cfg.seed, i)))


def run_correlate(cfg: ExperimentConfig, workers: int):
    estimates = _pmap(partial(_correlate_task, cfg), list(enumerate(cfg.theta_grid)), workers)
    points, checks = [], []
    for e in estimates:
        ok = e.sigmas() < CORRELATION_SIGMAS
        points.append({
            "theta_a": e.theta_a, "theta_b": e.theta_b, "theta_rel": e.theta_rel, "n": e.n_trials,
            "estimate": e.mean_product, "stderr": e.std_error, "theory": e.theory,
            "p_similar": e.p_similar, "sigmas": _finite(e.sigmas()), "pass": ok,
        })
        checks.append(_check(f"C({e.theta_rel:.6f}) within {CORRELATION_SIGMAS:g} sigma", ok,
                             _finite(e.sigmas()), CORRELATION_SIGMAS))
    return points, {}, checks


def _scan_task(cfg: ExperimentConfig, M: int):
    point, _, _ = decoherence_scan_point(M, cfg.seeds, cfg.seed, cfg.dist, cfg.theta_grid[0])
    return point


def run_decohere_scan(cfg: ExperimentConfig, workers: int):
    scan = _pmap(partial(_scan_task, cfg), list(cfg.M), workers)
    points, checks = [], []
    for p in scan:
        rel = abs(p.mean_abs_f2 - p.expected_abs_f2) / p.expected_abs_f2
        ok = rel < F2_REL_TOL
        points.append({**dataclasses.asdict(p), "f2_rel_error": rel, "pass": ok})
        checks.append(_check(f"E|f|^2 at M={p.M} within {F2_REL_TOL:.0%}", ok, rel, F2_REL_TOL))
    summary: dict[str, Any] = {"theta_rel": cfg.theta_grid[0]}
    medians = [p.median_offdiag for p in scan]
    if len(scan) >= 2 and all(m > 0 for m in medians):
        slope = loglog_slope([p.M for p in scan], medians)
        summary["loglog_slope"] = slope
        checks.append(_check("log-log slope of median |offdiag| vs M",
                             abs(slope - SLOPE_TARGET) <= SLOPE_TOL, slope,
                             f"{SLOPE_TARGET:g} +/- {SLOPE_TOL:g}"))
    return points, summary, checks


def _chsh_task(cfg: ExperimentConfig, task):
    i, (ta, tb) = task
    dets = make_array(cfg.seed, cfg.detector_dims, cfg.dist)
    return correlation(sample_trials(ta, tb, dets, cfg.n_trials, trial_key(cfg.seed, i)))


def run_chsh(cfg: ExperimentConfig, workers: int):
    pairs = chsh_pairs(cfg.settings)
    estimates = _pmap(partial(_chsh_task, cfg), list(enumerate(pairs)), workers)
    res = chsh_combine(cfg.settings, estimates)
    labels = ("a,b", "a,b'", "a',b", "a',b'")
    signs = (1, -1, 1, 1)
    points = [
        {"pair": lab, "sign": s, "theta_a": e.theta_a, "theta_b": e.theta_b, "n": e.n_trials,
         "estimate": e.mean_product, "stderr": e.std_error, "theory": e.theory}
        for lab, s, e in zip(labels, signs, estimates)
    ]
    dev = abs(res.S - res.theory) / res.std_error if res.std_error > 0 else abs(res.S - res.theory)
    summary = {
        "S": res.S, "stderr": res.std_error, "theory": res.theory,
        "abs_S": abs(res.S), "violates_classical_bound": res.violates_classical,
    }
    checks = [_check(f"S within {CHSH_SIGMAS:g} sigma of theory", dev < CHSH_SIGMAS, dev, CHSH_SIGMAS)]
    return points, summary, checks


def _nosignal_task(cfg: ExperimentConfig, task):
    station, i, theta = task
    dets = make_array(cfg.seed, cfg.detector_dims, cfg.dist)
    if station == "L":
        ta, tb, key = cfg.theta_fixed, theta, trial_key(cfg.seed, i)
    else:
        ta, tb, key = theta, cfg.theta_fixed, trial_key(cfg.seed, len(cfg.theta_grid) + i)
    return sample_trials(ta, tb, dets, cfg.n_trials, key)


def run_nosignal(cfg: ExperimentConfig, workers: int):
    tasks = [(s, i, t) for s in ("L", "R") for i, t in enumerate(cfg.theta_grid)]
    batches = _pmap(partial(_nosignal_task, cfg), tasks, workers)
    n = len(cfg.theta_grid)
    points, checks, summary = [], [], {}
    for station, group in (("L", batches[:n]), ("R", batches[n:])):
        rep = nosignal_audit(group, station)
        for g in rep.groups:
            points.append({
                "station": station, "theta_fixed": g.theta_fixed, "theta_varied": g.theta_varied,
                "n": g.n, "freq_plus": g.frequency_plus, "stderr": g.std_error,
                "sigmas_from_half": g.sigmas_from_half,
            })
        summary[station] = {"max_pair_sigmas": rep.max_pair_sigmas, "max_sigmas_from_half": rep.max_sigmas_from_half}
        checks.append(_check(f"station {station} marginal independent of remote setting",
                             rep.passed, max(rep.max_pair_sigmas, rep.max_sigmas_from_half), rep.sigmas))
    return points, summary, checks


def _oracle_task(cfg: ExperimentConfig, task):
    M, theta, seed = task
    branches = build_branches(theta)
    dets = make_array(seed, M, cfg.dist)
    s = reduced_density_structured(branches, dets)
    o = reduced_density_dense_oracle(branches, dets, cap=cfg.dense_cap)
    dev = float(np.max(np.abs(s.entries - o.entries)))
    row = {"M": M, "theta": theta, "seed": seed, "K": s.K, "max_deviation": dev}
    valid = True
    for rho in (s, o):
        dm = rho.as_density_matrix()
        row["hermitian_error"] = max(row.get("hermitian_error", 0.0), dm.hermitian_error())
        row["trace_error"] = max(row.get("trace_error", 0.0), abs(dm.trace() - 1.0))
        row["min_eigenvalue"] = min(row.get("min_eigenvalue", 1.0), float(dm.eigenvalues()[0]))
        try:
            rho.validate(branches)
        except qstate.InvalidStateError:
            valid = False
    row["valid"] = valid
    row["pass"] = dev <= ORACLE_TOL and valid
    return row, s.diagonal


def run_oracle_check(cfg: ExperimentConfig, workers: int):
    for M in cfg.M:
        n = (2 * M) ** 8
        if n > cfg.dense_cap:
            raise ConfigError(
                f"oracle for M={M} needs {n} dense entries, above the dense cap of {cfg.dense_cap}"
            )
    tasks = [(M, t, cfg.seed + s) for M in cfg.M for t in cfg.theta_grid for s in range(cfg.seeds)]
    results = _pmap(partial(_oracle_task, cfg), tasks, workers)
    points = [r for r, _ in results]
    worst = max(p["max_deviation"] for p in points)
    diag_spread = 0.0
    for t in cfg.theta_grid:
        diags = [d for (M, th, _), (_, d) in zip(tasks, results) if th == t]
        diag_spread = max(diag_spread, float(np.max(np.ptp(np.array(diags), axis=0))))
    checks = [
        _check("max entrywise |dense - structured|", worst <= ORACLE_TOL, worst, ORACLE_TOL),
        _check("reduced matrices Hermitian, unit trace, PSD, Born diagonal",
               all(p["valid"] for p in points), sum(not p["valid"] for p in points), 0),
        _check("diagonals independent of detectors", diag_spread <= ORACLE_TOL, diag_spread, ORACLE_TOL),
    ]
    return points, {"max_deviation": worst}, checks


RUNNERS = {
    "correlate": run_correlate,
    "decohere-scan": run_decohere_scan,
    "chsh": run_chsh,
    "nosignal": run_nosignal,
    "oracle-check": run_oracle_check,
}


def _finite(x: float) -> float | None:
    return x if math.isfinite(x) else None


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return _finite(float(x))
    return x


def run(cfg: ExperimentConfig, workers: int = 1) -> dict[str, Any]:
    """Execute a study and return its report (no files written)."""
    points, summary, checks = RUNNERS[cfg.study](cfg, workers)
    return _plain({
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "study": cfg.study,
        "config": cfg.echo(),
        "csv_columns": CSV_COLUMNS[cfg.study],
        "points": points,
        "summary": summary,
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
    })


def report_json(report: dict[str, Any]) -> str:
    return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def points_csv(report: dict[str, Any]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=report["csv_columns"], lineterminator="\n")
    writer.writeheader()
    for p in report["points"]:
        writer.writerow({k: ("" if p[k] is None else p[k]) for k in report["csv_columns"]})
    return buf.getvalue()


def write_outputs(report: dict[str, Any], out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report_json(report), encoding="utf-8")
    (out / "points.csv").write_text(points_csv(report), encoding="utf-8")


def _summary_lines(report: dict[str, Any]) -> list[str]:
    lines = []
    study, s = report["study"], report["summary"]
    if study == "oracle-check":
        verdict = "PASS" if report["checks"][0]["passed"] else "FAIL"
        lines.append(f"max entrywise deviation {s['max_deviation']:.1e} ≤ {ORACLE_TOL:g}, {verdict}")
    elif study == "chsh":
        flag = " (exceeds classical bound 2)" if s["violates_classical_bound"] else ""
        lines.append(f"S = {s['S']:.4f} +/- {s['stderr']:.4f}, theory {s['theory']:.4f}{flag}")
    elif study == "decohere-scan" and "loglog_slope" in s:
        lines.append(f"log-log slope {s['loglog_slope']:.3f}")
    for c in report["checks"]:
        lines.append(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['name']}: {c['value']} (threshold {c['threshold']})")
    return lines


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file of config values; flags override it")
    common.add_argument("--seed", help="experiment seed (64-bit unsigned)")
    common.add_argument("--M", help="internal dimension(s), comma separated")
    common.add_argument("--dist", help="uniform or gibbs:<beta>")
    common.add_argument("--n", dest="n_trials", help="trials per setting")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1)

    parser = argparse.ArgumentParser(prog="bellsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({kernels.BACKEND} kernels)")
    sub = parser.add_subparsers(dest="study", required=True)

    p = sub.add_parser("correlate", parents=[common], help="C(theta) over a grid of relative angles")
    p.add_argument("--theta-grid", help="start:stop:count or comma list of relative angles")
    p.add_argument("--theta-a", dest="theta_fixed", help="left setting (default 0)")

    p = sub.add_parser("decohere-scan", parents=[common], help="off-diagonal suppression vs M")
    p.add_argument("--seeds", help="detector arrays per M")
    p.add_argument("--theta", dest="theta_grid", help="relative angle (default 0)")

    p = sub.add_parser("chsh", parents=[common], help="CHSH statistic S")
    p.add_argument("--settings", help="a,a',b,b' (default 0,pi/4,pi/8,3pi/8)")

    p = sub.add_parser("nosignal", parents=[common], help="marginals vs remote setting, both stations")
    p.add_argument("--theta-grid", help="remote settings")
    p.add_argument("--theta-fixed", help="local setting held fixed (default 0)")

    p = sub.add_parser("oracle-check", parents=[common], help="structured vs dense reduced matrices")
    p.add_argument("--theta", dest="theta_grid", help="comma list of relative angles")
    p.add_argument("--seeds", help="number of consecutive seeds starting at --seed")
    p.add_argument("--dense-cap", help="max dense entries for the oracle")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("study", "config", "out", "workers")}
    try:
        file_values = {}
        if args.config is not None:
            try:
                file_values = json.loads(args.config.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {args.config}: {exc}") from None
            if not isinstance(file_values, dict):
                raise ConfigError("config file must hold a JSON object")
            file_values.pop("study", None)
        cfg = build_config(args.study, file_values, flags)
        report = run(cfg, workers=args.workers)
    except (ConfigError, qstate.DenseCapError) as exc:
        print(f"bellsim: config error: {exc}", file=sys.stderr)
        return 2
    write_outputs(report, args.out)
    for line in _summary_lines(report):
        print(line)
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
