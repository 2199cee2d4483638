"""Batch experiment front end.

Verbs:
    run              simulate the configured variant, write its trace
    compare          run every configured variant on the same scenario
    sweep-alpha      rerun a step scenario across aggressiveness values
    validate-config  parse, validate, and echo the normalized document

Outputs are CSV files plus a JSON manifest (config echo, seed, versions)
so that any figure can be regenerated from the artifacts alone.  Exit
codes: 0 success, 1 configuration error, 2 run failure.
"""

import argparse
import csv
import json
import math
import platform
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ScenarioConfig, apply_overrides, parse_config, serialize_config
from .simulate import SimResult, run_closed_loop
from .vehicle import steer_from_slip

TRACE_COLUMNS = ("t", "x", "y", "psi", "beta", "delta_f", "x_ref", "y_ref", "u")
SUMMARY_COLUMNS = ("model", "ssd", "time_per_iteration", "total_time")
SWEEP_COLUMNS = ("alpha", "rise_time", "ssd")
DEFAULT_ALPHAS = (0.7, 2.8, 11.2)


@dataclass(frozen=True)
class SummaryRow:
    model: str
    ssd: float  # [m^2]
    time_per_iteration: float  # [s]
    total_time: float  # [s]


def _fmt(value: float) -> str:
    return repr(float(value))


def write_trace(target: Path, res: SimResult, params) -> None:
    """Write one closed-loop trace as CSV (deterministic bytes, no timing)."""
    with open(target, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        n = len(res.t)
        for k in range(n):
            beta = float(res.states[k, 3])
            row = [
                _fmt(res.t[k]),
                _fmt(res.states[k, 0]),
                _fmt(res.states[k, 1]),
                _fmt(res.states[k, 2]),
                _fmt(beta),
                _fmt(steer_from_slip(beta, params)),
                _fmt(res.x_ref[k]),
                _fmt(res.y_ref[k]),
                _fmt(res.inputs[k]) if k < len(res.inputs) else "",
            ]
            writer.writerow(row)


def read_trace(source: Path) -> dict:
    """Read a trace CSV back as column arrays (the final u cell is empty)."""
    with open(source, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if tuple(header) != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace columns {header} in {source}")
        rows = list(reader)
    cols = {name: [] for name in TRACE_COLUMNS}
    for row in rows:
        for name, cell in zip(TRACE_COLUMNS, row):
            if name == "u" and cell == "":
                continue
            cols[name].append(float(cell))
    return {name: np.asarray(vals) for name, vals in cols.items()}


def write_manifest(target: Path, cfg: ScenarioConfig) -> None:
    manifest = {
        "config": serialize_config(cfg),
        "seed": cfg.disturbance.seed,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "trackmpc": __version__,
        },
    }
    with open(target, "w") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _summarize(res: SimResult) -> SummaryRow:
    per_iter = float(np.mean(res.iter_times)) if len(res.iter_times) else 0.0
    return SummaryRow(res.variant, res.ssd, per_iter, res.total_time)


def _run_variant(cfg: ScenarioConfig, variant: str) -> SimResult:
    ctrl = cfg.controller_config(variant)
    path = cfg.build_path(ctrl.ts)
    return run_closed_loop(ctrl, path, cfg.disturbance, cfg.vehicle)


def run_compare(cfg: ScenarioConfig) -> tuple:
    """Run every configured variant; returns (summary rows, failures).

    Rows cover completed runs only and are ordered by SSD ascending; each
    failure is a (variant, status) pair.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, failures = [], []
    for variant in cfg.variants:
        res = _run_variant(cfg, variant)
        write_trace(out / f"trace_{variant}.csv", res, cfg.vehicle)
        if res.status == "ok":
            rows.append(_summarize(res))
        else:
            failures.append((variant, res.status))
    rows.sort(key=lambda row: row.ssd)
    with open(out / "summary.csv", "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow([row.model, _fmt(row.ssd),
                             _fmt(row.time_per_iteration), _fmt(row.total_time)])
    write_manifest(out / "manifest.json", cfg)
    return rows, failures


def rise_time(t: np.ndarray, y: np.ndarray, target: float) -> float:
    """First time y reaches 90% of target, linearly interpolated; NaN if never."""
    level = 0.9 * target
    above = y >= level if target >= 0 else y <= level
    hits = np.nonzero(above)[0]
    if len(hits) == 0:
        return math.nan
    k = int(hits[0])
    if k == 0:
        return float(t[0])
    frac = (level - y[k - 1]) / (y[k] - y[k - 1])
    return float(t[k - 1] + frac * (t[k] - t[k - 1]))


def sweep_alpha(cfg: ScenarioConfig, alphas) -> list:
    """Run the scenario once per alpha; returns [(alpha, rise_time, ssd)]."""
    from dataclasses import replace

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for alpha in alphas:
        scen = replace(cfg, alpha=float(alpha))
        res = _run_variant(scen, scen.variant)
        if res.status != "ok":
            raise RuntimeError(f"alpha={alpha:g}: run failed: {res.status}")
        rt = rise_time(res.t, res.states[:, 1], cfg.amplitude)
        records.append((float(alpha), rt, res.ssd))
    with open(out / "sweep_alpha.csv", "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for alpha, rt, ssd in records:
            writer.writerow([_fmt(alpha), _fmt(rt), _fmt(ssd)])
    write_manifest(out / "manifest.json", cfg)
    return records


def _load_config(args) -> ScenarioConfig:
    text = ""
    if args.config is not None:
        text = Path(args.config).read_text()
    cfg = parse_config(text)
    overrides = list(args.set or [])
    if getattr(args, "output_dir", None):
        overrides.append(f"output.directory={args.output_dir}")
    return apply_overrides(cfg, overrides)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trackmpc",
        description="Trajectory-tracking MPC experiments for a kinematic bicycle.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_common(p):
        p.add_argument("config", nargs="?", default=None,
                       help="scenario document (omit for all defaults)")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a config key (repeatable; wins over the file)")
        p.add_argument("--output-dir", default=None,
                       help="shorthand for --set output.directory=...")

    add_common(sub.add_parser("run", help="simulate the configured variant"))
    add_common(sub.add_parser("compare", help="run all configured variants"))
    sweep = sub.add_parser("sweep-alpha", help="rerun a step scenario across alphas")
    add_common(sweep)
    sweep.add_argument("--alphas", default=",".join(str(a) for a in DEFAULT_ALPHAS),
                       help="comma-separated alpha values")
    add_common(sub.add_parser("validate-config", help="parse and echo the config"))
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 1

    if args.verb == "validate-config":
        print(serialize_config(cfg), end="")
        return 0

    if args.verb == "run":
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        res = _run_variant(cfg, cfg.variant)
        write_trace(out / f"trace_{cfg.variant}.csv", res, cfg.vehicle)
        write_manifest(out / "manifest.json", cfg)
        if res.status != "ok":
            print(f"{cfg.variant}: {res.status}", file=sys.stderr)
            return 2
        row = _summarize(res)
        print(f"{row.model}: ssd={row.ssd:.6g} m^2, "
              f"time/iter={row.time_per_iteration:.3e} s, total={row.total_time:.3f} s")
        return 0

    if args.verb == "compare":
        rows, failures = run_compare(cfg)
        for row in rows:
            print(f"{row.model}: ssd={row.ssd:.6g} m^2, "
                  f"time/iter={row.time_per_iteration:.3e} s, total={row.total_time:.3f} s")
        for variant, status in failures:
            print(f"{variant}: {status}", file=sys.stderr)
        return 2 if failures else 0

    if args.verb == "sweep-alpha":
        if cfg.variant not in ("baseline", "weight_tuned"):
            print("error: sweep-alpha expects variant baseline or weight_tuned",
                  file=sys.stderr)
            return 1
        if cfg.kind != "step":
            print("error: sweep-alpha expects a step scenario", file=sys.stderr)
            return 1
        try:
            alphas = [float(a) for a in args.alphas.split(",") if a.strip()]
        except ValueError:
            print(f"error: bad --alphas value {args.alphas!r}", file=sys.stderr)
            return 1
        if not alphas:
            print("error: --alphas lists no values", file=sys.stderr)
            return 1
        try:
            records = sweep_alpha(cfg, alphas)
        except RuntimeError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        for alpha, rt, ssd in records:
            print(f"alpha={alpha:g}: rise_time={rt:.4f} s, ssd={ssd:.6g} m^2")
        return 0

    raise AssertionError(f"unhandled verb {args.verb!r}")


if __name__ == "__main__":
    raise SystemExit(main())
