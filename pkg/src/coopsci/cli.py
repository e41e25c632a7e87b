"""Command-line front end: ``run``, ``sweep`` and ``report``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Standard output carries ``key=value`` summary lines only; progress goes to
standard error.  Config overrides use ``--section.key=value``, for example
``--scenario.gps_period_r2=10`` or ``--scenario.r2_path.radius=40``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from coopsci import __version__
from coopsci.config import ConfigError, apply_override, config_hash, from_document, load_document, to_dict
from coopsci.montecarlo import (
    AXES,
    bin_and_summarize,
    default_workers,
    export_runs,
    export_summary,
    read_summary,
    run_batch,
)
from coopsci.sim import simulate, write_trace

log = logging.getLogger("coopsci")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

AXIS_FILES = {
    "range_noise_std": "range_noise",
    "gps_noise_std": "gps_noise",
    "pos_offset": "pos_offset",
    "vel_offset_std": "vel_offset",
    "path": "path",
}
AXIS_TITLES = {
    "range_noise_std": "Range noise",
    "gps_noise_std": "GPS noise",
    "pos_offset": "Initial position offset (m)",
    "vel_offset_std": "Initial velocity offset",
    "path": "Path",
}
MANIFEST = "manifest.json"
REPORT_ROWS = (
    ("Number of Runs", "num_runs"),
    ("Mean Error (m)", "mean"),
    ("Std (m)", "std"),
    ("Median (m)", "median"),
    ("Max Error (m)", "max"),
    ("Min Error (m)", "min"),
    ("Divergence Percentage", "divergence_pct"),
)


class UsageError(Exception):
    pass


def _split_overrides(extra: list[str]) -> list[tuple[str, str]]:
    """``--a.b=v`` / ``--a.b v`` pairs from the arguments argparse did not consume."""
    out = []
    i = 0
    while i < len(extra):
        arg = extra[i]
        if not arg.startswith("--") or "." not in arg.split("=", 1)[0]:
            raise UsageError(f"unrecognized argument {arg!r}")
        key = arg[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        elif i + 1 < len(extra):
            i += 1
            value = extra[i]
        else:
            raise UsageError(f"override {arg!r} needs a value")
        out.append((key, value))
        i += 1
    return out


def _resolve(args, extra, shortcuts: dict[str, str]):
    doc, lines = load_document(args.config)
    for dest, dotted in shortcuts.items():
        value = getattr(args, dest, None)
        if value is not None:
            apply_override(doc, dotted, str(value))
    for key, value in _split_overrides(extra):
        apply_override(doc, key, value)
    return from_document(doc, lines)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, scenario, sweep, files: list[Path], command: str) -> Path:
    manifest = {
        "command": command,
        "code_version": __version__,
        "seed": sweep.seed if command == "sweep" else scenario.seed,
        "config_hash": config_hash(scenario, sweep if command == "sweep" else None),
        "config": {"scenario": to_dict(scenario), **({"sweep": {k: v for k, v in to_dict(sweep).items() if k != "base"}}
                                                     if command == "sweep" else {})},
        "files": {p.name: _sha256(p) for p in files},
    }
    path = out_dir / MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def cmd_run(args, extra) -> int:
    scenario, _ = _resolve(args, extra, {"seed": "scenario.seed", "epochs": "scenario.epochs"})
    trace = simulate(scenario)
    out = Path(args.trace_out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_trace(trace, out)
    err = trace.errors[scenario.burn_in + 1:]
    print(f"mean_error_m={err.mean():.6g}")
    print(f"max_error_m={err.max():.6g}")
    print(f"rms_error_m={np.sqrt(np.mean(err**2)):.6g}")
    print(f"trace={out}")
    return EXIT_OK


def cmd_sweep(args, extra) -> int:
    scenario, sweep = _resolve(args, extra, {"seed": "sweep.seed", "runs": "sweep.num_runs"})
    workers = args.workers if args.workers is not None else default_workers()
    if workers < 1:
        raise UsageError("--workers must be >= 1")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def progress(done):
        print(f"\r{done}/{sweep.num_runs} runs", end="", file=sys.stderr, flush=True)

    results = run_batch(sweep, workers=workers, progress=progress)
    print(file=sys.stderr)
    files = [export_runs(results, out_dir / "runs.csv")]
    for axis in AXES:
        summaries = bin_and_summarize(results, axis, config=sweep)
        files.append(export_summary(summaries, out_dir / f"{AXIS_FILES[axis]}.csv"))
    manifest = _write_manifest(out_dir, scenario, sweep, files, "sweep")
    failed = sum(r.diverged for r in results)
    finite = np.array([r.mean_error for r in results if not r.diverged])
    print(f"runs={len(results)}")
    print(f"failed_runs={failed}")
    print(f"mean_error_m={finite.mean():.6g}" if finite.size else "mean_error_m=nan")
    print(f"manifest={manifest}")
    return EXIT_OK


def _cell(value) -> str:
    if value is None:
        return "-"
    return str(value) if isinstance(value, int) else f"{value:.2f}"


def format_table(title: str, summaries) -> str:
    """Plain-text table: a ``Metric`` column followed by one column per bin."""
    header = ["Metric"] + [s.label for s in summaries]
    rows = [[name] + [_cell(getattr(s, attr)) for s in summaries] for name, attr in REPORT_ROWS]
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    def line(cells):
        return " | ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    rule = "-+-".join("-" * w for w in widths)
    return "\n".join([title, line(header), rule, *(line(r) for r in rows)]) + "\n"


def cmd_report(args, extra) -> int:
    if extra:
        raise UsageError(f"unrecognized arguments: {' '.join(extra)}")
    out_dir = Path(args.out_dir)
    missing = [f"{AXIS_FILES[a]}.csv" for a in AXES if not (out_dir / f"{AXIS_FILES[a]}.csv").is_file()]
    if missing:
        raise UsageError(f"missing sweep outputs in {out_dir}: {', '.join(missing)}")
    report_dir = out_dir / "report"
    report_dir.mkdir(exist_ok=True)
    for axis in AXES:
        stem = AXIS_FILES[axis]
        summaries = read_summary(out_dir / f"{stem}.csv")
        table = format_table(AXIS_TITLES[axis], summaries)
        (report_dir / f"table_{stem}.txt").write_text(table, encoding="utf-8")
        sys.stderr.write(table + "\n")
        with open(report_dir / f"plot_{stem}.csv", "w", encoding="utf-8") as fh:
            fh.write("axis_value,mean_m,std_m\n")
            for s in summaries:
                fh.write(f"{s.label},{'' if s.mean is None else s.mean},{'' if s.std is None else s.std}\n")
        print(f"table={report_dir / f'table_{stem}.txt'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coopsci",
        description="Range-only cooperative localization with split covariance intersection.",
        epilog="Extra --section.key=value arguments override config fields.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario and write its per-epoch trace")
    run.add_argument("--config", default="nominal", help="YAML file or preset name (nominal, noiseless)")
    run.add_argument("--seed", type=int)
    run.add_argument("--epochs", type=int)
    run.add_argument("--trace-out", default="trace.csv")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="Monte Carlo sweep with per-axis summaries")
    sweep.add_argument("--config", default="nominal", help="YAML file or preset name")
    sweep.add_argument("--runs", type=int)
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--workers", type=int, help="process count (default: $COOPSCI_WORKERS or CPU count)")
    sweep.add_argument("--out-dir", default="sweep_out")
    sweep.set_defaults(func=cmd_sweep)

    report = sub.add_parser("report", help="render summary tables and plot data from a sweep directory")
    report.add_argument("--out-dir", default="sweep_out")
    report.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.func(args, extra)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 1
        log.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
