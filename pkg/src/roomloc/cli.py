"""Command-line entry points: train, localize, sweep, grid, inspect, plots."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

OUT_DIR_ENV = "ROOMLOC_OUT_DIR"


def _add_common(p: argparse.ArgumentParser, needs_config: bool = True,
                report_format: bool = False) -> None:
    if needs_config:
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument(
            "--set", dest="overrides", action="append", default=[],
            metavar="KEY=VALUE", help="override a config key (repeatable)",
        )
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--workers", type=int, help="parallel worker processes")
        p.add_argument("--fine-grid", action="store_true",
                       help="0.25 m clusters (4096 in the default room) instead of 0.5 m")
    if report_format:
        p.add_argument("--format", dest="report_format",
                       choices=("csv", "json", "both"),
                       help="which report files to write")
    p.add_argument("--out-dir", help=f"output directory (or ${OUT_DIR_ENV})")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roomloc",
        description="Room-grid sound source localization experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="simulate training captures and store a model")
    _add_common(p)

    p = sub.add_parser("localize", help="localize all test-grid points with a model")
    p.add_argument("--model", required=True, help="model file from `train`")
    _add_common(p, report_format=True)

    p = sub.add_parser("sweep", help="train/localize over an environment grid")
    p.add_argument("--t60-list", required=True, help="comma-separated T60 values (s)")
    p.add_argument("--snr-list", required=True,
                   help="comma-separated SNR values (dB; `none` = noiseless)")
    p.add_argument("--robust", action="store_true",
                   help="train once at the config train env; vary only the test env")
    _add_common(p, report_format=True)

    p = sub.add_parser("grid", help="emit the test-grid points")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    _add_common(p)

    p = sub.add_parser("inspect", help="print a model file header")
    p.add_argument("--model", required=True)

    p = sub.add_parser("plots", help="emit gnuplot-ready .dat files from a sweep summary")
    p.add_argument("--summary", required=True, help="sweep_summary.csv from `sweep`")
    _add_common(p, needs_config=False)

    return parser


def _load_config(args):
    from .experiment import ExperimentConfig

    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    if args.overrides:
        cfg = cfg.with_overrides(args.overrides)
    replacements = {}
    if getattr(args, "fine_grid", False):
        replacements["cluster_dim"] = (0.25, 0.25, 0.25)
    if args.seed is not None:
        replacements["seed"] = args.seed
    if args.workers is not None:
        replacements["workers"] = args.workers
    if getattr(args, "report_format", None):
        replacements["report_format"] = args.report_format
    out_dir = args.out_dir or os.environ.get(OUT_DIR_ENV)
    if out_dir:
        replacements["out_dir"] = out_dir
    if replacements:
        cfg = dataclasses.replace(cfg, **replacements)
    return cfg


def _cmd_train(args) -> int:
    from .experiment import train_pipeline

    model_path = train_pipeline(_load_config(args))
    print(model_path)
    return 0


def _cmd_localize(args) -> int:
    from .experiment import localize_pipeline

    report = localize_pipeline(_load_config(args), args.model)
    for metric, value in report.metric_rows():
        print(f"{metric} = {value:g}")
    return 0


def _parse_list(text: str):
    out = []
    for part in text.split(","):
        part = part.strip().lower()
        out.append(None if part == "none" else float(part))
    return out


def _cmd_sweep(args) -> int:
    from .experiment import sweep

    cfg = _load_config(args)
    t60_list = _parse_list(args.t60_list)
    snr_list = _parse_list(args.snr_list)
    if any(v is None for v in t60_list):
        raise ValueError("t60 values must be numeric")
    reports = sweep(cfg, t60_list, snr_list, robust=args.robust)
    print(f"{len(reports)} cells written under {cfg.out_dir}")
    return 0


def _cmd_grid(args) -> int:
    from .geometry import cartesian_to_doa

    cfg = _load_config(args)
    points = cfg.test_points()
    center = cfg.mic_array().center
    if args.format == "json":
        payload = [
            {"x_m": p[0], "y_m": p[1], "z_m": p[2]} for p in points.tolist()
        ]
        print(json.dumps(payload, indent=2))
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(["index", "x_m", "y_m", "z_m", "azimuth_deg", "elevation_deg", "range_m"])
        for i, p in enumerate(points):
            d = cartesian_to_doa(p, center)
            writer.writerow([i, *(repr(float(v)) for v in p),
                             repr(d.azimuth_deg), repr(d.elevation_deg), repr(d.range_m)])
    return 0


def _cmd_inspect(args) -> int:
    from .pnn import read_model_header

    header = read_model_header(args.model)
    print(json.dumps(header, indent=2, sort_keys=True))
    return 0


def _cmd_plots(args) -> int:
    """Pivot a sweep summary into per-metric .dat files (t60 column per snr)."""
    out = Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    with open(args.summary, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ValueError(f"{args.summary} is empty")
    metrics = sorted({r["metric"] for r in rows})
    for metric in metrics:
        series: dict[str, list[tuple[float, str]]] = {}
        for r in rows:
            if r["metric"] != metric:
                continue
            series.setdefault(r["test_snr_db"], []).append(
                (float(r["test_t60_s"]), r["value"])
            )
        path = out / f"{metric}.dat"
        with open(path, "w") as f:
            f.write("# t60_s  " + "  ".join(f"snr_{k}" for k in sorted(series)) + "\n")
            t60s = sorted({t for pts in series.values() for t, _ in pts})
            for t in t60s:
                vals = [dict(series[k]).get(t, "nan") for k in sorted(series)]
                f.write(f"{t:g}  " + "  ".join(str(v) for v in vals) + "\n")
        print(path)
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "localize": _cmd_localize,
    "sweep": _cmd_sweep,
    "grid": _cmd_grid,
    "inspect": _cmd_inspect,
    "plots": _cmd_plots,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
