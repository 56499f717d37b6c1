"""Command-line interface.

Verbs: generate (write a synthetic scenario), run (execute the configured
pipeline and report), eval (score a detections file against ground truth),
frontier (sweep experts + ensembles into accuracy-latency points), and
timing (fit the latency model from measured rows).

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from .config import ConfigError, ExperimentConfig, load_config
from .detector import StageTimings, TimingRow, calibrate_latency
from .evaluation import CohortReport, MatchSpec, evaluate_cohorts
from .experiment import run_experiment, run_frontier
from .figures import save_band_cds_figure, save_frontier_figure, save_latency_figure
from .rangeops import RangeBand, RangeMode
from .reports import emit_report, emit_reports_csv, report_to_dict, write_report
from .storage import (
    atomic_write_bytes,
    atomic_write_text,
    load_detections,
    load_scenario,
    save_detections,
    save_scenario,
)

__all__ = ["main"]


def _parse_bands(text: str) -> List[RangeBand]:
    bands = []
    for i, chunk in enumerate(text.split(",")):
        parts = chunk.split(":")
        if len(parts) != 2:
            raise ConfigError(f"--bands[{i}]: expected inner:outer, got {chunk!r}")
        try:
            bands.append(RangeBand(float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise ConfigError(f"--bands[{i}]: {exc}") from None
    return bands


def _resolve_out(arg_out: Optional[str], config: Optional[ExperimentConfig], default: str) -> Path:
    if arg_out:
        return Path(arg_out)
    if config is not None and config.out_dir is not None:
        return config.out_dir
    return Path(default)


def _print_report_summary(report: CohortReport) -> None:
    print(f"method: {report.method}  frames: {report.n_frames}")
    if report.latency is not None:
        print(f"latency: {report.latency.mean_ms:.1f} +/- {report.latency.std_ms:.1f} ms")
    for band in report.bands:
        agg = band.aggregate
        if agg is None:
            print(f"  {band.band.label:>12}: no supported classes")
        else:
            print(
                f"  {band.band.label:>12}: AP {agg.ap:.3f}  CDS {agg.cds:.3f}  "
                f"ATE {agg.ate:.3f}  ASE {agg.ase:.3f}  AOE {agg.aoe:.3f}  (gt {agg.support})"
            )


def _cmd_generate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    out_dir = _resolve_out(args.out, config, "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(config.scenario, Path):
        scenario = load_scenario(config.scenario)
    else:
        from .scenario import generate_scenario

        scenario = generate_scenario(config.scenario)
    path = out_dir / "scenario.jsonl"
    save_scenario(scenario, path, binary_points=args.binary)
    n_points = sum(len(f.sweep.points) for f in scenario.frames)
    n_boxes = sum(len(f.truth) for f in scenario.frames)
    print(f"wrote {path} ({len(scenario.frames)} frames, {n_points} points, {n_boxes} gt boxes)")
    return 0


def _write_run_outputs(
    out_dir: Path, reports: Sequence[CohortReport], frame_results: dict
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for method, results in frame_results.items():
        safe = method.replace("/", "_").replace(" ", "")
        save_detections(results, out_dir / f"detections_{safe}.jsonl")
    if len(reports) == 1:
        write_report(reports[0], out_dir / "report.json", "json")
        atomic_write_bytes(out_dir / "report.csv", emit_report(reports[0], "csv"))
    else:
        payload = json.dumps(
            [report_to_dict(r) for r in reports], sort_keys=True, indent=2
        ) + "\n"
        atomic_write_text(out_dir / "report.json", payload)
        atomic_write_bytes(out_dir / "report.csv", emit_reports_csv(reports))
    figures = out_dir / "figures"
    for report in reports:
        safe = report.method.replace("/", "_").replace(" ", "")
        save_band_cds_figure(report, figures / f"band_cds_{safe}.png")
    save_latency_figure(reports, figures / "latency_stages.png")


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    out_dir = _resolve_out(args.out, config, "out")
    result = run_experiment(config)
    _write_run_outputs(out_dir, result.reports, result.frame_results)
    for report in result.reports:
        _print_report_summary(report)
    print(f"wrote report.json, report.csv, figures/ under {out_dir}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    bands = _parse_bands(args.bands)
    mode = RangeMode(args.mode)
    for flag, value in (("--dets", args.dets), ("--gt", args.gt)):
        if not Path(value).exists():
            raise ConfigError(f"{flag}: file not found: {value}")
    scenario = load_scenario(args.gt)
    detections = load_detections(args.dets)
    by_index = {f.index: f for f in scenario.frames}
    missing = [d.index for d in detections if d.index not in by_index]
    if missing:
        raise ConfigError(f"--dets: frames {missing[:5]} not present in ground truth")
    dets_per_frame = [d.boxes for d in detections]
    gts_per_frame = [list(by_index[d.index].truth) for d in detections]
    timings = [d.timings for d in detections]
    report = evaluate_cohorts(
        dets_per_frame,
        gts_per_frame,
        bands,
        spec=MatchSpec(),
        range_mode=mode,
        timings=timings,
        method=args.method,
    )
    _print_report_summary(report)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_report(report, out_dir / "report.json", "json")
        atomic_write_bytes(out_dir / "report.csv", emit_report(report, "csv"))
        save_band_cds_figure(report, out_dir / "figures" / "band_cds.png")
        save_latency_figure([report], out_dir / "figures" / "latency_stages.png")
        print(f"wrote report.json, report.csv, figures/ under {out_dir}")
    return 0


def _frontier_csv(reports: Sequence[CohortReport]) -> bytes:
    labels: List[str] = []
    for report in reports:
        for band in report.bands:
            if band.band.label not in labels:
                labels.append(band.band.label)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["method"] + [f"cds_{label}" for label in labels] + ["latency_mean_ms", "latency_std_ms"])
    for report in reports:
        row = [report.method]
        by_label = {b.band.label: b for b in report.bands}
        for label in labels:
            band = by_label.get(label)
            if band is None or band.aggregate is None:
                row.append("")
            else:
                row.append(repr(band.aggregate.cds))
        if report.latency is None:
            row += ["", ""]
        else:
            row += [repr(report.latency.mean_ms), repr(report.latency.std_ms)]
        writer.writerow(row)
    return buffer.getvalue().encode("utf-8")


def _cmd_frontier(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    frequencies = None
    if args.frequencies:
        try:
            frequencies = [int(f) for f in args.frequencies.split(",")]
        except ValueError:
            raise ConfigError(f"--frequencies: expected comma-separated integers, got {args.frequencies!r}") from None
    result = run_frontier(config, frequencies, parallel=args.parallel)
    out_csv = Path(args.out)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    atomic_write_bytes(out_csv, _frontier_csv(result.reports))
    payload = json.dumps([report_to_dict(r) for r in result.reports], sort_keys=True, indent=2) + "\n"
    atomic_write_text(out_csv.with_suffix(".json"), payload)
    save_frontier_figure(result.reports, out_csv.with_suffix(".png"))
    for report in result.reports:
        full = report.bands[-1]
        cds = 0.0 if full.aggregate is None else full.aggregate.cds
        lat = 0.0 if report.latency is None else report.latency.mean_ms
        print(f"{report.method:>24}: full-range CDS {cds:.3f}  latency {lat:.1f} ms")
    print(f"wrote {out_csv}, {out_csv.with_suffix('.json')}, {out_csv.with_suffix('.png')}")
    return 0


_TIMING_COLUMNS = [
    "infer_range",
    "voxel_reciprocal",
    "occupied_voxels",
    "point_proc",
    "backbone",
    "neck",
    "head",
    "post_proc",
]


def _cmd_timing(args: argparse.Namespace) -> int:
    path = Path(args.measurements)
    if not path.exists():
        raise ConfigError(f"--measurements: file not found: {path}")
    rows: List[TimingRow] = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        missing = [c for c in _TIMING_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ConfigError(f"--measurements: missing columns {missing}")
        for i, record in enumerate(reader):
            try:
                rows.append(
                    TimingRow(
                        infer_range=float(record["infer_range"]),
                        voxel_reciprocal=float(record["voxel_reciprocal"]),
                        occupied_voxels=float(record["occupied_voxels"]),
                        timings=StageTimings(
                            point_proc=float(record["point_proc"]),
                            backbone=float(record["backbone"]),
                            neck=float(record["neck"]),
                            head=float(record["head"]),
                            post_proc=float(record["post_proc"]),
                        ),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"--measurements row {i}: {exc}") from None
    if len(rows) < 2:
        raise ConfigError("--measurements: need at least 2 rows")
    params, residuals = calibrate_latency(rows)
    payload = {
        "params": {
            "c_point_per_kvoxel": params.c_point_per_kvoxel,
            "c_backbone_per_mcell": params.c_backbone_per_mcell,
            "c_neck_per_mcell": params.c_neck_per_mcell,
            "c_head": params.c_head,
            "c_post": params.c_post,
        },
        "relative_residuals": residuals,
    }
    atomic_write_text(Path(args.out), json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(f"wrote {args.out}")
    for stage, res in residuals.items():
        worst = max((abs(r) for r in res), default=0.0)
        print(f"  {stage:>12}: worst relative residual {worst * 100:.1f}%")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rangeforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic scenario to disk")
    p.add_argument("--config", required=True, help="experiment or scenario config JSON")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--binary", action="store_true", help="store points as float32 .npz sidecars")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("run", help="run the configured pipeline and write reports")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("eval", help="evaluate a detections file against ground truth")
    p.add_argument("--dets", required=True, help="detections .jsonl")
    p.add_argument("--gt", required=True, help="scenario .jsonl with ground truth")
    p.add_argument("--bands", required=True, help="comma-separated inner:outer bands, e.g. 0:50,50:100")
    p.add_argument("--mode", default="l2", choices=[m.value for m in RangeMode])
    p.add_argument("--method", default="eval", help="method name recorded in the report")
    p.add_argument("--out", default=None, help="optional output directory")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("frontier", help="sweep experts + ensembles into accuracy-latency points")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output CSV path (.json/.png written alongside)")
    p.add_argument("--frequencies", default=None, help="near-far frequencies, e.g. 1,2,3")
    p.add_argument("--parallel", action="store_true", help="run independent pipelines concurrently")
    p.set_defaults(func=_cmd_frontier)

    p = sub.add_parser("timing", help="fit the latency model from measured stage timings")
    p.add_argument("--measurements", required=True, help="CSV of measured rows")
    p.add_argument("--out", required=True, help="output JSON path")
    p.set_defaults(func=_cmd_timing)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
