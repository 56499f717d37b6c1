"""Cohort report serialization: lossless JSON and the delimited CSV table.

JSON round-trips exactly (parse(emit(report)) == report); CSV carries the
columns method, band, class, ap, ate, ase, aoe, cds, latency_mean_ms,
latency_std_ms with one row per (band, class) plus a class="mean" aggregate
row per band.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import List, Optional, Sequence, Union

from .evaluation import (
    BandReport,
    ClassEval,
    CohortReport,
    LatencyStats,
    MatchSpec,
)
from .rangeops import RangeBand
from .storage import atomic_write_bytes

__all__ = [
    "CSV_COLUMNS",
    "emit_report",
    "emit_reports_csv",
    "report_to_dict",
    "report_from_dict",
    "write_report",
    "load_report_json",
]

CSV_COLUMNS = [
    "method",
    "band",
    "class",
    "ap",
    "ate",
    "ase",
    "aoe",
    "cds",
    "latency_mean_ms",
    "latency_std_ms",
]


def _class_eval_to_dict(ev: ClassEval) -> dict:
    return {
        "ap": ev.ap,
        "ate": ev.ate,
        "ase": ev.ase,
        "aoe": ev.aoe,
        "ave": ev.ave,
        "cds": ev.cds,
        "nds": ev.nds,
        "support": ev.support,
        "tp_count": ev.tp_count,
        "no_matches": ev.no_matches,
    }


def _class_eval_from_dict(d: dict) -> ClassEval:
    return ClassEval(
        ap=float(d["ap"]),
        ate=float(d["ate"]),
        ase=float(d["ase"]),
        aoe=float(d["aoe"]),
        ave=float(d["ave"]),
        cds=float(d["cds"]),
        nds=float(d["nds"]),
        support=int(d["support"]),
        tp_count=int(d["tp_count"]),
        no_matches=bool(d["no_matches"]),
    )


def report_to_dict(report: CohortReport) -> dict:
    return {
        "method": report.method,
        "range_mode": report.range_mode,
        "match": {
            "thresholds": list(report.match.thresholds),
            "tp_threshold": report.match.tp_threshold,
            "recall_points": report.match.recall_points,
            "ate_cap": report.match.ate_cap,
            "ase_cap": report.match.ase_cap,
            "aoe_cap": report.match.aoe_cap,
            "ave_cap": report.match.ave_cap,
        },
        "bands": [
            {
                "band": [band.band.inner, band.band.outer],
                "label": band.band.label,
                "classes": {str(c): _class_eval_to_dict(ev) for c, ev in band.classes.items()},
                "excluded_classes": list(band.excluded_classes),
                "aggregate": None if band.aggregate is None else _class_eval_to_dict(band.aggregate),
            }
            for band in report.bands
        ],
        "latency": None
        if report.latency is None
        else {
            "mean_ms": report.latency.mean_ms,
            "std_ms": report.latency.std_ms,
            "stage_means": dict(report.latency.stage_means),
        },
        "n_frames": report.n_frames,
    }


def report_from_dict(d: dict) -> CohortReport:
    match = MatchSpec(
        thresholds=tuple(d["match"]["thresholds"]),
        tp_threshold=float(d["match"]["tp_threshold"]),
        recall_points=int(d["match"]["recall_points"]),
        ate_cap=float(d["match"]["ate_cap"]),
        ase_cap=float(d["match"]["ase_cap"]),
        aoe_cap=float(d["match"]["aoe_cap"]),
        ave_cap=float(d["match"]["ave_cap"]),
    )
    bands = []
    for entry in d["bands"]:
        inner, outer = entry["band"]
        bands.append(
            BandReport(
                band=RangeBand(float(inner), float(outer)),
                classes={int(c): _class_eval_from_dict(ev) for c, ev in entry["classes"].items()},
                excluded_classes=tuple(int(c) for c in entry["excluded_classes"]),
                aggregate=None
                if entry["aggregate"] is None
                else _class_eval_from_dict(entry["aggregate"]),
            )
        )
    latency = None
    if d.get("latency") is not None:
        latency = LatencyStats(
            mean_ms=float(d["latency"]["mean_ms"]),
            std_ms=float(d["latency"]["std_ms"]),
            stage_means={k: float(v) for k, v in d["latency"]["stage_means"].items()},
        )
    return CohortReport(
        method=d["method"],
        range_mode=d["range_mode"],
        match=match,
        bands=tuple(bands),
        latency=latency,
        n_frames=int(d["n_frames"]),
    )


def _csv_rows(report: CohortReport) -> List[List[str]]:
    lat_mean = "" if report.latency is None else repr(report.latency.mean_ms)
    lat_std = "" if report.latency is None else repr(report.latency.std_ms)
    rows = []
    for band in report.bands:
        for class_id in sorted(band.classes):
            ev = band.classes[class_id]
            rows.append(
                [
                    report.method,
                    band.band.label,
                    str(class_id),
                    repr(ev.ap),
                    repr(ev.ate),
                    repr(ev.ase),
                    repr(ev.aoe),
                    repr(ev.cds),
                    lat_mean,
                    lat_std,
                ]
            )
        if band.aggregate is not None:
            ev = band.aggregate
            rows.append(
                [
                    report.method,
                    band.band.label,
                    "mean",
                    repr(ev.ap),
                    repr(ev.ate),
                    repr(ev.ase),
                    repr(ev.aoe),
                    repr(ev.cds),
                    lat_mean,
                    lat_std,
                ]
            )
    return rows


def emit_reports_csv(reports: Sequence[CohortReport]) -> bytes:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for report in reports:
        writer.writerows(_csv_rows(report))
    return buffer.getvalue().encode("utf-8")


def emit_report(report: CohortReport, format: str = "json") -> bytes:
    """Serialize one report; JSON is the lossless superset of the CSV table."""
    if format == "json":
        return (json.dumps(report_to_dict(report), sort_keys=True, indent=2) + "\n").encode("utf-8")
    if format == "csv":
        return emit_reports_csv([report])
    raise ValueError(f"unknown report format {format!r}")


def write_report(report: CohortReport, path: Union[str, Path], format: str = "json") -> None:
    atomic_write_bytes(path, emit_report(report, format))


def load_report_json(path: Union[str, Path]) -> CohortReport:
    with open(path, "r", encoding="utf-8") as handle:
        return report_from_dict(json.load(handle))
