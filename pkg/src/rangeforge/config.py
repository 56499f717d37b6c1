"""Experiment configuration: a single JSON format, validated before any compute.

Validation errors carry the JSON path of the offending field
(e.g. ``experts[1].voxel_reciprocal: must be > 0``) and map to CLI exit
code 2. The only environment override honored anywhere is ``RANGEFORGE_OUT``
for the output directory.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from .detector import GeneralizationMode, LatencyParams, OracleParams, RangeExpertConfig, ScoreCalibration
from .ensemble import CombineMode, EnsembleSpec, NearFarSpec
from .evaluation import MatchSpec
from .profiles import PROFILES, get_profile
from .rangeops import RangeBand, RangeMode
from .scenario import ScenarioSpec
from .storage import scenario_spec_from_dict

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config"]

OUTPUT_DIR_ENV = "RANGEFORGE_OUT"


class ConfigError(Exception):
    """Invalid configuration; message carries the JSON path of the field."""


@dataclass(eq=False)
class ExperimentConfig:
    name: str
    scenario: Union[ScenarioSpec, Path]
    experts: List[RangeExpertConfig]
    ensemble: Optional[Union[EnsembleSpec, NearFarSpec]]
    match: MatchSpec
    eval_bands: List[RangeBand]
    range_mode: RangeMode = RangeMode.BEV_L2
    sweep_window: int = 5
    out_dir: Optional[Path] = None

    def base_ensemble(self) -> Optional[EnsembleSpec]:
        if isinstance(self.ensemble, NearFarSpec):
            return self.ensemble.ensemble
        return self.ensemble


def _expect(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{path}: {message}")


def _get_number(d: dict, key: str, path: str, default=None, positive=False, non_negative=False):
    if key not in d:
        _expect(default is not None, f"{path}.{key}", "required field is missing")
        return default
    value = d[key]
    _expect(isinstance(value, (int, float)) and not isinstance(value, bool), f"{path}.{key}", "must be a number")
    if positive:
        _expect(value > 0, f"{path}.{key}", "must be > 0")
    if non_negative:
        _expect(value >= 0, f"{path}.{key}", "must be >= 0")
    return float(value)


def _parse_band(entry: Any, path: str) -> RangeBand:
    _expect(
        isinstance(entry, (list, tuple)) and len(entry) == 2,
        path,
        "band must be a [inner, outer] pair",
    )
    inner, outer = entry
    for v, name in ((inner, "inner"), (outer, "outer")):
        _expect(
            isinstance(v, (int, float)) and not isinstance(v, bool),
            f"{path}.{name}",
            "must be a number",
        )
    try:
        return RangeBand(float(inner), float(outer))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _parse_oracle(d: dict, path: str, base: OracleParams) -> OracleParams:
    known = {
        "base_recall",
        "density_floor",
        "recall_decay",
        "sigma_t0",
        "sigma_t_slope",
        "sigma_t_voxel",
        "yaw_sigma",
        "score_calibration",
        "fp_rate",
        "seed",
    }
    for key in d:
        _expect(key in known, f"{path}.{key}", "unknown oracle field")
    kwargs: Dict[str, Any] = {}
    for key in known - {"score_calibration", "seed"}:
        if key in d:
            kwargs[key] = _get_number(d, key, path, default=getattr(base, key))
    if "seed" in d:
        _expect(isinstance(d["seed"], int), f"{path}.seed", "must be an integer")
        kwargs["seed"] = d["seed"]
    if "score_calibration" in d:
        try:
            kwargs["score_calibration"] = ScoreCalibration(d["score_calibration"])
        except ValueError:
            raise ConfigError(
                f"{path}.score_calibration: unknown value {d['score_calibration']!r}"
            ) from None
    try:
        return replace(base, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _parse_latency(d: dict, path: str, base: LatencyParams) -> LatencyParams:
    known = {"c_point_per_kvoxel", "c_backbone_per_mcell", "c_neck_per_mcell", "c_head", "c_post"}
    for key in d:
        _expect(key in known, f"{path}.{key}", "unknown latency field")
    kwargs = {
        key: _get_number(d, key, path, default=getattr(base, key), non_negative=True)
        for key in known
        if key in d
    }
    return replace(base, **kwargs)


def _parse_expert(entry: Any, path: str) -> RangeExpertConfig:
    _expect(isinstance(entry, dict), path, "expert must be an object")
    profile = None
    if "profile" in entry:
        _expect(entry["profile"] in PROFILES, f"{path}.profile", f"unknown profile; available: {sorted(PROFILES)}")
        profile = get_profile(entry["profile"])
    train_range = _get_number(entry, "train_range", path, positive=True)
    voxel_reciprocal = _get_number(entry, "voxel_reciprocal", path, positive=True)
    infer_range = _get_number(entry, "infer_range", path, default=train_range, positive=True)
    mode = profile.generalization_mode if profile else GeneralizationMode.LOCAL_CALIBRATED
    if "generalization_mode" in entry:
        try:
            mode = GeneralizationMode(entry["generalization_mode"])
        except ValueError:
            raise ConfigError(
                f"{path}.generalization_mode: unknown value {entry['generalization_mode']!r}"
            ) from None
    oracle = profile.oracle if profile else OracleParams()
    if "seed" in entry:
        _expect(isinstance(entry["seed"], int), f"{path}.seed", "must be an integer")
        oracle = replace(oracle, seed=entry["seed"])
    if "oracle" in entry:
        _expect(isinstance(entry["oracle"], dict), f"{path}.oracle", "must be an object")
        oracle = _parse_oracle(entry["oracle"], f"{path}.oracle", oracle)
    latency = profile.latency if profile else RangeExpertConfig(1, 1, 1).latency
    if "latency" in entry:
        _expect(isinstance(entry["latency"], dict), f"{path}.latency", "must be an object")
        latency = _parse_latency(entry["latency"], f"{path}.latency", latency)
    return RangeExpertConfig(
        train_range=train_range,
        voxel_reciprocal=voxel_reciprocal,
        infer_range=infer_range,
        generalization_mode=mode,
        oracle=oracle,
        latency=latency,
    )


def _parse_ensemble(
    d: dict, path: str, experts: Sequence[RangeExpertConfig], range_mode: RangeMode
) -> Tuple[Optional[Union[EnsembleSpec, NearFarSpec]], List[RangeBand]]:
    _expect("bands" in d, f"{path}.bands", "required field is missing")
    raw_bands = d["bands"]
    _expect(isinstance(raw_bands, list) and raw_bands, f"{path}.bands", "must be a non-empty list")
    bands = [_parse_band(b, f"{path}.bands[{i}]") for i, b in enumerate(raw_bands)]
    _expect(
        len(bands) == len(experts),
        f"{path}.bands",
        f"{len(bands)} bands for {len(experts)} experts",
    )
    combine = CombineMode.BAND_ROUTE
    if "combine_mode" in d:
        try:
            combine = CombineMode(d["combine_mode"])
        except ValueError:
            raise ConfigError(f"{path}.combine_mode: unknown value {d['combine_mode']!r}") from None
    mask = bool(d.get("test_time_mask", False))
    nms_thresh = _get_number(d, "nms_dist_thresh", path, default=1.0, positive=True)
    try:
        spec = EnsembleSpec(
            experts=tuple(zip(experts, bands)),
            combine_mode=combine,
            test_time_mask=mask,
            nms_dist_thresh=nms_thresh,
            range_mode=range_mode,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if "frequencies" in d:
        freqs = d["frequencies"]
        _expect(
            isinstance(freqs, list) and all(isinstance(f, int) and not isinstance(f, bool) for f in freqs),
            f"{path}.frequencies",
            "must be a list of integers",
        )
        try:
            return NearFarSpec(ensemble=spec, frequencies=tuple(freqs)), bands
        except ValueError as exc:
            raise ConfigError(f"{path}.frequencies: {exc}") from None
    return spec, bands


def _parse_match(d: dict, path: str) -> MatchSpec:
    kwargs: Dict[str, Any] = {}
    if "thresholds" in d:
        ths = d["thresholds"]
        _expect(isinstance(ths, list) and ths, f"{path}.thresholds", "must be a non-empty list")
        kwargs["thresholds"] = tuple(float(t) for t in ths)
    for key in ("tp_threshold", "ate_cap", "ase_cap", "aoe_cap", "ave_cap"):
        if key in d:
            kwargs[key] = _get_number(d, key, path, positive=True)
    if "recall_points" in d:
        _expect(
            isinstance(d["recall_points"], int) and d["recall_points"] > 1,
            f"{path}.recall_points",
            "must be an integer > 1",
        )
        kwargs["recall_points"] = d["recall_points"]
    try:
        return MatchSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def parse_config(raw: Any, base_dir: Union[str, Path] = ".") -> ExperimentConfig:
    """Validate a parsed JSON document into an ExperimentConfig."""
    base_dir = Path(base_dir)
    _expect(isinstance(raw, dict), "$", "config root must be an object")
    name = raw.get("name", "experiment")
    _expect(isinstance(name, str) and name, "name", "must be a non-empty string")

    _expect("scenario" in raw, "scenario", "required field is missing")
    scen = raw["scenario"]
    _expect(isinstance(scen, dict), "scenario", "must be an object")
    scenario: Union[ScenarioSpec, Path]
    if "path" in scen:
        scenario = base_dir / scen["path"]
        _expect(scenario.exists(), "scenario.path", f"file not found: {scenario}")
    else:
        try:
            scenario = scenario_spec_from_dict(scen)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"scenario: {exc}") from None

    _expect("experts" in raw, "experts", "required field is missing")
    _expect(isinstance(raw["experts"], list) and raw["experts"], "experts", "must be a non-empty list")
    experts = [_parse_expert(e, f"experts[{i}]") for i, e in enumerate(raw["experts"])]

    range_mode = RangeMode.BEV_L2
    eval_raw = raw.get("eval", {})
    _expect(isinstance(eval_raw, dict), "eval", "must be an object")
    if "range_mode" in eval_raw:
        try:
            range_mode = RangeMode(eval_raw["range_mode"])
        except ValueError:
            raise ConfigError(f"eval.range_mode: unknown value {eval_raw['range_mode']!r}") from None

    ensemble = None
    ensemble_bands: List[RangeBand] = []
    if "ensemble" in raw:
        _expect(isinstance(raw["ensemble"], dict), "ensemble", "must be an object")
        ensemble, ensemble_bands = _parse_ensemble(raw["ensemble"], "ensemble", experts, range_mode)

    match = _parse_match(eval_raw, "eval")
    if "bands" in eval_raw:
        raw_bands = eval_raw["bands"]
        _expect(isinstance(raw_bands, list) and raw_bands, "eval.bands", "must be a non-empty list")
        eval_bands = [_parse_band(b, f"eval.bands[{i}]") for i, b in enumerate(raw_bands)]
    elif ensemble_bands:
        eval_bands = list(ensemble_bands)
    else:
        eval_bands = [RangeBand(0.0, math.inf)]

    sweep_window = raw.get("sweep_window", 5)
    _expect(
        isinstance(sweep_window, int) and sweep_window >= 1,
        "sweep_window",
        "must be an integer >= 1",
    )

    out_dir: Optional[Path] = None
    if os.environ.get(OUTPUT_DIR_ENV):
        out_dir = Path(os.environ[OUTPUT_DIR_ENV])
    elif "output" in raw:
        _expect(isinstance(raw["output"], dict), "output", "must be an object")
        if "dir" in raw["output"]:
            out_dir = base_dir / raw["output"]["dir"]

    return ExperimentConfig(
        name=name,
        scenario=scenario,
        experts=experts,
        ensemble=ensemble,
        match=match,
        eval_bands=eval_bands,
        range_mode=range_mode,
        sweep_window=sweep_window,
        out_dir=out_dir,
    )


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(raw, base_dir=path.parent)
