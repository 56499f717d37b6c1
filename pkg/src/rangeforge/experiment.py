"""End-to-end orchestration: generate/load -> run experts and ensembles -> evaluate.

Everything here is a deterministic function of the config and its seeds; the
same config always yields byte-identical reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .config import ExperimentConfig
from .detector import RangeExpertConfig
from .ensemble import (
    CombineMode,
    EnsembleSpec,
    FrameResult,
    NearFarSpec,
    run_near_far,
    run_range_ensemble,
)
from .evaluation import CohortReport, evaluate_cohorts
from .rangeops import RangeBand
from .scenario import Scenario, generate_scenario
from .storage import load_scenario

__all__ = ["ExperimentResult", "run_single_expert", "run_pipeline", "run_experiment", "run_frontier"]


@dataclass(eq=False)
class ExperimentResult:
    scenario: Scenario
    reports: List[CohortReport]
    frame_results: Dict[str, List[FrameResult]]

    def report(self, method: str) -> CohortReport:
        for rep in self.reports:
            if rep.method == method:
                return rep
        raise KeyError(f"no report for method {method!r}")


def _load_or_generate(config: ExperimentConfig) -> Scenario:
    if isinstance(config.scenario, Path):
        return load_scenario(config.scenario)
    return generate_scenario(config.scenario)


def run_single_expert(
    expert: RangeExpertConfig, frames: Sequence, sweep_window: int = 5
) -> List[FrameResult]:
    """Run one expert over the stream with no band routing or masking."""
    spec = EnsembleSpec(
        experts=((expert, RangeBand(0.0, math.inf)),),
        combine_mode=CombineMode.BAND_ROUTE,
    )
    return run_range_ensemble(spec, frames, sweep_window)


def run_pipeline(
    pipeline, frames: Sequence, sweep_window: int = 5
) -> List[FrameResult]:
    if isinstance(pipeline, NearFarSpec):
        return run_near_far(pipeline, frames, sweep_window)
    return run_range_ensemble(pipeline, frames, sweep_window)


def _evaluate(
    config: ExperimentConfig, scenario: Scenario, results: Sequence[FrameResult], method: str
) -> CohortReport:
    return evaluate_cohorts(
        dets_per_frame=[r.detections for r in results],
        gts_per_frame=[list(f.truth) for f in scenario.frames],
        bands=config.eval_bands,
        spec=config.match,
        range_mode=config.range_mode,
        timings=[r.timings for r in results],
        method=method,
    )


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run the configured pipeline (ensemble if present, else the experts)."""
    scenario = _load_or_generate(config)
    reports: List[CohortReport] = []
    frame_results: Dict[str, List[FrameResult]] = {}
    if config.ensemble is not None:
        method = "near_far" if isinstance(config.ensemble, NearFarSpec) else "range_ensemble"
        results = run_pipeline(config.ensemble, scenario.frames, config.sweep_window)
        frame_results[method] = results
        reports.append(_evaluate(config, scenario, results, method))
    else:
        for expert in config.experts:
            results = run_single_expert(expert, scenario.frames, config.sweep_window)
            frame_results[expert.name] = results
            reports.append(_evaluate(config, scenario, results, expert.name))
    return ExperimentResult(scenario, reports, frame_results)


def run_frontier(
    config: ExperimentConfig,
    frequencies: Optional[Sequence[int]] = None,
    parallel: bool = False,
) -> ExperimentResult:
    """Accuracy-latency sweep: each expert alone, then the ensembles.

    Emits one report per pipeline: every configured expert run standalone,
    the synchronous range ensemble, the ensemble with test-time range
    masking, and (when frequencies are configured or passed) the near-far
    ensemble. ``parallel`` runs the independent pipelines concurrently; the
    pipelines are pure so outputs are identical in both modes.
    """
    scenario = _load_or_generate(config)
    jobs: List[tuple] = [
        (expert.name, run_single_expert, (expert, scenario.frames, config.sweep_window))
        for expert in config.experts
    ]
    base = config.base_ensemble()
    if base is not None:
        sync = EnsembleSpec(
            experts=base.experts,
            combine_mode=base.combine_mode,
            test_time_mask=False,
            nms_dist_thresh=base.nms_dist_thresh,
            range_mode=base.range_mode,
        )
        masked = EnsembleSpec(
            experts=base.experts,
            combine_mode=base.combine_mode,
            test_time_mask=True,
            nms_dist_thresh=base.nms_dist_thresh,
            range_mode=base.range_mode,
        )
        jobs.append(("range_ensemble", run_range_ensemble, (sync, scenario.frames, config.sweep_window)))
        jobs.append(("range_ensemble+crop", run_range_ensemble, (masked, scenario.frames, config.sweep_window)))
        freqs = frequencies
        if freqs is None and isinstance(config.ensemble, NearFarSpec):
            freqs = config.ensemble.frequencies
        if freqs is not None:
            near_far = NearFarSpec(ensemble=sync, frequencies=tuple(freqs))
            jobs.append(("near_far", run_near_far, (near_far, scenario.frames, config.sweep_window)))

    if parallel:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=min(8, len(jobs))) as pool:
            futures = [(method, pool.submit(fn, *args)) for method, fn, args in jobs]
            outcomes = [(method, future.result()) for method, future in futures]
    else:
        outcomes = [(method, fn(*args)) for method, fn, args in jobs]

    reports: List[CohortReport] = []
    frame_results: Dict[str, List[FrameResult]] = {}
    for method, results in outcomes:
        frame_results[method] = results
        reports.append(_evaluate(config, scenario, results, method))
    return ExperimentResult(scenario, reports, frame_results)
