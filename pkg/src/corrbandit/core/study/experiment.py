from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from corrbandit.core.algorithms.bounds import BoundParams, theoretical_error_bounds
from corrbandit.core.algorithms.result import CSV_COLUMNS, RunResult
from corrbandit.core.environment.builders import resolve_model
from corrbandit.core.environment.covariance import CovarianceModel
from corrbandit.core.environment.gaps import ComplexitySummary, GapProfile, complexity_summary, gap_profile
from corrbandit.core.export.exporters import OutputStage, write_csv, write_json
from corrbandit.core.study.config import StudyConfig
from corrbandit.core.study.runner import ReplicationTask, make_tasks, run_replications
from corrbandit.errors import NonPositiveGapError

log = logging.getLogger(__name__)

# 三个实验的参照错误率（uniform / SR），auto 预算校准用
REFERENCE_ERROR_RATES: dict[str, dict[str, float]] = {
    "sigma1": {"uniform": 0.46, "sr": 0.35},
    "sigma2": {"uniform": 0.53, "sr": 0.43},
    "sigma3": {"uniform": 0.13, "sr": 0.08},
}


def auto_budget_grid(K: int, min_factor: float, max_factor: float, points: int) -> list[int]:
    """C(K,2) 的 [min_factor, max_factor] 倍之间取几何网格；去重后升序，且都 > C(K,2)。"""
    P = math.comb(K, 2)
    raw = np.geomspace(min_factor * P, max_factor * P, num=max(1, int(points)))
    return sorted({max(P + 1, int(round(v))) for v in raw})


@dataclass(frozen=True)
class AlgorithmSummary:
    algorithm: str
    budget: int
    replications: int
    errors: int
    mean_pulls: float
    histogram: tuple[int, ...]       # 第 a 项 = 推荐臂 a+1 的次数
    bound: float | None

    @property
    def error_frequency(self) -> float:
        return self.errors / self.replications

    @property
    def std_error(self) -> float:
        p = self.error_frequency
        return math.sqrt(p * (1.0 - p) / self.replications)

    def to_dict(self) -> dict[str, Any]:
        return {
            "algorithm": self.algorithm,
            "n": self.budget,
            "replications": self.replications,
            "errors": self.errors,
            "error_frequency": self.error_frequency,
            "std_error": self.std_error,
            "mean_pulls": self.mean_pulls,
            "histogram": list(self.histogram),
            "bound": self.bound,
        }


@dataclass(frozen=True)
class ExperimentReport:
    model: str
    K: int
    profile: GapProfile
    complexity: ComplexitySummary
    summaries: tuple[AlgorithmSummary, ...]
    config_echo: dict[str, Any]
    calibration: dict[str, Any] | None = None
    clamp_events: int = 0
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def summary(self, algorithm: str, budget: int | None = None) -> AlgorithmSummary:
        for s in self.summaries:
            if s.algorithm == algorithm and (budget is None or s.budget == budget):
                return s
        raise KeyError((algorithm, budget))

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": self.model,
            "K": self.K,
            "best_arm": self.profile.best_arm + 1,
            "gaps": self.profile.to_dict(),
            "complexity": self.complexity.to_dict(),
            "results": [s.to_dict() for s in self.summaries],
            "calibration": self.calibration,
            "clamp_events": self.clamp_events,
            "warnings": list(self.warnings),
            "config": self.config_echo,
        }


def summarize(
    K: int,
    done: list[tuple[ReplicationTask, RunResult]],
    bound_params: BoundParams | None,
) -> list[AlgorithmSummary]:
    groups: dict[tuple[int, str], list[RunResult]] = {}
    for task, res in done:
        groups.setdefault((task.budget, task.algorithm), []).append(res)

    out = []
    for (budget, algo), runs in groups.items():
        hist = np.bincount([r.recommended for r in runs], minlength=K)
        bound = None
        if bound_params is not None:
            try:
                bound = theoretical_error_bounds(algo, bound_params.with_n(budget))
            except NonPositiveGapError as e:
                log.warning("No %s bound at n=%d: %s", algo, budget, e)
        out.append(
            AlgorithmSummary(
                algorithm=algo,
                budget=budget,
                replications=len(runs),
                errors=sum(0 if r.correct else 1 for r in runs),
                mean_pulls=float(np.mean([r.total_pulls for r in runs])),
                histogram=tuple(int(v) for v in hist),
                bound=bound,
            )
        )
    return out


def calibrate(model_name: str, summaries: list[AlgorithmSummary], complexity: ComplexitySummary) -> dict[str, Any] | None:
    """
    在扫描网格里找 uniform 错误率最接近参照值的预算，报告该预算下各算法的错误率；
    同时给出 H̄/32² 供对照。
    """
    ref = REFERENCE_ERROR_RATES.get(model_name)
    out: dict[str, Any] = {"hbar_over_32sq": complexity.h_bar / 32.0 ** 2}
    uni = [s for s in summaries if s.algorithm == "uniform"]
    if ref is None or not uni:
        return out
    best = min(uni, key=lambda s: (abs(s.error_frequency - ref["uniform"]), s.budget))
    at_budget = {s.algorithm: s.error_frequency for s in summaries if s.budget == best.budget}
    out.update(
        {
            "reference": ref,
            "budget": best.budget,
            "error_frequency": at_budget,
            "uniform_within_0_05": abs(best.error_frequency - ref["uniform"]) <= 0.05,
        }
    )
    if "sr" in at_budget:
        out["sr_within_0_10"] = abs(at_budget["sr"] - ref["sr"]) <= 0.10
    return out


def run_experiment(cfg: StudyConfig, out_dir: Path | None = None) -> ExperimentReport:
    model: CovarianceModel = resolve_model(cfg.model, as_printed=cfg.as_printed, tol_psd=cfg.tol_psd)
    K = model.K
    cfg.check_budget(K)

    profile = gap_profile(model)
    complexity = complexity_summary(profile, u=model.max_variance)
    warnings: list[str] = []
    if not model.psd:
        warnings.append(f"covariance is not PSD (min eigenvalue {model.min_eigenvalue:.3e}); arms are sampled pairwise")
    if complexity.degenerate:
        warnings.append("degenerate gaps: some sub-optimal arm ties with the best arm")
    bound_params = None if complexity.degenerate else BoundParams.from_model(model, 0, c=cfg.bound_constant)

    budgets = [cfg.budget] if cfg.budget is not None else auto_budget_grid(
        K, cfg.auto_budget_min_factor, cfg.auto_budget_max_factor, cfg.auto_budget_points
    )
    log.info("Experiment: model=%s K=%d algorithms=%s budgets=%s R=%d workers=%d",
             model.name, K, list(cfg.algorithms), budgets, cfg.replications, cfg.workers)

    tasks = make_tasks(model, cfg.algorithms, budgets, cfg.replications, cfg.base_seed,
                       pooled_variance=cfg.pooled_variance)
    done = run_replications(tasks, cfg.workers)

    summaries = summarize(K, done, bound_params)
    clamps = sum(r.clamp_events for _, r in done)
    if clamps:
        warnings.append(f"pooled-variance rho_hat clamped {clamps} time(s)")
        log.warning("Pooled-variance rho_hat clamped %d time(s)", clamps)

    echo = cfg.echo()
    report = ExperimentReport(
        model=model.name,
        K=K,
        profile=profile,
        complexity=complexity,
        summaries=tuple(summaries),
        config_echo=echo,
        calibration=calibrate(model.name, summaries, complexity) if cfg.budget is None else None,
        clamp_events=clamps,
        warnings=tuple(warnings),
    )
    for s in summaries:
        log.info("%-7s n=%-7d error=%.3f ± %.3f mean_pulls=%.1f",
                 s.algorithm, s.budget, s.error_frequency, s.std_error, s.mean_pulls)

    if out_dir is not None:
        with OutputStage(out_dir) as stage:
            rows = (res.to_csv_row(model=model.name, replication=task.replication) for task, res in done)
            write_csv(stage.path("results.csv"), CSV_COLUMNS, rows)
            write_json(stage.path("summary.json"), report.to_dict())
            if cfg.write_traces:
                for task, res in done:
                    write_json(stage.path(f"traces/{task.algorithm}_n{task.budget}_r{task.replication:04d}.json"),
                               res.to_json())
    return report
