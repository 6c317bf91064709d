from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from corrbandit.core.environment.builders import build_lb_cov, transform_problem
from corrbandit.core.environment.gaps import complexity_summary, gap_profile
from corrbandit.core.environment.sampler import Environment
from corrbandit.core.export.exporters import OutputStage, write_json
from corrbandit.core.study.config import StudyConfig
from corrbandit.core.study.runner import make_tasks, run_replications
from corrbandit.core.study.seeding import stream_seed
from corrbandit.core.theory.kl import empirical_kl_batch, kl_gaussian, kl_table
from corrbandit.core.theory.lower_bound import LowerBoundParams, eps_tilde, h_lb_of, log_lower_bound_value
from corrbandit.errors import ConfigError, UnknownIdError

log = logging.getLogger(__name__)

# ξ 事件的概率至少 5/6，即超出频率不应超过 1/6
XI_LIMIT = 1.0 / 6.0
# 精确 KL 小于该值的对视为零项
ZERO_KL = 1e-15
# ξ 检查每块最多抽这么多个二元样本
_XI_CHUNK_SAMPLES = 2_000_000


def parse_lb_model(name: str) -> tuple[int, float]:
    parts = str(name).strip().split(":")
    if len(parts) != 3 or parts[0] != "lb":
        raise ConfigError(f"theory report needs an lb:K:rho model, got {name!r}")
    try:
        return int(parts[1]), float(parts[2])
    except ValueError as e:
        raise UnknownIdError(f"lower-bound model must be lb:K:rho, got {name!r}") from e


def xi_check(K: int, rho: float, m: int, t_grid, trials: int, c_tilde: float, u: float, base_seed: int) -> dict[str, Any]:
    """
    对第 m 个变换（0 起算）中 KL 非零的每一对，估计 P(ekl_t − kl > ε̃_t)，
    以及这些对取并集的频率。样本来自原问题。
    """
    base = build_lb_cov(K, rho)
    transformed = transform_problem(base, m)
    pairs = []
    for i in range(K):
        for j in range(i + 1, K):
            a0, a1 = base.marginal(i, j), transformed.marginal(i, j)
            kl = kl_gaussian(a0, a1)
            if kl > ZERO_KL:
                pairs.append(((i, j), a0, a1, kl))

    per_t = []
    for t in t_grid:
        env = Environment(base, stream_seed(base_seed, "xi", m, t))
        eps_t = eps_tilde(t, K, c_tilde, u)
        union = np.zeros(trials, dtype=bool)
        chunk = max(1, min(trials, _XI_CHUNK_SAMPLES // max(1, int(t))))
        rows = []
        for (i, j), a0, a1, kl in pairs:
            ekl = np.concatenate([
                empirical_kl_batch(env.pull_trials((i, j), min(chunk, trials - s), t), a0, a1)
                for s in range(0, trials, chunk)
            ])
            hit = (ekl - kl) > eps_t
            union |= hit
            rows.append({"i": i + 1, "j": j + 1, "kl": kl, "frequency": float(hit.mean()),
                         "mean_ekl": float(ekl.mean())})
        freq = float(union.mean())
        se = math.sqrt(max(freq * (1.0 - freq), XI_LIMIT * (1.0 - XI_LIMIT)) / trials)
        per_t.append({
            "t": int(t),
            "eps_tilde": eps_t,
            "pairs": rows,
            "union_frequency": freq,
            "passes": freq <= XI_LIMIT + 2.0 * se,
        })
    return {"m": m + 1, "trials": trials, "nonzero_pairs": len(pairs), "by_t": per_t}


@dataclass(frozen=True)
class TheoryReport:
    K: int
    rho: float
    params: LowerBoundParams
    kl_rows: tuple[dict, ...]
    curve: tuple[dict, ...]
    complexity: dict
    h_lb_direct: float
    empirical: tuple[dict, ...] = ()
    xi: dict | None = None
    warnings: tuple[str, ...] = field(default_factory=tuple)

    @property
    def all_bounds_hold(self) -> bool:
        return all(r["kl_le_gap"] and r["kl_le_cap"] for r in self.kl_rows)

    def to_dict(self) -> dict[str, Any]:
        return {
            "K": self.K,
            "rho": self.rho,
            "rho2": self.rho * self.rho,
            "lower_bound_params": self.params.to_dict(),
            "complexity": self.complexity,
            "h_lb_direct": self.h_lb_direct,
            "kl": list(self.kl_rows),
            "all_bounds_hold": self.all_bounds_hold,
            "lower_bound_curve": list(self.curve),
            "sr_empirical": list(self.empirical),
            "xi_check": self.xi,
            "warnings": list(self.warnings),
        }


def run_theory_report(cfg: StudyConfig, out_dir: Path | None = None) -> TheoryReport:
    K, rho = parse_lb_model(cfg.model)
    base = build_lb_cov(K, rho, tol_psd=cfg.tol_psd)
    profile = gap_profile(base)
    complexity = complexity_summary(profile, u=cfg.u)
    params = LowerBoundParams.build(K, rho, cfg.n_grid[0], u=cfg.u, h_lb=complexity.h_lb)
    log.info("Theory report: K=%d rho=%g rho2=%.6g UB=%.6g", K, rho, rho * rho, params.ub_rho2)

    warnings: list[str] = []
    if not params.rho2_ok:
        warnings.append(f"rho^2={rho * rho:.6g} exceeds UB_rho2={params.ub_rho2:.6g}")
    if not base.psd:
        warnings.append(f"lb:{K}:{rho:g} is not PSD (min eigenvalue {base.min_eigenvalue:.3e}); "
                        "KL terms and sampling use the 2x2 marginals only")

    kl_rows = []
    for row in kl_table(K, rho):
        gap = float(profile.gaps[row["m"] - 1])
        kl_rows.append({**row, "gap_m": gap, "kl_le_gap": row["kl"] <= gap + 1e-12})
    if not all(r["kl_le_gap"] for r in kl_rows):
        log.warning("Some pairwise KL exceeds the gap of its transformation")

    curve = []
    for n in cfg.n_grid:
        p_n = params.with_n(n)
        log_lb = log_lower_bound_value(p_n, profile)
        curve.append({"n": int(n), "eps_tilde_n": p_n.eps_tilde_n, "lower_bound": math.exp(log_lb),
                      "log_lower_bound": log_lb})

    empirical: list[dict] = []
    if cfg.theory_empirical:
        P = math.comb(K, 2)
        budgets = [int(n) for n in cfg.n_grid if n > P]
        tasks = make_tasks(base, ("sr",), budgets, cfg.replications, cfg.base_seed)
        done = run_replications(tasks, cfg.workers)
        for n in budgets:
            runs = [res for task, res in done if task.budget == n]
            freq = sum(0 if r.correct else 1 for r in runs) / len(runs)
            point = next(c for c in curve if c["n"] == n)
            empirical.append({"n": n, "replications": len(runs), "sr_error_frequency": freq,
                              "lower_bound": point["lower_bound"], "log_lower_bound": point["log_lower_bound"]})

    xi = None
    if cfg.xi_t_grid:
        if not 2 <= cfg.xi_transform <= K:
            raise ConfigError(f"xi_transform must lie in 2..{K}, got {cfg.xi_transform}")
        xi = xi_check(K, rho, cfg.xi_transform - 1, cfg.xi_t_grid, cfg.xi_trials, params.c_tilde, cfg.u, cfg.base_seed)

    report = TheoryReport(
        K=K,
        rho=rho,
        params=params,
        kl_rows=tuple(kl_rows),
        curve=tuple(curve),
        complexity=complexity.to_dict(),
        h_lb_direct=h_lb_of(profile),
        empirical=tuple(empirical),
        xi=xi,
        warnings=tuple(warnings),
    )
    if out_dir is not None:
        with OutputStage(out_dir) as stage:
            write_json(stage.path("theory.json"), {**report.to_dict(), "config": cfg.echo()})
    return report
