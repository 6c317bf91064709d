from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from corrbandit.core.algorithms.bounds import (
    correlation_tail_bound,
    mse_concentration_bound,
    stddev_tail_bound,
    variance_tail_bound,
)
from corrbandit.core.environment.builders import resolve_model
from corrbandit.core.environment.covariance import CovarianceModel
from corrbandit.core.environment.gaps import true_mse
from corrbandit.core.environment.sampler import Environment
from corrbandit.core.estimation.pair_stats import mse_terms_from_sums
from corrbandit.core.export.exporters import OutputStage, write_csv, write_json
from corrbandit.core.study.config import StudyConfig
from corrbandit.core.study.seeding import stream_seed

log = logging.getLogger(__name__)

TAILS_COLUMNS = [
    "quantity",
    "n",
    "eps",
    "trials",
    "exceed",
    "frequency",
    "std_error",
    "bound",
    "log_frequency",
]
QUANTITIES = ("sigma2_hat", "sigma_hat", "rho_hat", "mse_hat")

# 每块最多抽这么多个二元样本，控制内存
_CHUNK_SAMPLES = 2_000_000


@dataclass(frozen=True)
class TailRow:
    quantity: str
    n: int
    eps: float
    trials: int
    exceed: int
    bound: float

    @property
    def frequency(self) -> float:
        return self.exceed / self.trials

    @property
    def std_error(self) -> float:
        p = self.frequency
        return math.sqrt(p * (1.0 - p) / self.trials)

    def to_csv_row(self) -> dict[str, Any]:
        return {
            "quantity": self.quantity,
            "n": self.n,
            "eps": self.eps,
            "trials": self.trials,
            "exceed": self.exceed,
            "frequency": self.frequency,
            "std_error": self.std_error,
            "bound": self.bound,
            "log_frequency": math.log(self.frequency) if self.exceed else "",
        }


@dataclass(frozen=True)
class ConcentrationReport:
    model: str
    arm: int          # 0-based
    partner: int      # 0-based
    rows: tuple[TailRow, ...]
    mse_abs_error: dict[int, float]    # n -> mean |ℰ̂ − ℰ|
    warnings: tuple[str, ...] = ()

    def series(self, quantity: str, eps: float) -> list[TailRow]:
        return sorted((r for r in self.rows if r.quantity == quantity and r.eps == eps), key=lambda r: r.n)

    def slopes(self) -> dict[str, dict[str, Any]]:
        """log(频率) 对 n 的线性拟合斜率（只用非零频率点，少于两点时为 None）。"""
        out: dict[str, dict[str, Any]] = {}
        for q in QUANTITIES:
            for eps in sorted({r.eps for r in self.rows}):
                pts = [(r.n, math.log(r.frequency)) for r in self.series(q, eps) if r.exceed]
                slope = None
                if len(pts) >= 2:
                    xs, ys = zip(*pts)
                    slope = float(np.polyfit(np.asarray(xs, float), np.asarray(ys, float), 1)[0])
                out[f"{q}@{eps:g}"] = {"slope": slope, "points": len(pts)}
        return out

    def monotone(self, quantity: str, eps: float, n_se: float = 2.0) -> bool:
        """频率随 n 不增（允许 n_se 个合并二项标准误的上升）。"""
        s = self.series(quantity, eps)
        for a, b in zip(s, s[1:]):
            pooled = math.sqrt(a.std_error ** 2 + b.std_error ** 2)
            if b.frequency > a.frequency + n_se * pooled:
                return False
        return True

    def below_bound(self, quantity: str | None = None) -> bool:
        return all(r.frequency <= r.bound for r in self.rows if quantity is None or r.quantity == quantity)

    def error_ratios(self) -> dict[str, float]:
        ns = sorted(self.mse_abs_error)
        return {
            f"{a}->{b}": self.mse_abs_error[a] / self.mse_abs_error[b]
            for a, b in zip(ns, ns[1:])
            if self.mse_abs_error[b] > 0
        }

    def to_dict(self) -> dict[str, Any]:
        eps_values = sorted({r.eps for r in self.rows})
        return {
            "model": self.model,
            "arm": self.arm + 1,
            "partner": self.partner + 1,
            "slopes": self.slopes(),
            "monotone": {f"{q}@{e:g}": self.monotone(q, e) for q in QUANTITIES for e in eps_values},
            "below_bound": {q: self.below_bound(q) for q in QUANTITIES},
            "mse_abs_error": {str(n): v for n, v in sorted(self.mse_abs_error.items())},
            "mse_error_ratios": self.error_ratios(),
            "warnings": list(self.warnings),
        }


def _pair_sums(env: Environment, a: int, b: int, trials: int, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    对 (a, b) 做 trials 组、每组 n 次拉取；返回每组的 (Σx_a², Σx_b², Σx_a x_b)。
    """
    pair = (min(a, b), max(a, b))
    ca, cb = (0, 1) if a < b else (1, 0)
    chunk = max(1, min(trials, _CHUNK_SAMPLES // max(1, n)))
    saa, sbb, sab = [], [], []
    left = trials
    while left > 0:
        t = min(chunk, left)
        x = env.pull_trials(pair, t, n)
        xa, xb = x[:, :, ca], x[:, :, cb]
        saa.append(np.einsum("tn,tn->t", xa, xa))
        sbb.append(np.einsum("tn,tn->t", xb, xb))
        sab.append(np.einsum("tn,tn->t", xa, xb))
        left -= t
    return np.concatenate(saa), np.concatenate(sbb), np.concatenate(sab)


def sample_deviations(model: CovarianceModel, arm: int, partner: int, n: int, trials: int, seed: int) -> dict[str, np.ndarray]:
    """
    一组 n 下的偏差样本（各 trials 个）：
      σ̂_arm² − σ²、σ̂_arm − σ、ρ̂(arm, partner) − ρ、ℰ̂_arm − ℰ_arm（逐对估计）。
    """
    env = Environment(model, seed)
    K = model.K
    var = float(model.matrix[arm, arm])
    mse = np.zeros(trials)
    dev: dict[str, np.ndarray] = {}
    for p in range(K):
        if p == arm:
            continue
        s_ii, s_pp, s_ip = _pair_sums(env, arm, p, trials, n)
        terms, rho = mse_terms_from_sums(n, s_ii, s_pp, s_ip)
        mse += terms
        if p == partner:
            dev["sigma2_hat"] = s_ii / n - var
            dev["sigma_hat"] = np.sqrt(s_ii / n) - math.sqrt(var)
            dev["rho_hat"] = np.clip(rho, -1.0, 1.0) - model.rho(arm, partner)
    dev["mse_hat"] = mse - true_mse(model, arm)
    return dev


def run_concentration_study(cfg: StudyConfig, out_dir: Path | None = None) -> ConcentrationReport:
    model = resolve_model(cfg.model, as_printed=cfg.as_printed, tol_psd=cfg.tol_psd)
    K = model.K
    cfg.check_arms(K)
    arm, partner = cfg.arm - 1, cfg.partner - 1
    var = float(model.matrix[arm, arm])
    l = model.min_variance
    log.info("Concentration study: model=%s K=%d arm=%d partner=%d n_grid=%s eps_grid=%s trials=%d",
             model.name, K, cfg.arm, cfg.partner, list(cfg.n_grid), list(cfg.eps_grid), cfg.trials)

    warnings: list[str] = []
    if not model.psd:
        warnings.append(f"covariance is not PSD (min eigenvalue {model.min_eigenvalue:.3e}); arms are sampled pairwise")

    rows: list[TailRow] = []
    mse_abs: dict[int, float] = {}
    for n in sorted(set(cfg.n_grid)):
        dev = sample_deviations(model, arm, partner, n, cfg.trials, stream_seed(cfg.base_seed, "concentration", n))
        mse_abs[n] = float(np.mean(np.abs(dev["mse_hat"])))
        for eps in cfg.eps_grid:
            bounds = {
                "sigma2_hat": variance_tail_bound(n, eps, var),
                "sigma_hat": stddev_tail_bound(n, eps, var),
                "rho_hat": correlation_tail_bound(n, eps, l),
                "mse_hat": mse_concentration_bound(n, K, l, eps, c=cfg.mse_conc_constant, prefactor=cfg.mse_conc_prefactor),
            }
            for q in QUANTITIES:
                exceed = int(np.count_nonzero(np.abs(dev[q]) > eps))
                rows.append(TailRow(quantity=q, n=n, eps=float(eps), trials=cfg.trials, exceed=exceed, bound=bounds[q]))
        log.info("n=%d done: mean |mse_hat - mse| = %.4g", n, mse_abs[n])

    report = ConcentrationReport(model=model.name, arm=arm, partner=partner, rows=tuple(rows), mse_abs_error=mse_abs,
                                 warnings=tuple(warnings))
    if not report.below_bound():
        log.warning("Some empirical tail frequency exceeds its bound")

    if out_dir is not None:
        with OutputStage(out_dir) as stage:
            write_csv(stage.path("tails.csv"), TAILS_COLUMNS, (r.to_csv_row() for r in rows))
            write_json(stage.path("summary.json"), {**report.to_dict(), "config": cfg.echo()})
    return report
