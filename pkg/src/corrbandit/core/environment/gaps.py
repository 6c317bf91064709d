from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from corrbandit.core.environment.covariance import CovarianceModel
from corrbandit.errors import InvalidIndexError, ZeroVarianceError

log = logging.getLogger(__name__)


def true_mse(model: CovarianceModel, i: int) -> float:
    """
    ℰ_i = Σ_{j≠i} σ_j² (1 − ρ_ij²)：用 x_i 的最优线性估计去估计其它各臂的 MSE 之和。
    用 math.fsum 求和，结果与求和顺序无关（臂重排后逐位一致）。
    """
    K = model.K
    if not 0 <= i < K:
        raise InvalidIndexError(f"arm index {i} out of range for K={K}")
    s = model.matrix
    var_i = float(s[i, i])
    if var_i <= 0.0:
        raise ZeroVarianceError(f"arm {i + 1} has zero variance; rho undefined")
    sd_i = math.sqrt(var_i)
    terms = []
    for j in range(K):
        if j == i:
            continue
        var_j = float(s[j, j])
        rho = float(s[i, j]) / (sd_i * math.sqrt(var_j))
        terms.append(var_j * (1.0 - rho * rho))
    return math.fsum(terms)


def true_mse_all(model: CovarianceModel) -> np.ndarray:
    return np.array([true_mse(model, i) for i in range(model.K)], dtype=np.float64)


@dataclass(frozen=True, eq=False)
class GapProfile:
    mse: np.ndarray            # (K,) ℰ_i
    best_arm: int              # i*（0-based）
    gaps: np.ndarray           # (K,) Δ_i = ℰ_i − ℰ_{i*}
    ordered_gaps: np.ndarray   # (K,) Δ_(1) … Δ_(K)，Δ_(1) ≜ Δ_(2)

    @property
    def K(self) -> int:
        return int(self.mse.shape[0])

    def to_dict(self) -> dict:
        return {
            "mse": self.mse.tolist(),
            "best_arm": self.best_arm + 1,
            "gaps": self.gaps.tolist(),
            "ordered_gaps": self.ordered_gaps.tolist(),
        }


def gap_profile(model: CovarianceModel) -> GapProfile:
    mse = true_mse_all(model)
    # np.argmin 取第一个最小值：并列时选编号最小的臂
    best = int(np.argmin(mse))
    gaps = mse - mse[best]
    gaps[best] = 0.0
    return GapProfile(mse=mse, best_arm=best, gaps=gaps, ordered_gaps=order_gaps(gaps, best))


def order_gaps(gaps: np.ndarray, best: int) -> np.ndarray:
    """Δ_(1) ≤ Δ_(2) ≤ … 并令 Δ_(1) ≜ Δ_(2)。"""
    others = np.sort(np.delete(np.asarray(gaps, dtype=np.float64), best))
    return np.concatenate([[others[0]], others])


def log_bar(K: int) -> float:
    """loḡ(K) = Σ_{i=2}^{K−2} 1/i（K ≤ 3 时为空和 0）。"""
    return math.fsum(1.0 / i for i in range(2, K - 1))


def log_bar_full(K: int) -> float:
    """1/2 + Σ_{i=2}^{K} 1/i，H₂ ≤ H₁ ≤ 它 · H₂ 对任意间隔都成立。"""
    return 0.5 + math.fsum(1.0 / i for i in range(2, K + 1))


@dataclass(frozen=True)
class ComplexitySummary:
    h2: float
    h_bar: float
    h_lb: float
    log_bar_k: float
    h1: float
    log_bar_full_k: float
    K: int
    u: float
    degenerate: bool = False

    def ordering_holds(self, rtol: float = 1e-12) -> bool:
        """H₂ ≤ H₁ ≤ loḡ_full(K)·H₂ 且 H̄ ≥ H_lb/(K·u)。"""
        if self.degenerate:
            return False
        slack = 1.0 + rtol
        return (
            self.h2 <= self.h1 * slack
            and self.h1 <= self.log_bar_full_k * self.h2 * slack
            and self.h_bar * slack >= self.h_lb / (self.K * self.u)
        )

    def hbar_ordering_holds(self) -> bool:
        """H₂ ≤ H̄ ≤ loḡ(K)·H₂；仅作诊断，并非恒成立。"""
        if self.degenerate:
            return False
        return self.h2 <= self.h_bar <= self.log_bar_k * self.h2

    def to_dict(self) -> dict:
        return {
            "h2": self.h2,
            "h_bar": self.h_bar,
            "h_lb": self.h_lb,
            "h1": self.h1,
            "log_bar_k": self.log_bar_k,
            "log_bar_full_k": self.log_bar_full_k,
            "u": self.u,
            "degenerate": self.degenerate,
            "ordering_holds": self.ordering_holds(),
            "hbar_ordering_holds": self.hbar_ordering_holds(),
        }


def complexity_summary(profile: GapProfile, u: float = 1.0) -> ComplexitySummary:
    """
    H₂ = max_{i≥2} i/Δ_(i)²，H̄ = Σ_{i≠i*} 1/Δ_i²，H_lb = Σ_{i≠i*} 1/Δ_i。
    有次优间隔为 0 时不抛异常：返回 inf 并置 degenerate。
    """
    K = profile.K
    sub = np.delete(profile.gaps, profile.best_arm)
    if np.any(sub <= 0.0):
        log.warning("Degenerate gaps: %d sub-optimal arm(s) tie with the best arm",
                    int(np.sum(sub <= 0.0)))
        inf = math.inf
        return ComplexitySummary(
            h2=inf, h_bar=inf, h_lb=inf, log_bar_k=log_bar(K), h1=inf,
            log_bar_full_k=log_bar_full(K), K=K, u=float(u), degenerate=True,
        )

    og = profile.ordered_gaps
    idx = np.arange(1, K + 1, dtype=np.float64)
    h2 = float(np.max(idx[1:] / og[1:] ** 2))
    h_bar = math.fsum((1.0 / sub ** 2).tolist())
    h_lb = math.fsum((1.0 / sub).tolist())
    h1 = h_bar + 1.0 / float(og[1]) ** 2
    return ComplexitySummary(
        h2=h2, h_bar=h_bar, h_lb=h_lb, log_bar_k=log_bar(K), h1=h1,
        log_bar_full_k=log_bar_full(K), K=K, u=float(u),
    )
