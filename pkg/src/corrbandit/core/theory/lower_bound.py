from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from corrbandit.core.environment.builders import build_lb_cov, lb_rho2_limit
from corrbandit.core.environment.gaps import GapProfile, gap_profile
from corrbandit.errors import DegenerateGapsError, TooFewArmsError

log = logging.getLogger(__name__)

LOG_6 = math.log(6.0)


def eps_tilde(n: float, K: int, c_tilde: float, u: float = 1.0) -> float:
    """ε̃_n = c̃ u max{(8/n) log(12K(K−1)n), √((8/n) log(12K(K−1)n))}。"""
    if n <= 0:
        return math.inf
    a = 8.0 / n * math.log(12.0 * K * (K - 1) * n)
    return c_tilde * u * max(a, math.sqrt(max(a, 0.0)))


def h_lb_of(gaps: GapProfile) -> float:
    """H_lb = Σ_{i≠i*} 1/Δ_i；有零间隔时抛 DegenerateGaps。"""
    sub = np.delete(gaps.gaps, gaps.best_arm)
    if np.any(sub <= 0.0):
        raise DegenerateGapsError(f"{int(np.sum(sub <= 0.0))} sub-optimal arm(s) have zero gap")
    return math.fsum((1.0 / sub).tolist())


@dataclass(frozen=True)
class LowerBoundParams:
    K: int
    rho: float
    n: float
    u: float
    ub_rho2: float
    c1: float
    c2: float
    c_tilde: float
    eps_tilde_n: float
    h_lb: float

    @classmethod
    def build(cls, K: int, rho: float, n: float, *, u: float = 1.0, h_lb: float | None = None) -> "LowerBoundParams":
        """
        UB_{ρ²} = 1 − 1/√(K−2)，c₁ = 1/(1−UB)，c₂ = ρ/(1−UB)，c̃ = max(3c₁, 48c₂)。
        h_lb 缺省按下界实例的真实间隔计算。
        """
        if K < 3:
            raise TooFewArmsError(f"need K >= 3 arms, got K={K}")
        ub = lb_rho2_limit(K)
        c1 = 1.0 / (1.0 - ub)
        c2 = rho / (1.0 - ub)
        c_tilde = max(3.0 * c1, 48.0 * c2)
        if h_lb is None:
            h_lb = h_lb_of(gap_profile(build_lb_cov(K, rho)))
        return cls(
            K=int(K), rho=float(rho), n=float(n), u=float(u), ub_rho2=ub, c1=c1, c2=c2,
            c_tilde=c_tilde, eps_tilde_n=eps_tilde(n, K, c_tilde, u), h_lb=float(h_lb),
        )

    @property
    def rho2_ok(self) -> bool:
        return self.rho * self.rho <= self.ub_rho2

    def with_n(self, n: float) -> "LowerBoundParams":
        return replace(self, n=float(n), eps_tilde_n=eps_tilde(n, self.K, self.c_tilde, self.u))

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "rho": self.rho,
            "n": self.n,
            "u": self.u,
            "ub_rho2": self.ub_rho2,
            "c1": self.c1,
            "c2": self.c2,
            "c_tilde": self.c_tilde,
            "eps_tilde_n": self.eps_tilde_n,
            "h_lb": self.h_lb,
        }


def log_lower_bound_value(params: LowerBoundParams, gaps: GapProfile) -> float:
    """
    ln 下界 = −ln 6 − 6nK/H_lb − C(K,2)·n·ε̃_n，H_lb 取自 gaps。
    默认 c̃ 下 n ≥ 1 时指数远低于 double 的下溢阈值，对数值才有分辨力。
    """
    if not params.rho2_ok:
        log.warning("rho^2=%.6g exceeds UB=%.6g; the lower bound assumption does not hold",
                    params.rho * params.rho, params.ub_rho2)
    h_lb = h_lb_of(gaps)
    n, K = params.n, params.K
    if n <= 0:
        return -LOG_6
    return -LOG_6 - 6.0 * n * K / h_lb - math.comb(K, 2) * n * params.eps_tilde_n


def lower_bound_value(params: LowerBoundParams, gaps: GapProfile) -> float:
    """(1/6) exp(−6nK/H_lb − C(K,2)·n·ε̃_n)；可能下溢为 0.0，此时看 log_lower_bound_value。"""
    return math.exp(log_lower_bound_value(params, gaps))
