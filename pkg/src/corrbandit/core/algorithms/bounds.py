from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Literal

from corrbandit.core.algorithms.schedule import c_of_k
from corrbandit.core.environment.covariance import CovarianceModel
from corrbandit.core.environment.gaps import complexity_summary, gap_profile
from corrbandit.errors import NonPositiveGapError, UnknownIdError

log = logging.getLogger(__name__)

# 8 · 108 · 36² · 12²：MSE 集中界中的常数
DEFAULT_BOUND_CONSTANT = 1_119_744.0
UNIFORM_PREFACTOR = 84.0
SR_PREFACTOR = 84.0
MSE_CONC_PREFACTOR = 14.0  # 逐项联合界是 42K，用配置 mse_conc_prefactor: 42 选用

BoundKind = Literal["uniform", "sr", "mse_conc"]


def _capped_exp(log_prefactor: float, exponent: float) -> float:
    """min(1, e^{log_prefactor + exponent})，在对数域里截断，避免上溢。"""
    return math.exp(min(0.0, log_prefactor + exponent))


@dataclass(frozen=True)
class BoundParams:
    n: float
    K: int
    l: float                      # min_i σ_i²
    gap: float | None = None      # Δ_(1)
    h2: float | None = None
    eps: float | None = None
    c: float = DEFAULT_BOUND_CONSTANT
    prefactor: float | None = None

    @classmethod
    def from_model(
        cls,
        model: CovarianceModel,
        n: float,
        *,
        eps: float | None = None,
        c: float = DEFAULT_BOUND_CONSTANT,
        prefactor: float | None = None,
    ) -> "BoundParams":
        profile = gap_profile(model)
        summary = complexity_summary(profile, u=model.max_variance)
        return cls(
            n=float(n),
            K=model.K,
            l=model.min_variance,
            gap=float(profile.ordered_gaps[0]),
            h2=summary.h2,
            eps=eps,
            c=float(c),
            prefactor=prefactor,
        )

    def with_n(self, n: float) -> "BoundParams":
        return replace(self, n=float(n))


def uniform_error_bound(n: float, K: int, l: float, gap: float, *, c: float = DEFAULT_BOUND_CONSTANT,
                        prefactor: float = UNIFORM_PREFACTOR) -> float:
    """min(1, 84K² exp(−n l² Δ_(1)² / (c K⁷)))。"""
    if not gap > 0.0:
        raise NonPositiveGapError(f"uniform bound needs a positive smallest gap, got {gap!r}")
    exponent = -float(n) * l * l * gap * gap / (c * float(K) ** 7)
    return _capped_exp(math.log(prefactor * K * K), exponent)


def sr_error_bound(n: float, K: int, l: float, h2: float, *, c: float = DEFAULT_BOUND_CONSTANT,
                   prefactor: float = SR_PREFACTOR) -> float:
    """min(1, 84K³ exp(−(l²/(cK⁵)) (n − C(K,2)) / (C(K) H₂)))。"""
    if not (h2 > 0.0 and math.isfinite(h2)):
        raise NonPositiveGapError(f"SR bound needs finite positive H2 (all gaps > 0), got {h2!r}")
    ck = float(c_of_k(K))
    exponent = -(l * l / (c * float(K) ** 5)) * (float(n) - math.comb(K, 2)) / (ck * h2)
    return _capped_exp(math.log(prefactor * float(K) ** 3), exponent)


def mse_concentration_bound(n: float, K: int, l: float, eps: float, *, c: float = DEFAULT_BOUND_CONSTANT,
                            prefactor: float = MSE_CONC_PREFACTOR) -> float:
    """P(|ℰ̂_i − ℰ_i| > ε) ≤ min(1, prefactor·K exp(−n l² ε² / (c K⁵)))。"""
    if not eps > 0.0:
        raise NonPositiveGapError(f"concentration bound needs eps > 0, got {eps!r}")
    exponent = -float(n) * l * l * eps * eps / (c * float(K) ** 5)
    return _capped_exp(math.log(prefactor * K), exponent)


def theoretical_error_bounds(kind: BoundKind, params: BoundParams) -> float:
    if kind == "uniform":
        if params.gap is None:
            raise NonPositiveGapError("uniform bound needs the smallest gap")
        return uniform_error_bound(params.n, params.K, params.l, params.gap, c=params.c,
                                   prefactor=params.prefactor or UNIFORM_PREFACTOR)
    if kind == "sr":
        if params.h2 is None:
            raise NonPositiveGapError("SR bound needs H2")
        return sr_error_bound(params.n, params.K, params.l, params.h2, c=params.c,
                              prefactor=params.prefactor or SR_PREFACTOR)
    if kind == "mse_conc":
        if params.eps is None:
            raise NonPositiveGapError("concentration bound needs eps")
        return mse_concentration_bound(params.n, params.K, params.l, params.eps, c=params.c,
                                       prefactor=params.prefactor or MSE_CONC_PREFACTOR)
    raise UnknownIdError(f"unknown bound kind {kind!r}; expected uniform|sr|mse_conc")


# -------------------------
# 单个统计量的尾界（浓度研究用）
# -------------------------
def variance_tail_bound(n: float, eps: float, sigma2: float) -> float:
    """P(|σ̂² − σ²| > ε) ≤ 2 exp(−(n/8) min(ε²/σ⁴, ε/σ²))。"""
    rate = min(eps * eps / (sigma2 * sigma2), eps / sigma2)
    return _capped_exp(math.log(2.0), -float(n) / 8.0 * rate)


def stddev_tail_bound(n: float, eps: float, sigma2: float) -> float:
    """P(|σ̂ − σ| > ε) ≤ 2 exp(−n ε² / (8σ⁴))。"""
    return _capped_exp(math.log(2.0), -float(n) * eps * eps / (8.0 * sigma2 * sigma2))


def correlation_tail_bound(n: float, eps: float, l: float, eta: float | None = None) -> float:
    """
    P(|ρ̂ − ρ| > ε) ≤ 26 exp(−(n/8)·1/(36(1+η))·min(lε/3, (lε/3)²))，ε ∈ [0, η]。
    η 缺省取 max(1, ε)。
    """
    eta = max(1.0, eps) if eta is None else float(eta)
    if eps > eta:
        log.warning("correlation tail bound evaluated outside eps <= eta (eps=%g eta=%g)", eps, eta)
    t = l * eps / 3.0
    rate = min(t, t * t) / (36.0 * (1.0 + eta))
    return _capped_exp(math.log(26.0), -float(n) / 8.0 * rate)
