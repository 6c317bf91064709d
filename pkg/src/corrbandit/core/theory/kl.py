from __future__ import annotations

import logging
import math

import numpy as np

from corrbandit.core.environment.builders import build_lb_cov, transform_problem
from corrbandit.core.environment.covariance import CovarianceModel
from corrbandit.core.environment.sampler import all_pairs, check_pair
from corrbandit.errors import DimensionMismatchError, EmptySamplesError, SingularMatrixError

log = logging.getLogger(__name__)

# 行列式低于该值视为奇异（不返回 inf）
SINGULAR_DET = 1e-14


def _square(a, what: str) -> np.ndarray:
    m = np.atleast_2d(np.asarray(a, dtype=np.float64))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"{what} must be a square matrix, got shape {m.shape}")
    return m


def _inverse_and_logdet(a: np.ndarray, what: str) -> tuple[np.ndarray, float]:
    """2×2 用闭式逆；其它维度走 numpy 的对称求解。"""
    k = a.shape[0]
    if k == 2:
        det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        if not det > SINGULAR_DET:
            raise SingularMatrixError(f"{what} is singular (det={det:.3g})")
        inv = np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]]) / det
        return inv, math.log(det)
    sign, logdet = np.linalg.slogdet(a)
    if sign <= 0 or logdet < math.log(SINGULAR_DET):
        raise SingularMatrixError(f"{what} is singular or not positive definite (sign={sign:g}, logdet={logdet:.3g})")
    return np.linalg.solve(a, np.eye(k)), float(logdet)


def kl_gaussian(a0, a1) -> float:
    """
    KL(N(0, A0) ‖ N(0, A1)) = ½(Tr(A1⁻¹A0) − k + ln(det A1 / det A0))。
    """
    A0 = _square(a0, "A0")
    A1 = _square(a1, "A1")
    if A0.shape != A1.shape:
        raise DimensionMismatchError(f"A0 is {A0.shape}, A1 is {A1.shape}")
    k = A0.shape[0]
    inv1, ld1 = _inverse_and_logdet(A1, "A1")
    _, ld0 = _inverse_and_logdet(A0, "A0")
    kl = 0.5 * (float(np.sum(inv1 * A0.T)) - k + ld1 - ld0)
    # 舍入可能给出 −1e−17 量级的负值
    return max(kl, 0.0)


def empirical_kl(samples, a0, a1) -> float:
    """
    对数似然比的样本均值：
      (1/2t) Σ_s xᵀ(A1⁻¹ − A0⁻¹)x + ½(ln|A1| − ln|A0|)，
    样本来自 N(0, A0) 时期望等于 kl_gaussian(A0, A1)。
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    return float(empirical_kl_batch(x[None, ...], a0, a1)[0])


def empirical_kl_batch(samples, a0, a1) -> np.ndarray:
    """samples: (trials, t, k)，每组独立计算一个统计量，返回 (trials,)。"""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] == 0:
        raise EmptySamplesError(f"need at least one sample per trial, got shape {x.shape}")
    A0 = _square(a0, "A0")
    A1 = _square(a1, "A1")
    if A0.shape != A1.shape or x.shape[2] != A0.shape[0]:
        raise DimensionMismatchError(f"samples {x.shape} do not match A0 {A0.shape} / A1 {A1.shape}")
    inv0, ld0 = _inverse_and_logdet(A0, "A0")
    inv1, ld1 = _inverse_and_logdet(A1, "A1")
    d = inv1 - inv0
    quad = np.einsum("rti,ij,rtj->r", x, d, x)
    return quad / (2.0 * x.shape[1]) + 0.5 * (ld1 - ld0)


# -------------------------
# 下界实例上的成对 KL
# -------------------------
def kl_pairwise_models(base: CovarianceModel, transformed: CovarianceModel, pair: tuple[int, int]) -> float:
    i, j = check_pair(pair, base.K)
    return kl_gaussian(base.marginal(i, j), transformed.marginal(i, j))


def kl_pairwise(K: int, rho: float, m: int, pair: tuple[int, int]) -> float:
    """
    kl^m_ij：原问题与第 m 个变换（交换臂 0 与臂 m）在 (i, j) 边缘上的 KL。
    索引 0 起算，1 ≤ m < K。
    """
    base = build_lb_cov(K, rho)
    return kl_pairwise_models(base, transform_problem(base, m), pair)


def kl_cap(K: int, rho: float, m: int, pair: tuple[int, int]) -> float:
    """
    手推的 KL 上界（0 起算索引，内部换成 1 起算标号 M = m+1）：
      kl^M_{1M} = 0，两端都不在 {1, M} 时为 0；
      kl^M_{1j} ≤ ρ²/2 · (1 − ρ^{2(k−1)})/(1 − ρ²)，
      kl^M_{Mj} ≤ ρ² (1 − ρ^{k−1})/(1 − ρ²)，其中 k = min(j, M)。
    """
    i, j = check_pair(pair, K)
    M = m + 1
    a, b = i + 1, j + 1
    r2 = rho * rho
    if {a, b} == {1, M} or (a not in (1, M) and b not in (1, M)):
        return 0.0
    if 1 in (a, b):
        other = b if a == 1 else a
        k = min(other, M)
        return r2 / 2.0 * (1.0 - rho ** (2 * (k - 1))) / (1.0 - r2)
    other = b if a == M else a
    k = min(other, M)
    return r2 * (1.0 - rho ** (k - 1)) / (1.0 - r2)


def kl_table(K: int, rho: float) -> list[dict]:
    """
    每个变换 m 的精确 KL 与手推上界。只列至少一端在 {1, m} 的对，
    其余对的两个边缘完全相同，KL 恒为 0。输出用 1 起算标号。
    """
    base = build_lb_cov(K, rho)
    rows: list[dict] = []
    for m in range(1, K):
        transformed = transform_problem(base, m)
        for i, j in all_pairs(K):
            touches = 0 in (i, j) or m in (i, j)
            if not touches:
                continue
            kl = kl_pairwise_models(base, transformed, (i, j))
            cap = kl_cap(K, rho, m, (i, j))
            rows.append({"m": m + 1, "i": i + 1, "j": j + 1, "kl": kl, "cap": cap, "kl_le_cap": kl <= cap + 1e-12})
    return rows
