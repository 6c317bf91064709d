from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from corrbandit.core.environment.sampler import check_pair
from corrbandit.errors import (
    DegenerateVarianceError,
    InvalidPairError,
    MissingPairError,
    NoSamplesError,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PairSums:
    n: int
    sum_xx: float
    sum_yy: float
    sum_xy: float

    def to_dict(self) -> dict:
        return {"n": self.n, "sxx": self.sum_xx, "syy": self.sum_yy, "sxy": self.sum_xy}


@dataclass(frozen=True, eq=False)
class MseEstimates:
    values: np.ndarray          # (K,) ℰ̂_i；未请求的臂为 nan
    support_counts: np.ndarray  # (K,) min_{p≠i} n_ip


class PairStatistics:
    """
    每个无序对 (i, j) 的充分统计量：n_ij, Σx_i², Σx_j², Σx_i x_j。

    内部用 K×K 矩阵存放：
      counts[i, j] = counts[j, i] = n_ij
      sq[a, b]     = 对 {a, b} 的样本中臂 a 自身的平方和
      cross[i, j]  = cross[j, i] = Σ x_i x_j
    单写者；估计量按需从统计量重新计算，不做增量缓存。

    pooled_variance=False（默认）：ℰ̂_i 中 (i,p) 项的 σ̂_p²、ρ̂_ip 全部取自对 (i,p) 自身的样本。
    pooled_variance=True：σ̂_p² 汇总臂 p 参与的所有对；ρ̂ 截断到 [−1, 1] 并计数。
    """

    def __init__(self, K: int, *, pooled_variance: bool = False) -> None:
        self.K = int(K)
        self.pooled_variance = bool(pooled_variance)
        self.counts = np.zeros((self.K, self.K), dtype=np.int64)
        self.sq = np.zeros((self.K, self.K), dtype=np.float64)
        self.cross = np.zeros((self.K, self.K), dtype=np.float64)
        self._clamped: set[tuple[int, int]] = set()

    # -------------------------
    # accumulation
    # -------------------------
    def record(self, pair: tuple[int, int], sample: tuple[float, float]) -> "PairStatistics":
        i, j = check_pair(pair, self.K)
        x, y = float(sample[0]), float(sample[1])
        self.counts[i, j] += 1
        self.counts[j, i] += 1
        self.sq[i, j] += x * x
        self.sq[j, i] += y * y
        self.cross[i, j] += x * y
        self.cross[j, i] = self.cross[i, j]
        return self

    def record_batch(self, pair: tuple[int, int], samples: np.ndarray) -> "PairStatistics":
        """samples: (n, 2)，列 0 为臂 i、列 1 为臂 j。"""
        i, j = check_pair(pair, self.K)
        s = np.asarray(samples, dtype=np.float64)
        if s.size == 0:
            return self
        if s.ndim != 2 or s.shape[1] != 2:
            raise InvalidPairError(f"samples for pair {pair} must have shape (n, 2), got {s.shape}")
        x, y = s[:, 0], s[:, 1]
        n = s.shape[0]
        self.counts[i, j] += n
        self.counts[j, i] += n
        self.sq[i, j] += float(x @ x)
        self.sq[j, i] += float(y @ y)
        self.cross[i, j] += float(x @ y)
        self.cross[j, i] = self.cross[i, j]
        return self

    # -------------------------
    # raw access
    # -------------------------
    def count(self, pair: tuple[int, int]) -> int:
        i, j = check_pair(pair, self.K)
        return int(self.counts[i, j])

    def pair_sums(self, pair: tuple[int, int]) -> PairSums:
        i, j = check_pair(pair, self.K)
        return PairSums(
            n=int(self.counts[i, j]),
            sum_xx=float(self.sq[i, j]),
            sum_yy=float(self.sq[j, i]),
            sum_xy=float(self.cross[i, j]),
        )

    def total_pulls(self) -> int:
        return int(np.triu(self.counts, 1).sum())

    def pair_counts(self) -> dict[tuple[int, int], int]:
        iu, ju = np.triu_indices(self.K, 1)
        return {(int(a), int(b)): int(self.counts[a, b]) for a, b in zip(iu, ju)}

    def pooled_variances(self) -> np.ndarray:
        """σ̂_p² 汇总臂 p 所在的全部对；无样本的臂为 nan。"""
        n = self.counts.sum(axis=1).astype(np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(n > 0, self.sq.sum(axis=1) / n, np.nan)

    # -------------------------
    # estimators
    # -------------------------
    def sigma_hat2(self, pair: tuple[int, int], arm: int) -> float:
        """
        σ̂² of `arm`（必须是 pair 的一端）：默认取该对自身的 Σx²/n。
        """
        i, j = check_pair(pair, self.K)
        if arm not in (i, j):
            raise InvalidPairError(f"arm {arm} is not a side of pair {pair}")
        other = j if arm == i else i
        n = int(self.counts[i, j])
        if n == 0:
            raise NoSamplesError(f"pair ({i + 1},{j + 1}) has no samples")
        if self.pooled_variance:
            return float(self.pooled_variances()[arm])
        return float(self.sq[arm, other] / n)

    def rho_hat(self, pair: tuple[int, int]) -> float:
        i, j = check_pair(pair, self.K)
        n = int(self.counts[i, j])
        if n == 0:
            raise NoSamplesError(f"pair ({i + 1},{j + 1}) has no samples")
        if self.sq[i, j] <= 0.0 or self.sq[j, i] <= 0.0:
            raise DegenerateVarianceError(f"pair ({i + 1},{j + 1}) has a zero sum of squares")
        vi = vj = None
        if self.pooled_variance:
            vi, vj = self.sigma_hat2((i, j), i), self.sigma_hat2((i, j), j)
        r = float(rho_hat_from_sums(n, self.sq[i, j], self.sq[j, i], self.cross[i, j], vi, vj))
        if abs(r) > 1.0:
            self._note_clamp(i, j)
        return min(1.0, max(-1.0, r))

    def mse_hat(self, arm: int) -> float:
        return float(self.mse_estimates([arm]).values[arm])

    def mse_estimates(self, arms: Iterable[int] | None = None) -> MseEstimates:
        """
        ℰ̂_i = Σ_{p≠i} σ̂_p² (1 − ρ̂_ip²)，对 arms 中的每个臂向量化计算。
        任一所需的对没有样本时抛 MissingPair（说明调用方采样不足）。
        """
        K = self.K
        arms_arr = np.arange(K) if arms is None else np.asarray(sorted(set(int(a) for a in arms)), dtype=int)
        if arms_arr.size and (arms_arr.min() < 0 or arms_arr.max() >= K):
            raise InvalidPairError(f"arm index out of range for K={K}: {arms_arr.tolist()}")

        off = ~np.eye(K, dtype=bool)
        counts = self.counts.astype(np.float64)
        support = np.where(off, counts, np.inf).min(axis=1)

        rows = arms_arr
        need = off[rows]
        missing = (self.counts[rows] == 0) & need
        if missing.any():
            r, p = np.argwhere(missing)[0]
            a = int(rows[r])
            raise MissingPairError(f"pair ({min(a, p) + 1},{max(a, p) + 1}) has no samples; needed for arm {a + 1}")
        degenerate = ((self.sq[rows] <= 0.0) | (self.sq.T[rows] <= 0.0)) & need
        if degenerate.any():
            r, p = np.argwhere(degenerate)[0]
            a = int(rows[r])
            raise DegenerateVarianceError(f"pair ({min(a, p) + 1},{max(a, p) + 1}) has a zero sum of squares")

        # 行 = 臂 i，列 = 伙伴 p；sq[i, p] 是对 (i,p) 中臂 i 的平方和，sq.T[i, p] 是臂 p 的
        v_own = v_other = None
        if self.pooled_variance:
            pooled = self.pooled_variances()
            v_own = np.broadcast_to(pooled[rows][:, None], need.shape)
            v_other = np.broadcast_to(pooled[None, :], need.shape)
        terms, rho = mse_terms_from_sums(
            counts[rows], self.sq[rows], self.sq.T[rows], self.cross[rows], v_own, v_other
        )
        for r, p in np.argwhere(need & (np.abs(rho) > 1.0)):
            self._note_clamp(int(rows[r]), int(p))
        terms = np.where(need, terms, 0.0)

        values = np.full(K, np.nan)
        values[rows] = terms.sum(axis=1)
        return MseEstimates(values=values, support_counts=np.where(np.isfinite(support), support, 0).astype(np.int64))

    def _note_clamp(self, a: int, b: int) -> None:
        # 逐对模式下越界只来自舍入（Cauchy–Schwarz 保证范围），不计数
        if not self.pooled_variance:
            return
        pair = (min(a, b), max(a, b))
        if pair not in self._clamped:
            self._clamped.add(pair)
            log.debug("rho_hat clamped to [-1, 1] for pair (%d,%d)", pair[0] + 1, pair[1] + 1)

    @property
    def clamp_events(self) -> int:
        """ρ̂ 至少被截断过一次的不同对的个数（同一对在多次估计中只计一次）。"""
        return len(self._clamped)

    # -------------------------
    # diagnostics
    # -------------------------
    def to_json_map(self) -> dict[str, dict]:
        """{"(i,j)": {n, sxx, syy, sxy}}，1 起算编号，只列有样本的对。"""
        out: dict[str, dict] = {}
        for (i, j), n in self.pair_counts().items():
            if n:
                out[f"({i + 1},{j + 1})"] = self.pair_sums((i, j)).to_dict()
        return out


def _rho_from_moments(xx, yy, xy, var_x, var_y):
    """ρ̂ = 1 − ½(X̄_i²/σ̂_i² + X̄_j²/σ̂_j² − 2·X̄_iX̄_j/(σ̂_i σ̂_j))。"""
    return 1.0 - 0.5 * (xx / var_x + yy / var_y - 2.0 * xy / np.sqrt(var_x * var_y))


# -------------------------
# 充分统计量 → 估计量（可广播，PairStatistics 与浓度研究共用）
# -------------------------
def rho_hat_from_sums(n, sum_xx, sum_yy, sum_xy, var_x=None, var_y=None):
    """
    未截断的 ρ̂。var_x / var_y 缺省取逐对的 Σx²/n、Σy²/n，
    此时 ρ̂ 退化为 Σxy / √(Σx² Σy²)。
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        xx, yy, xy = sum_xx / n, sum_yy / n, sum_xy / n
        vx = xx if var_x is None else var_x
        vy = yy if var_y is None else var_y
        return _rho_from_moments(xx, yy, xy, vx, vy)


def mse_terms_from_sums(n, sum_own, sum_other, sum_xy, var_own=None, var_other=None):
    """
    ℰ̂_i 的 (i, p) 项 σ̂_p² (1 − ρ̂_ip²)，ρ̂ 截断到 [−1, 1] 后代入。
    返回 (项, 未截断的 ρ̂)。
    """
    rho = rho_hat_from_sums(n, sum_own, sum_other, sum_xy, var_own, var_other)
    with np.errstate(divide="ignore", invalid="ignore"):
        v_other = sum_other / n if var_other is None else var_other
        clipped = np.clip(rho, -1.0, 1.0)
        return v_other * (1.0 - clipped * clipped), rho
