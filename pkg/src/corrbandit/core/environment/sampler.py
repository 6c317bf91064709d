from __future__ import annotations

import math
from typing import Protocol

import numpy as np

from corrbandit.core.environment.covariance import CovarianceModel
from corrbandit.errors import InvalidPairError

# 1 − ρ² 小于该值时第二个 Cholesky 项直接取 0（避免微小负根号产生 NaN）
PERFECT_CORR_EPS = 1e-15


def check_pair(pair: tuple[int, int], K: int) -> tuple[int, int]:
    try:
        i, j = (int(pair[0]), int(pair[1]))
    except (TypeError, ValueError, IndexError) as e:
        raise InvalidPairError(f"pair must be two arm indices, got {pair!r}") from e
    if not (0 <= i < j < K):
        raise InvalidPairError(f"pair must satisfy 0 <= i < j < K={K}, got {pair!r}")
    return i, j


def all_pairs(K: int) -> list[tuple[int, int]]:
    """字典序的全部无序对 (i, j), i < j。"""
    return [(i, j) for i in range(K) for j in range(i + 1, K)]


class PairSampler(Protocol):
    """算法只依赖该接口：真实环境与测试用的脚本环境都实现它。"""
    model: CovarianceModel

    def pull(self, pair: tuple[int, int], count: int) -> np.ndarray:
        """对 pair 连续拉 count 次，返回 (count, 2)。"""
        ...


class Environment(PairSampler):
    """
    零均值高斯相关臂环境。
    一个 Environment 独占一个随机流，只能由单线程使用；
    并行复制各自用独立种子构造自己的 Environment。
    """

    def __init__(self, model: CovarianceModel, seed: int) -> None:
        self.model = model
        self.seed = int(seed)
        self._rng = np.random.default_rng(self.seed)
        self._sig = model.sigmas
        self._rho = model.correlations()
        self.pulls = 0

    def _cholesky_terms(self, i: int, j: int) -> tuple[float, float, float, float]:
        rho = float(np.clip(self._rho[i, j], -1.0, 1.0))
        rad = 1.0 - rho * rho
        tail = 0.0 if rad < PERFECT_CORR_EPS else math.sqrt(rad)
        return float(self._sig[i]), float(self._sig[j]), rho, tail

    def sample_pair(self, pair: tuple[int, int]) -> tuple[float, float]:
        """
        一次二元观测：x = σ_i z₁, y = σ_j(ρ z₁ + √(1−ρ²) z₂)。
        恰好消耗两个标准正态变量。
        """
        i, j = check_pair(pair, self.model.K)
        si, sj, rho, tail = self._cholesky_terms(i, j)
        z1, z2 = self._rng.standard_normal(2)
        self.pulls += 1
        return si * z1, sj * (rho * z1 + tail * z2)

    def pull(self, pair: tuple[int, int], count: int) -> np.ndarray:
        """
        批量版 sample_pair：随机流消耗与逐次调用 count 次相同
        （按行 z₁, z₂ 交替），因此同种子、同拉取序列得到相同观测。
        """
        i, j = check_pair(pair, self.model.K)
        count = int(count)
        if count <= 0:
            return np.empty((0, 2), dtype=np.float64)
        si, sj, rho, tail = self._cholesky_terms(i, j)
        z = self._rng.standard_normal((count, 2))
        out = np.empty_like(z)
        out[:, 0] = si * z[:, 0]
        out[:, 1] = sj * (rho * z[:, 0] + tail * z[:, 1])
        self.pulls += count
        return out

    def pull_trials(self, pair: tuple[int, int], trials: int, count: int) -> np.ndarray:
        """(trials, count, 2)：trials 组独立的 count 次拉取，供蒙特卡洛尾概率研究。"""
        flat = self.pull(pair, int(trials) * int(count))
        return flat.reshape(int(trials), int(count), 2)


def sample_pair(env: Environment, pair: tuple[int, int]) -> tuple[float, float]:
    return env.sample_pair(pair)
