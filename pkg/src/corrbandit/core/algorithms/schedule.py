from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction

from corrbandit.core.environment.covariance import MIN_ARMS
from corrbandit.errors import BudgetTooSmallError, TooFewArmsError

log = logging.getLogger(__name__)


def c_of_k(K: int) -> Fraction:
    """C(K) = (K−1)/2 + Σ_{j=1}^{K−2} j/(K−j)，用有理数精确计算。"""
    return Fraction(K - 1, 2) + sum((Fraction(j, K - j) for j in range(1, K - 1)), Fraction(0))


def active_pair_count(K: int, k: int) -> int:
    """|A_k| = C(K,2) − C(k,2)：进入第 k 阶段前已淘汰 k 个臂（k≥2），它们两两组成的对已移除。"""
    return math.comb(K, 2) - math.comb(k, 2)


@dataclass(frozen=True)
class PhaseSchedule:
    K: int
    budget: int
    c_of_k: float
    lengths: tuple[int, ...]        # n_1 ≤ n_2 ≤ … ≤ n_{K−2}
    active_sizes: tuple[int, ...]   # |A_1| … |A_{K−2}|
    capped: bool = False

    @property
    def phases(self) -> int:
        return len(self.lengths)

    @property
    def increments(self) -> tuple[int, ...]:
        prev = (0,) + self.lengths[:-1]
        return tuple(b - a for a, b in zip(prev, self.lengths))

    @property
    def total_pulls(self) -> int:
        return sum(s * d for s, d in zip(self.active_sizes, self.increments))


def phase_schedule(K: int, budget: int) -> PhaseSchedule:
    """
    n_k = ⌈(n − C(K,2)) / (C(K)(K+1−k))⌉, k = 1 … K−2。
    取整误差可能让总拉取数超过 n：从最后一个阶段开始向前削减每对增量，直到总数 ≤ n。
    """
    K = int(K)
    n = int(budget)
    if K < MIN_ARMS:
        raise TooFewArmsError(f"need K >= {MIN_ARMS} arms, got K={K}")
    P = math.comb(K, 2)
    if n <= P:
        raise BudgetTooSmallError(f"budget n={n} must exceed binomial(K,2)={P} for K={K}")

    ck = c_of_k(K)
    lengths = [math.ceil(Fraction(n - P) / (ck * (K + 1 - k))) for k in range(1, K - 1)]
    sizes = [active_pair_count(K, k) for k in range(1, K - 1)]

    inc = [lengths[0]] + [b - a for a, b in zip(lengths, lengths[1:])]
    total = sum(s * d for s, d in zip(sizes, inc))
    excess = total - n
    capped = excess > 0
    for k in reversed(range(len(inc))):
        if excess <= 0:
            break
        cut = min(inc[k], -(-excess // sizes[k]))
        inc[k] -= cut
        excess -= cut * sizes[k]
    if inc[0] <= 0:
        raise BudgetTooSmallError(f"budget n={n} leaves no pulls for the first phase (K={K})")
    if capped:
        log.debug("Phase schedule capped: K=%d n=%d planned=%d", K, n, total)

    cum, acc = [], 0
    for d in inc:
        acc += d
        cum.append(acc)
    return PhaseSchedule(
        K=K, budget=n, c_of_k=float(ck), lengths=tuple(cum), active_sizes=tuple(sizes), capped=capped,
    )
