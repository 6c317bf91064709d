from __future__ import annotations

import logging

import numpy as np

from corrbandit.core.algorithms.result import RunResult
from corrbandit.core.environment.gaps import gap_profile
from corrbandit.core.environment.sampler import PairSampler, all_pairs
from corrbandit.core.estimation.pair_stats import PairStatistics
from corrbandit.errors import BudgetTooSmallError

log = logging.getLogger(__name__)


def uniform_plan(K: int, budget: int) -> dict[tuple[int, int], int]:
    """每对 ⌊n/C(K,2)⌋ 次，余数按字典序每对多 1 次。"""
    pairs = all_pairs(K)
    P = len(pairs)
    n = int(budget)
    if n < P:
        raise BudgetTooSmallError(f"budget n={n} is below binomial(K,2)={P}; every pair needs one pull")
    base, rem = divmod(n, P)
    return {pair: base + (1 if idx < rem else 0) for idx, pair in enumerate(pairs)}


def uniform_sampling(env: PairSampler, budget: int, *, pooled_variance: bool = False) -> RunResult:
    K = env.model.K
    plan = uniform_plan(K, budget)
    stats = PairStatistics(K, pooled_variance=pooled_variance)
    for pair, count in plan.items():
        stats.record_batch(pair, env.pull(pair, count))

    est = stats.mse_estimates()
    # argmin 取第一个最小值：并列时推荐编号最小的臂
    recommended = int(np.argmin(est.values))
    result = RunResult(
        algorithm="uniform",
        seed=getattr(env, "seed", None),
        K=K,
        budget=int(budget),
        recommended=recommended,
        best_arm=gap_profile(env.model).best_arm,
        pulls=stats.pair_counts(),
        mse_hat=tuple(float(v) for v in est.values),
        clamp_events=stats.clamp_events,
    )
    log.debug("uniform: K=%d n=%d recommended=%d pulls=%d", K, budget, recommended + 1, result.total_pulls)
    return result

