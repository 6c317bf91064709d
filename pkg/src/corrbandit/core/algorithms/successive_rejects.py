from __future__ import annotations

import logging

from corrbandit.core.algorithms.result import PhaseRecord, RunResult
from corrbandit.core.algorithms.schedule import phase_schedule
from corrbandit.core.environment.gaps import gap_profile
from corrbandit.core.environment.sampler import PairSampler, all_pairs
from corrbandit.core.estimation.pair_stats import PairStatistics

log = logging.getLogger(__name__)


def worst_arms(values, arms: list[int], count: int) -> list[int]:
    """ℰ̂ 最大的 count 个臂；并列时先淘汰编号大的。"""
    ranked = sorted(arms, key=lambda a: (float(values[a]), a), reverse=True)
    return ranked[:count]


def successive_rejects(env: PairSampler, budget: int, *, pooled_variance: bool = False) -> RunResult:
    """
    成对版 Successive Rejects（K−2 个阶段）：
      - 第 1 阶段：所有对各拉 n_1 次，淘汰 ℰ̂ 最大的两个臂，只移除这两个臂组成的那一对；
      - 第 k 阶段：A_k 中每对补拉 n_k − n_{k−1} 次，在 B_k 中淘汰 ℰ̂ 最大的一个臂，
        移除它与此前已淘汰臂组成的对。
    对只在两端都被淘汰后才移除，因此 B_k 中任一臂的 ℰ̂ 始终有完整的支撑对。
    """
    K = env.model.K
    schedule = phase_schedule(K, budget)
    stats = PairStatistics(K, pooled_variance=pooled_variance)

    active_arms = list(range(K))
    active_pairs = all_pairs(K)
    eliminated: list[int] = []
    trace: list[PhaseRecord] = []
    prev = 0
    est = None

    for k, n_k in enumerate(schedule.lengths, start=1):
        increment = n_k - prev
        pulled = len(active_pairs)
        if increment > 0:
            for pair in active_pairs:
                stats.record_batch(pair, env.pull(pair, increment))

        est = stats.mse_estimates(active_arms)
        losers = worst_arms(est.values, active_arms, 2 if k == 1 else 1)

        removed: list[tuple[int, int]] = []
        for a in losers:
            for b in eliminated:
                removed.append((min(a, b), max(a, b)))
            eliminated.append(a)
        gone = set(removed)
        active_pairs = [p for p in active_pairs if p not in gone]
        active_arms = [a for a in active_arms if a not in losers]

        trace.append(
            PhaseRecord(
                phase=k,
                eliminated=tuple(losers),
                active_pairs=pulled,
                cumulative_count=n_k,
                increment=increment,
                removed_pairs=tuple(sorted(removed)),
                mse_hat={a: float(est.values[a]) for a in active_arms + losers},
            )
        )
        log.debug("SR phase %d: eliminated=%s |A_k|=%d n_k=%d", k, [a + 1 for a in losers], pulled, n_k)
        prev = n_k

    # K−2 个阶段共淘汰 K−1 个臂
    assert len(active_arms) == 1, active_arms
    recommended = active_arms[0]

    return RunResult(
        algorithm="sr",
        seed=getattr(env, "seed", None),
        K=K,
        budget=int(budget),
        recommended=recommended,
        best_arm=gap_profile(env.model).best_arm,
        pulls=stats.pair_counts(),
        phase_trace=tuple(trace),
        mse_hat=tuple(float(v) for v in est.values) if est is not None else (),
        clamp_events=stats.clamp_events,
    )
