from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Callable, Iterable

from corrbandit.core.algorithms.result import RunResult
from corrbandit.core.algorithms.successive_rejects import successive_rejects
from corrbandit.core.algorithms.uniform import uniform_sampling
from corrbandit.core.environment.covariance import CovarianceModel
from corrbandit.core.environment.sampler import Environment
from corrbandit.core.study.seeding import ALGORITHM_IDS, replication_seed

log = logging.getLogger(__name__)

ALGORITHMS: dict[str, Callable[..., RunResult]] = {
    "uniform": uniform_sampling,
    "sr": successive_rejects,
}


@dataclass(frozen=True)
class ReplicationTask:
    model: CovarianceModel
    algorithm: str
    budget: int
    replication: int
    seed: int
    pooled_variance: bool = False

    @property
    def order_key(self) -> tuple[int, int, int]:
        return (self.budget, ALGORITHM_IDS[self.algorithm], self.replication)


def make_tasks(
    model: CovarianceModel,
    algorithms: Iterable[str],
    budgets: Iterable[int],
    replications: int,
    base_seed: int,
    *,
    pooled_variance: bool = False,
) -> list[ReplicationTask]:
    """种子只取决于 (base_seed, 复制编号, 算法)；同一复制在不同预算下共用随机流。"""
    return [
        ReplicationTask(
            model=model,
            algorithm=algo,
            budget=int(n),
            replication=r,
            seed=replication_seed(base_seed, r, algo),
            pooled_variance=pooled_variance,
        )
        for n in budgets
        for algo in algorithms
        for r in range(replications)
    ]


def run_replication(task: ReplicationTask) -> tuple[ReplicationTask, RunResult]:
    env = Environment(task.model, task.seed)
    result = ALGORITHMS[task.algorithm](env, task.budget, pooled_variance=task.pooled_variance)
    return task, result


def run_replications(tasks: list[ReplicationTask], workers: int = 1) -> list[tuple[ReplicationTask, RunResult]]:
    """
    workers=1 串行；否则进程池并行。
    结果按 (预算, 算法, 复制编号) 排序后返回，与 worker 数、完成顺序无关。
    """
    if workers <= 1 or len(tasks) <= 1:
        done = [run_replication(t) for t in tasks]
    else:
        done = []
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(run_replication, t) for t in tasks]
            for i, future in enumerate(as_completed(futures), start=1):
                done.append(future.result())
                if i % 500 == 0:
                    log.info("Replications finished: %d/%d", i, len(tasks))
    return sorted(done, key=lambda pair: pair[0].order_key)
