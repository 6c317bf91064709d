from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

# results.csv 的列顺序固定（文档化于 docs/02_data_format.md）
CSV_COLUMNS = [
    "model",
    "algorithm",
    "replication",
    "seed",
    "K",
    "n",
    "recommended",
    "correct",
    "total_pulls",
]


@dataclass(frozen=True)
class PhaseRecord:
    phase: int                                   # k，1 起算
    eliminated: tuple[int, ...]                  # 本阶段淘汰的臂（0-based）
    active_pairs: int                            # |A_k|
    cumulative_count: int                        # n_k
    increment: int                               # n_k − n_{k−1}
    removed_pairs: tuple[tuple[int, int], ...]   # A_{k+1} = A_k \ removed
    mse_hat: dict[int, float] = field(default_factory=dict)  # 阶段末 B_k 中各臂的 ℰ̂

    def to_dict(self) -> dict[str, Any]:
        return {
            "phase": self.phase,
            "eliminated": [a + 1 for a in self.eliminated],
            "active_pairs": self.active_pairs,
            "cumulative_count": self.cumulative_count,
            "increment": self.increment,
            "removed_pairs": [[i + 1, j + 1] for i, j in self.removed_pairs],
            "mse_hat": {str(a + 1): v for a, v in sorted(self.mse_hat.items())},
        }


@dataclass(frozen=True, eq=False)
class RunResult:
    algorithm: str
    seed: int | None
    K: int
    budget: int
    recommended: int                          # Â_n（0-based）
    best_arm: int                             # i*（0-based）
    pulls: dict[tuple[int, int], int]         # N_ij
    phase_trace: tuple[PhaseRecord, ...] = ()
    mse_hat: tuple[float, ...] = ()           # 推荐时刻的 ℰ̂（未参与比较的臂为 nan）
    clamp_events: int = 0

    @property
    def total_pulls(self) -> int:
        return sum(self.pulls.values())

    @property
    def correct(self) -> bool:
        return self.recommended == self.best_arm

    def to_csv_row(self, *, model: str, replication: int) -> dict[str, Any]:
        return {
            "model": model,
            "algorithm": self.algorithm,
            "replication": replication,
            "seed": "" if self.seed is None else self.seed,
            "K": self.K,
            "n": self.budget,
            "recommended": self.recommended + 1,
            "correct": int(self.correct),
            "total_pulls": self.total_pulls,
        }

    def to_json(self) -> dict[str, Any]:
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "K": self.K,
            "n": self.budget,
            "recommended": self.recommended + 1,
            "best_arm": self.best_arm + 1,
            "correct": self.correct,
            "total_pulls": self.total_pulls,
            "pulls": {f"({i + 1},{j + 1})": c for (i, j), c in sorted(self.pulls.items())},
            "phase_trace": [p.to_dict() for p in self.phase_trace],
            "mse_hat": [None if v != v else v for v in self.mse_hat],
            "clamp_events": self.clamp_events,
        }
