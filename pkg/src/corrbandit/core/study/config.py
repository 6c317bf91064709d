from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any, Mapping

from corrbandit.errors import ConfigError

STUDIES = ("experiment", "concentration", "theory")
ALGORITHMS = ("uniform", "sr")
# model 留空时按研究取的默认模型
DEFAULT_MODELS = {"experiment": "sigma1", "concentration": "sigma1", "theory": "lb:10:0.804"}


@dataclass(frozen=True)
class StudyConfig:
    """合并后的研究配置（default_config.yaml ← --config ← 命令行）。"""
    study: str
    model: str
    as_printed: bool
    tol_psd: float

    algorithms: tuple[str, ...]
    budget: int | None                 # None = auto
    auto_budget_min_factor: float
    auto_budget_max_factor: float
    auto_budget_points: int
    replications: int
    base_seed: int
    workers: int
    write_traces: bool
    pooled_variance: bool

    bound_constant: float
    mse_conc_prefactor: float
    mse_conc_constant: float
    u: float

    n_grid: tuple[int, ...]
    eps_grid: tuple[float, ...]
    trials: int
    arm: int                           # 1 起算
    partner: int

    theory_empirical: bool
    xi_t_grid: tuple[int, ...]
    xi_trials: int
    xi_transform: int                  # 1 起算的 m

    out_dir: str
    log_level: str = "INFO"

    @classmethod
    def from_mapping(cls, cfg: Mapping[str, Any]) -> "StudyConfig":
        try:
            study = str(cfg["study"])
            budget_raw = cfg["budget"]
            if isinstance(budget_raw, str) and budget_raw.strip().lower() == "auto":
                budget = None
            else:
                budget = int(budget_raw)
            out = cls(
                study=study,
                model=str(cfg["model"] or "") or DEFAULT_MODELS.get(study, ""),
                as_printed=bool(cfg["as_printed"]),
                tol_psd=float(cfg["tol_psd"]),
                algorithms=tuple(str(a) for a in cfg["algorithms"]),
                budget=budget,
                auto_budget_min_factor=float(cfg["auto_budget_min_factor"]),
                auto_budget_max_factor=float(cfg["auto_budget_max_factor"]),
                auto_budget_points=int(cfg["auto_budget_points"]),
                replications=int(cfg["replications"]),
                base_seed=int(cfg["base_seed"]),
                workers=int(cfg["workers"]),
                write_traces=bool(cfg["write_traces"]),
                pooled_variance=bool(cfg["pooled_variance"]),
                bound_constant=float(cfg["bound_constant"]),
                mse_conc_prefactor=float(cfg["mse_conc_prefactor"]),
                mse_conc_constant=float(cfg["mse_conc_constant"]),
                u=float(cfg["u"]),
                n_grid=tuple(int(v) for v in cfg["n_grid"]),
                eps_grid=tuple(float(v) for v in cfg["eps_grid"]),
                trials=int(cfg["trials"]),
                arm=int(cfg["arm"]),
                partner=int(cfg["partner"]),
                theory_empirical=bool(cfg["theory_empirical"]),
                xi_t_grid=tuple(int(v) for v in cfg["xi_t_grid"]),
                xi_trials=int(cfg["xi_trials"]),
                xi_transform=int(cfg["xi_transform"]),
                out_dir=str(cfg["out_dir"]),
                log_level=str((cfg.get("app") or {}).get("log_level", "INFO")),
            )
        except KeyError as e:
            raise ConfigError(f"missing config key: {e.args[0]}") from e
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid config value: {e}") from e
        out.validate()
        return out

    def validate(self) -> None:
        if self.study not in STUDIES:
            raise ConfigError(f"study must be one of {'|'.join(STUDIES)}, got {self.study!r}")
        if self.replications < 1:
            raise ConfigError(f"replications must be >= 1, got {self.replications}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.tol_psd < 0:
            raise ConfigError(f"tol_psd must be >= 0, got {self.tol_psd}")

        if self.study == "experiment":
            bad = [a for a in self.algorithms if a not in ALGORITHMS]
            if not self.algorithms or bad:
                raise ConfigError(f"algorithms must be a nonempty subset of {list(ALGORITHMS)}, got {list(self.algorithms)}")
            if self.budget is None:
                if self.auto_budget_points < 1:
                    raise ConfigError("auto_budget_points must be >= 1")
                if not 0 < self.auto_budget_min_factor <= self.auto_budget_max_factor:
                    raise ConfigError("auto budget factors must satisfy 0 < min <= max")

        if self.study == "concentration":
            if not self.n_grid or not self.eps_grid:
                raise ConfigError("n_grid and eps_grid must be nonempty for the concentration study")
            if min(self.n_grid) < 1 or min(self.eps_grid) <= 0:
                raise ConfigError("n_grid entries must be >= 1 and eps_grid entries > 0")
            if self.trials < 1:
                raise ConfigError(f"trials must be >= 1, got {self.trials}")
            if self.arm == self.partner:
                raise ConfigError("arm and partner must differ")

        if self.study == "theory":
            if not self.n_grid:
                raise ConfigError("n_grid must be nonempty for the theory report")
            if self.xi_trials < 1 or (self.xi_t_grid and min(self.xi_t_grid) < 1):
                raise ConfigError("xi_trials and xi_t_grid entries must be >= 1")

    def check_budget(self, K: int) -> None:
        """数值预算至少 C(K,2)（每对一次）；SR 还需严格大于它，由 phase_schedule 报 BudgetTooSmall。"""
        if self.budget is not None and self.budget < math.comb(K, 2):
            raise ConfigError(f"budget {self.budget} is below binomial(K,2)={math.comb(K, 2)} for K={K}")

    def check_arms(self, K: int) -> None:
        for name, v in (("arm", self.arm), ("partner", self.partner)):
            if not 1 <= v <= K:
                raise ConfigError(f"{name} must lie in 1..{K}, got {v}")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["budget"] = "auto" if self.budget is None else self.budget
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def echo(self) -> dict[str, Any]:
        """写入报告的配置回显；不含 worker 数与输出位置，保证这些不影响输出字节。"""
        return {k: v for k, v in self.to_dict().items() if k not in ("workers", "out_dir", "log_level")}
