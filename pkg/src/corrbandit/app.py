from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from .core.study.concentration import run_concentration_study
from .core.study.config import StudyConfig
from .core.study.experiment import run_experiment
from .core.study.theory_report import run_theory_report
from .errors import CorrBanditError
from .infra.config.config_manager import ConfigManager, ConfigPaths, get_default_config_path
from .infra.logging.setup import setup_logging
from .infra.storage.paths import ensure_dirs, get_app_home, resolve_out_dir
from .version import APP_VERSION

log = logging.getLogger(__name__)

RUNNERS = {
    "experiment": run_experiment,
    "concentration": run_concentration_study,
    "theory": run_theory_report,
}


def _budget_arg(text: str) -> int | str:
    if text.strip().lower() == "auto":
        return "auto"
    try:
        return int(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"budget must be an integer or 'auto', got {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corrbandit", description="Correlated-arm bandit studies")
    parser.add_argument("--version", action="version", version=f"%(prog)s {APP_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in RUNNERS:
        p = sub.add_parser(name, help=f"run the {name} study")
        p.add_argument("--config", type=Path, default=None, help="YAML study config (merged over the defaults)")
        p.add_argument("--model", default=None, help="sigma1|sigma2|sigma3|lb:K:rho|<matrix file>")
        p.add_argument("--seed", type=int, default=None, dest="base_seed")
        p.add_argument("--reps", type=int, default=None, dest="replications")
        p.add_argument("--budget", type=_budget_arg, default=None, help="N or auto")
        p.add_argument("--out", default=None, dest="out_dir")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--as-printed", action="store_const", const=True, default=None, dest="as_printed")
        p.add_argument("--pooled-variance", action="store_const", const=True, default=None, dest="pooled_variance")
        p.add_argument("--log-level", default=None, dest="log_level")

    p = sub.add_parser("init-config", help="write the default config as an editable template")
    p.add_argument("path", type=Path)
    return parser


def _log_dir() -> Path | None:
    try:
        return ensure_dirs(get_app_home())["logs"]
    except OSError:
        return None


def _fail(err: dict[str, Any], code: int) -> int:
    sys.stderr.write(json.dumps(err, ensure_ascii=False) + "\n")
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    # 1) 先用默认 INFO 起日志（保证配置错误也能落盘）
    log_dir = _log_dir()
    setup_logging(log_dir, level="INFO")
    log.info("=== CorrBandit %s: %s ===", APP_VERSION, args.command)

    try:
        if args.command == "init-config":
            mgr = ConfigManager(ConfigPaths(default_config_path=get_default_config_path()))
            print(mgr.write_template(args.path))
            return 0

        # 2) 配置：default ← --config ← 命令行
        mgr = ConfigManager(ConfigPaths(default_config_path=get_default_config_path(), user_config_path=args.config))
        mgr.load()
        overrides = {
            "study": args.command,
            "model": args.model,
            "base_seed": args.base_seed,
            "replications": args.replications,
            "budget": args.budget,
            "out_dir": args.out_dir,
            "workers": args.workers,
            "as_printed": args.as_printed,
            "pooled_variance": args.pooled_variance,
        }
        raw = mgr.apply_overrides(overrides)
        if args.log_level:
            raw = mgr.apply_overrides({"app": {"log_level": args.log_level}})
        cfg = StudyConfig.from_mapping(raw)

        # 3) 用配置里的 log_level 重新初始化日志
        setup_logging(log_dir, level=cfg.log_level)
        log.info("log_level=%s", cfg.log_level)

        out_dir = resolve_out_dir(cfg.out_dir)
        RUNNERS[cfg.study](cfg, out_dir)
        print(out_dir)
        log.info("=== CorrBandit done: %s ===", out_dir)
        return 0
    except CorrBanditError as e:
        log.error("%s: %s", e.code, e)
        return _fail(e.to_dict(), 2)
    except Exception as e:  # noqa: BLE001
        log.exception("Unexpected failure")
        return _fail({"error": "Internal", "message": f"{type(e).__name__}: {e}"}, 1)

