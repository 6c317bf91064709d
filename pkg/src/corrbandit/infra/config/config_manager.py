from __future__ import annotations

import importlib.resources as ir
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import yaml

from corrbandit.errors import ConfigError

log = logging.getLogger(__name__)


def get_default_config_path() -> Path:
    """包内 default_config.yaml（打包态由 importlib.resources 提供可读路径）。"""
    with ir.as_file(ir.files("corrbandit.infra.config") / "default_config.yaml") as p:
        return p


def deep_merge(base: dict, override: Mapping[str, Any]) -> dict:
    """
    深合并：override 的值覆盖 base；若两边都是 dict，则递归合并。
    """
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def load_yaml(path: Path | None) -> dict:
    if path is None or not path.exists():
        return {}
    with path.open("r", encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"invalid YAML in {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"YAML root must be a mapping: {path}")
    return data


def save_yaml(path: Path, data: Mapping[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        yaml.safe_dump(
            dict(data),
            f,
            allow_unicode=True,
            sort_keys=False,
            default_flow_style=False,
        )


@dataclass(frozen=True)
class ConfigPaths:
    default_config_path: Path
    user_config_path: Path | None = None


class ConfigManager:
    """
    配置加载优先级：
      1) default_config.yaml（内置默认）
      2) --config 指定的研究配置（缺省时为空）
      3) 命令行参数（apply_overrides）
    """

    def __init__(self, paths: ConfigPaths):
        self._paths = paths
        self._config: dict[str, Any] = {}

    @property
    def config(self) -> dict[str, Any]:
        return self._config

    def load(self) -> dict[str, Any]:
        default_cfg = load_yaml(self._paths.default_config_path)
        user_path = self._paths.user_config_path
        if user_path is not None and not user_path.exists():
            raise ConfigError(f"config file not found: {user_path}")
        user_cfg = load_yaml(user_path)

        unknown = sorted(set(user_cfg) - set(default_cfg))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

        self._config = deep_merge(default_cfg, user_cfg)
        log.info("Config loaded. default=%s user=%s", self._paths.default_config_path, user_path)
        return self._config

    def apply_overrides(self, overrides: Mapping[str, Any]) -> dict[str, Any]:
        """命令行覆盖：值为 None 的项表示未指定，跳过。"""
        given = {k: v for k, v in overrides.items() if v is not None}
        if given:
            log.info("CLI overrides: %s", given)
        self._config = deep_merge(self._config, given)
        return self._config

    def write_template(self, path: Path) -> Path:
        """
        把内置默认配置写出一份，用户改完再用 --config 指定。
        已存在则不覆盖。
        """
        if path.exists():
            log.info("Config template exists, skipped: %s", path)
            return path
        save_yaml(path, load_yaml(self._paths.default_config_path))
        log.info("Config template created: %s", path)
        return path
