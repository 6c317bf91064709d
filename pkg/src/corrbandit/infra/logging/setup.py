from __future__ import annotations

import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path

LOG_FORMAT = "%(asctime)s | %(levelname)s | %(name)s | %(message)s"


def setup_logging(log_dir: Path | None, level: str = "INFO") -> None:
    """
    根 logger：滚动文件 + 控制台（stderr）。
    log_dir=None 时只挂控制台（测试、只读环境）。
    """
    root = logging.getLogger()
    root.setLevel(getattr(logging, str(level).upper(), logging.INFO))

    fmt = logging.Formatter(fmt=LOG_FORMAT, datefmt="%Y-%m-%d %H:%M:%S")

    handlers: list[logging.Handler] = []
    if log_dir is not None:
        log_dir.mkdir(parents=True, exist_ok=True)
        fh = RotatingFileHandler(
            log_dir / "corrbandit.log", maxBytes=10 * 1024 * 1024, backupCount=10, encoding="utf-8"
        )
        handlers.append(fh)

    # 控制台走 stderr，stdout 留给结果路径
    handlers.append(logging.StreamHandler())

    # 避免重复添加
    root.handlers.clear()
    for h in handlers:
        h.setFormatter(fmt)
        h.setLevel(root.level)
        root.addHandler(h)
