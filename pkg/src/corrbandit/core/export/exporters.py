from __future__ import annotations

import csv
import json
import logging
import math
import os
import shutil
import tempfile
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)


def _jsonable(obj: Any) -> Any:
    """numpy 标量/数组转 Python；nan/inf 写成 null（JSON 没有这两个字面量）。"""
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(out_path: Path, data: Mapping[str, Any]) -> Path:
    out_path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(data), ensure_ascii=False, indent=2)
    out_path.write_text(text + "\n", encoding="utf-8")
    return out_path


def write_csv(out_path: Path, columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    """
    导出 CSV：表头固定为 columns，行按给定顺序写出。
    """
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), extrasaction="raise", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _jsonable(v) for k, v in row.items()})
    return out_path


class OutputStage:
    """
    研究输出先写进 out_dir 旁的临时目录，成功后逐个 os.replace 到 out_dir；
    失败时删除临时目录，out_dir 里不会出现半成品。

        with OutputStage(out_dir) as stage:
            write_csv(stage.path("results.csv"), ...)
    """

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self._tmp: Path | None = None
        self.committed: list[Path] = []

    def __enter__(self) -> "OutputStage":
        self.out_dir.parent.mkdir(parents=True, exist_ok=True)
        self._tmp = Path(tempfile.mkdtemp(prefix=f".{self.out_dir.name}-", dir=self.out_dir.parent))
        return self

    def path(self, relative: str) -> Path:
        if self._tmp is None:
            raise RuntimeError("OutputStage used outside its with-block")
        p = self._tmp / relative
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def __exit__(self, exc_type, exc, tb) -> bool:
        tmp = self._tmp
        self._tmp = None
        try:
            if exc_type is None and tmp is not None:
                self._commit(tmp)
            elif exc_type is not None:
                log.warning("Study failed, staged outputs discarded: %s", tmp)
        finally:
            if tmp is not None:
                shutil.rmtree(tmp, ignore_errors=True)
        return False

    def _commit(self, tmp: Path) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        for src in sorted(p for p in tmp.rglob("*") if p.is_file()):
            dst = self.out_dir / src.relative_to(tmp)
            dst.parent.mkdir(parents=True, exist_ok=True)
            os.replace(src, dst)
            self.committed.append(dst)
        log.info("Outputs written: %s (%d files)", self.out_dir, len(self.committed))
