from __future__ import annotations

import logging
from pathlib import Path
import numpy as np

from corrbandit.core.environment.covariance import CovarianceModel, validate_covariance
from corrbandit.errors import MatrixFileError

log = logging.getLogger(__name__)


def parse_matrix_text(text: str, source: str = "<text>") -> np.ndarray:
    """
    纯文本矩阵：第一行 K，随后 K 行、每行 K 个空白分隔的十进制数。
    空行与 # 注释行忽略。
    """
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise MatrixFileError(f"{source}: empty matrix file")
    try:
        K = int(lines[0])
    except ValueError as e:
        raise MatrixFileError(f"{source}: first line must be the arm count K, got {lines[0]!r}") from e
    rows = lines[1:]
    if len(rows) != K:
        raise MatrixFileError(f"{source}: expected {K} rows, found {len(rows)}")

    out = np.empty((K, K), dtype=np.float64)
    for r, ln in enumerate(rows):
        cells = ln.split()
        if len(cells) != K:
            raise MatrixFileError(f"{source}: row {r + 1} has {len(cells)} entries, expected {K}")
        try:
            out[r] = [float(c) for c in cells]
        except ValueError as e:
            raise MatrixFileError(f"{source}: row {r + 1} is not numeric: {ln!r}") from e
    return out


def load_matrix_file(path: Path, *, tol_psd: float = 1e-9) -> CovarianceModel:
    if not path.exists():
        raise MatrixFileError(f"matrix file not found: {path}")
    raw = parse_matrix_text(path.read_text(encoding="utf-8"), source=str(path))
    log.info("Matrix file loaded: %s K=%d", path, raw.shape[0])
    return validate_covariance(raw, tol_psd, name=path.stem)


def save_matrix_file(path: Path, matrix) -> Path:
    m = np.asarray(matrix, dtype=np.float64)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        f.write(f"{m.shape[0]}\n")
        for row in m:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")
    return path
