from __future__ import annotations

import hashlib

# 算法编号进入种子哈希；新增算法只能追加，不能改已有编号
ALGORITHM_IDS = {"uniform": 1, "sr": 2}


def stream_seed(base_seed: int, *labels: object) -> int:
    """64 位种子：blake2b(base_seed 与各标签)。只依赖输入，不依赖调度顺序。"""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(base_seed)).encode("ascii"))
    for lab in labels:
        h.update(b"\x1f")
        h.update(str(lab).encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


def replication_seed(base_seed: int, replication: int, algorithm: str) -> int:
    return stream_seed(base_seed, int(replication), ALGORITHM_IDS[algorithm])
