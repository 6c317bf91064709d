from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np

from corrbandit.core.environment.covariance import DEFAULT_TOL_PSD, CovarianceModel, validate_covariance
from corrbandit.core.environment.matrix_file import load_matrix_file
from corrbandit.errors import InvalidIndexError, RhoOutOfRangeError, TooFewArmsError, UnknownIdError

log = logging.getLogger(__name__)

EXPERIMENT_K = 35

# 第一簇：臂 1 与 2–4 强相关（0.9），2–4 之间 0.85
M1 = np.array(
    [
        [1.0, 0.9, 0.9, 0.9],
        [0.9, 1.0, 0.85, 0.85],
        [0.9, 0.85, 1.0, 0.85],
        [0.9, 0.85, 0.85, 1.0],
    ]
)

# sigma3 的第一簇：弱相关
M3 = np.array(
    [
        [1.0, 0.5, 0.45, 0.5],
        [0.5, 1.0, 0.45, 0.4],
        [0.45, 0.45, 1.0, 0.4],
        [0.5, 0.4, 0.4, 1.0],
    ]
)

# --as-printed 时的第二簇尺寸；默认把 sigma1/sigma3 的单位阵补到 K=35
AS_PRINTED_TAIL = {1: 25, 2: 31, 3: 30}


def tridiagonal(n: int, off: float = 0.2) -> np.ndarray:
    t = np.eye(n)
    idx = np.arange(n - 1)
    t[idx, idx + 1] = off
    t[idx + 1, idx] = off
    return t


def block_diag(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, m = a.shape[0], b.shape[0]
    out = np.zeros((n + m, n + m))
    out[:n, :n] = a
    out[n:, n:] = b
    return out


def build_experiment_cov(exp_id: int, *, as_printed: bool = False, tol_psd: float = DEFAULT_TOL_PSD) -> CovarianceModel:
    """
    三个实验协方差（块对角）：
      1: M1 ⊕ I
      2: M1 ⊕ Tr(1, 0.2)
      3: M3 ⊕ I
    默认第二簇尺寸取 K − 4 = 31，使三组都是 35 臂；as_printed=True 改用 AS_PRINTED_TAIL。
    """
    if exp_id not in AS_PRINTED_TAIL:
        raise UnknownIdError(f"unknown experiment id {exp_id!r}; expected 1, 2 or 3")
    tail = AS_PRINTED_TAIL[exp_id] if as_printed else EXPERIMENT_K - 4
    if exp_id == 1:
        m = block_diag(M1, np.eye(tail))
    elif exp_id == 2:
        m = block_diag(M1, tridiagonal(tail, 0.2))
    else:
        m = block_diag(M3, np.eye(tail))
    return validate_covariance(m, tol_psd, name=f"sigma{exp_id}")


def lb_rho2_limit(K: int) -> float:
    """UB_{ρ²} = 1 − 1/√(K−2)。"""
    return 1.0 - 1.0 / math.sqrt(K - 2)


def build_lb_cov(K: int, rho: float, *, tol_psd: float = DEFAULT_TOL_PSD) -> CovarianceModel:
    """
    下界构造：单位对角，Σ_ij = ρ^{min(i,j)}（i, j 按 1 起算）。
    ℰ_1 ≤ ℰ_2 ≤ … ≤ ℰ_K。ρ² 超过 UB_{ρ²} 只告警。

    K ≥ 6 且 ρ 接近 √UB 时整个矩阵不是 PSD（K=10 时 ρ > 0.375 即如此），
    但每个 2×2 边缘仍正定；这里只告警，模型带 psd=False。
    """
    if K < 3:
        raise TooFewArmsError(f"need K >= 3 arms, got K={K}")
    if not 0.0 < rho < 1.0:
        raise RhoOutOfRangeError(f"rho must lie in (0, 1), got {rho!r}")
    if rho * rho > lb_rho2_limit(K):
        log.warning("rho^2=%.6g exceeds the lower-bound limit %.6g for K=%d", rho * rho, lb_rho2_limit(K), K)

    labels = np.arange(1, K + 1)
    expo = np.minimum.outer(labels, labels)
    m = np.power(float(rho), expo.astype(np.float64))
    np.fill_diagonal(m, 1.0)
    model = validate_covariance(m, tol_psd, name=f"lb:{K}:{rho:g}", allow_indefinite=True)
    if not model.psd:
        log.warning("lb:%d:%g is not PSD (min eigenvalue %.3e); pairwise marginals stay valid",
                    K, rho, model.min_eigenvalue)
    return model


def transform_problem(model: CovarianceModel, m: int, *, tol_psd: float = DEFAULT_TOL_PSD) -> CovarianceModel:
    """
    第 m 个问题变换：对称交换臂 0 与臂 m（行和列同时交换，Σ_m = P Σ Pᵀ），
    使臂 m 成为最优臂。两次相同变换还原原矩阵。
    """
    K = model.K
    if not 1 <= m < K:
        raise InvalidIndexError(f"transformation index must satisfy 1 <= m < K (0-based), got {m} for K={K}")
    perm = np.arange(K)
    perm[[0, m]] = perm[[m, 0]]
    swapped = model.matrix[np.ix_(perm, perm)]
    return validate_covariance(swapped, tol_psd, name=f"{model.name}|swap(1,{m + 1})",
                               allow_indefinite=not model.psd)


def permute_model(model: CovarianceModel, perm, *, tol_psd: float = DEFAULT_TOL_PSD) -> CovarianceModel:
    """按任意排列重排臂编号：新臂 a 对应原臂 perm[a]。"""
    perm = np.asarray(perm, dtype=int)
    return validate_covariance(model.matrix[np.ix_(perm, perm)], tol_psd, name=f"{model.name}|perm",
                               allow_indefinite=not model.psd)


def resolve_model(name: str, *, as_printed: bool = False, tol_psd: float = DEFAULT_TOL_PSD) -> CovarianceModel:
    """
    按名字取模型：sigma1 / sigma2 / sigma3 / lb:K:rho；其它视为矩阵文件路径。
    """
    key = str(name).strip()
    if key in ("sigma1", "sigma2", "sigma3"):
        return build_experiment_cov(int(key[-1]), as_printed=as_printed, tol_psd=tol_psd)
    if key.startswith("lb:"):
        parts = key.split(":")
        if len(parts) != 3:
            raise UnknownIdError(f"lower-bound model must be lb:K:rho, got {key!r}")
        try:
            K, rho = int(parts[1]), float(parts[2])
        except ValueError as e:
            raise UnknownIdError(f"lower-bound model must be lb:K:rho, got {key!r}") from e
        return build_lb_cov(K, rho, tol_psd=tol_psd)
    path = Path(key)
    if path.suffix or path.exists():
        return load_matrix_file(path, tol_psd=tol_psd)
    raise UnknownIdError(f"unknown model {key!r}; expected sigma1|sigma2|sigma3|lb:K:rho|<matrix file>")
