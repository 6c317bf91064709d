from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from corrbandit.errors import (
    NonPositiveVarianceError,
    NotPSDError,
    NotSquareError,
    NotSymmetricError,
    TooFewArmsError,
)

log = logging.getLogger(__name__)

DEFAULT_TOL_PSD = 1e-9
MIN_ARMS = 3


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """
    K×K 协方差矩阵 Σ：Σ_ii = σ_i²，Σ_ij = ρ_ij σ_i σ_j。
    构造后不可变（matrix 为只读副本），可跨线程/进程共享。
    只通过 validate_covariance 创建。
    """
    matrix: np.ndarray
    unit_bounded: bool
    name: str = ""
    min_eigenvalue: float = field(default=0.0, compare=False)
    psd: bool = True               # False 只出现在 allow_indefinite=True 构造的模型上

    @property
    def K(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def variances(self) -> np.ndarray:
        return np.diag(self.matrix).copy()

    @property
    def sigmas(self) -> np.ndarray:
        return np.sqrt(self.variances)

    @property
    def min_variance(self) -> float:
        """l = min_i σ_i²（误差界里的 l）。"""
        return float(self.variances.min())

    @property
    def max_variance(self) -> float:
        """u = max_i σ_i²。"""
        return float(self.variances.max())

    def rho(self, i: int, j: int) -> float:
        if i == j:
            return 1.0
        s = self.matrix
        return float(s[i, j] / np.sqrt(s[i, i] * s[j, j]))

    def correlations(self) -> np.ndarray:
        sig = self.sigmas
        return self.matrix / np.outer(sig, sig)

    def marginal(self, i: int, j: int) -> np.ndarray:
        """(i, j) 的 2×2 边缘协方差。"""
        idx = [i, j]
        return self.matrix[np.ix_(idx, idx)].copy()


def validate_covariance(
    raw, tol_psd: float = DEFAULT_TOL_PSD, *, name: str = "", allow_indefinite: bool = False
) -> CovarianceModel:
    """
    校验并冻结协方差矩阵。
    不对称是错误，不做对称化修复；PSD 用对称特征分解判断（Cholesky 会拒绝半正定）。
    tol_psd 相对最大对角元。

    allow_indefinite=True 时最小特征值为负不抛异常，返回 psd=False 的模型。
    只给成对使用的内置构造用：采样与 KL 只读 2×2 边缘，|ρ_ij| < 1 时边缘总是正定。
    用户矩阵始终走严格检查。
    """
    m = np.array(raw, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSquareError(f"covariance must be square, got shape {m.shape}")
    K = m.shape[0]
    if K < MIN_ARMS:
        raise TooFewArmsError(f"need K >= {MIN_ARMS} arms, got K={K}")
    if not np.all(np.isfinite(m)):
        raise NotPSDError("covariance contains non-finite entries")

    diff = np.abs(m - m.T)
    if np.any(diff > 0):
        i, j = np.unravel_index(int(np.argmax(diff)), diff.shape)
        raise NotSymmetricError(
            f"covariance not symmetric at arms ({i + 1},{j + 1}): {m[i, j]!r} != {m[j, i]!r}"
        )

    diag = np.diag(m)
    if np.any(diag <= 0):
        i = int(np.argmin(diag))
        raise NonPositiveVarianceError(f"variance of arm {i + 1} is {diag[i]!r} (must be > 0)")

    scale = float(diag.max())
    tol = tol_psd * scale
    eig_min = float(np.linalg.eigvalsh(m).min())
    psd = eig_min >= -tol
    if not psd:
        if not allow_indefinite:
            raise NotPSDError(f"covariance not PSD: min eigenvalue {eig_min:.3e} < -{tol:.3e}")
        log.debug("Covariance %s is not PSD (min eigenvalue %.3e); only its 2x2 marginals are used",
                    name or "<unnamed>", eig_min)

    sig = np.sqrt(diag)
    rho = m / np.outer(sig, sig)
    bad = np.abs(rho) > 1.0 + tol_psd
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise NotPSDError(f"|rho| > 1 for arms ({i + 1},{j + 1}): {rho[i, j]:.6g}")

    m.setflags(write=False)
    model = CovarianceModel(
        matrix=m,
        unit_bounded=bool(scale <= 1.0),
        name=name,
        min_eigenvalue=eig_min,
        psd=psd,
    )
    log.debug("Covariance validated: name=%s K=%d min_eig=%.3e unit_bounded=%s",
              name, K, eig_min, model.unit_bounded)
    return model
