from __future__ import annotations


class CorrBanditError(Exception):
    """
    所有业务异常的基类。
    code 为稳定的机器可读标识（CLI 失败时写入 stderr 的 error JSON）。
    """
    code = "CorrBanditError"

    def to_dict(self) -> dict[str, str]:
        return {"error": self.code, "message": str(self)}


# -------------------------
# covariance / environment
# -------------------------
class NotSquareError(CorrBanditError, ValueError):
    code = "NotSquare"


class TooFewArmsError(CorrBanditError, ValueError):
    code = "TooFewArms"


class NotSymmetricError(CorrBanditError, ValueError):
    code = "NotSymmetric"


class NotPSDError(CorrBanditError, ValueError):
    code = "NotPSD"


class NonPositiveVarianceError(CorrBanditError, ValueError):
    code = "NonPositiveVariance"


class InvalidPairError(CorrBanditError, ValueError):
    code = "InvalidPair"


class ZeroVarianceError(CorrBanditError, ValueError):
    code = "ZeroVariance"


class UnknownIdError(CorrBanditError, ValueError):
    code = "UnknownId"


class RhoOutOfRangeError(CorrBanditError, ValueError):
    code = "RhoOutOfRange"


class InvalidIndexError(CorrBanditError, ValueError):
    code = "InvalidIndex"


class MatrixFileError(CorrBanditError, ValueError):
    code = "MatrixFile"


class DegenerateGapsError(CorrBanditError, ValueError):
    code = "DegenerateGaps"


# -------------------------
# estimator
# -------------------------
class NoSamplesError(CorrBanditError, ValueError):
    code = "NoSamples"


class DegenerateVarianceError(CorrBanditError, ValueError):
    code = "DegenerateVariance"


class MissingPairError(CorrBanditError, RuntimeError):
    code = "MissingPair"


# -------------------------
# algorithms / bounds
# -------------------------
class BudgetTooSmallError(CorrBanditError, ValueError):
    code = "BudgetTooSmall"


class NonPositiveGapError(CorrBanditError, ValueError):
    code = "NonPositiveGap"


# -------------------------
# theory
# -------------------------
class SingularMatrixError(CorrBanditError, ValueError):
    code = "SingularMatrix"


class DimensionMismatchError(CorrBanditError, ValueError):
    code = "DimensionMismatch"


class EmptySamplesError(CorrBanditError, ValueError):
    code = "EmptySamples"


# -------------------------
# harness
# -------------------------
class ConfigError(CorrBanditError, ValueError):
    code = "ConfigError"
