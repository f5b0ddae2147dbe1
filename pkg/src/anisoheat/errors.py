"""Exception hierarchy shared by all modules."""


class AnisoHeatError(Exception):
    """Base class for every error raised by the package."""

    code = "AnisoHeatError"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class NotSpd(AnisoHeatError, ValueError):
    code = "NotSpd"


class QuadratureFailure(AnisoHeatError, RuntimeError):
    code = "QuadratureFailure"


class QuadratureUnresolved(AnisoHeatError, RuntimeError):
    code = "QuadratureUnresolved"


class BadMollifier(AnisoHeatError, ValueError):
    code = "BadMollifier"


class BadExponent(AnisoHeatError, ValueError):
    code = "BadExponent"


class ExponentMismatch(AnisoHeatError, ValueError):
    code = "ExponentMismatch"


class AssumptionViolated(AnisoHeatError, ValueError):
    code = "AssumptionViolated"


class GridTooLarge(AnisoHeatError, ValueError):
    code = "GridTooLarge"


class MismatchedNets(AnisoHeatError, ValueError):
    code = "MismatchedNets"


class NetConstructionError(AnisoHeatError, ValueError):
    code = "NetConstructionError"


class ParseError(AnisoHeatError, ValueError):
    code = "ParseError"

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)

    def to_dict(self):
        d = super().to_dict()
        d["line"] = self.line
        return d


class ValidationError(ParseError):
    """Well-formed document whose content is rejected.

    ``reason`` carries the underlying error code (e.g. ``NotSpd``).
    """

    code = "ValidationError"

    def __init__(self, message, line=None, reason=None):
        self.reason = reason
        super().__init__(message, line)

    def to_dict(self):
        d = super().to_dict()
        d["reason"] = self.reason
        return d
