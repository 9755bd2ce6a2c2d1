"""Exception types raised across the package."""


class LirposeError(Exception):
    """Base class for all package errors."""


class GeometryError(LirposeError):
    pass


class NearZeroMatrix(GeometryError):
    pass


class DegenerateRays(GeometryError):
    """Left and right rays are parallel, so no unique intersection exists."""


class DegenerateEpsilon(GeometryError):
    """The pose-only reprojection vector vanishes and cannot be normalized."""


class BehindCamera(GeometryError):
    pass


class SolverError(LirposeError):
    pass


class TooFewEffectivePairs(SolverError):
    pass


class IllConditionedB1(SolverError):
    pass


class NoValidCandidate(SolverError):
    """No candidate pose passed the chirality filter."""


class ZeroScale(SolverError):
    pass


class NoModelFound(SolverError):
    pass


class GenerationExhausted(LirposeError):
    pass


class InputError(LirposeError):
    pass


class ParseError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingIntrinsics(InputError):
    pass


class TooFewMatches(InputError):
    pass


class ConfigError(InputError):
    def __init__(self, field, message=""):
        self.field = field
        super().__init__(f"{field}: {message}" if message else field)


class DimensionMismatch(InputError):
    pass
