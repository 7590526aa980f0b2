"""Exception hierarchy shared by every module of the package."""


class ConeBeamPoseError(Exception):
    """Base class for all package errors."""


class PreconditionError(ConeBeamPoseError, ValueError):
    """An argument violates the documented preconditions of an operation."""


class InvalidRotationError(PreconditionError):
    """A rotation matrix or quaternion is not a proper rotation."""


class BehindSourceError(ConeBeamPoseError):
    """A point lies at or behind the X-ray source plane (depth <= 1e-9 mm)."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DegenerateConfigurationError(ConeBeamPoseError):
    """The 2D/3D correspondences do not determine a unique pose."""


class CheiralityError(ConeBeamPoseError):
    """A recovered pose places control points behind the source."""


class NumericalError(ConeBeamPoseError):
    """A non-finite value appeared during optimisation."""


class GenerationError(ConeBeamPoseError):
    """Dataset generation could not satisfy its constraints."""


class DataFormatError(ConeBeamPoseError):
    """A dataset or prediction file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MissingPredictionError(ConeBeamPoseError):
    """Some samples have no matching prediction."""

    def __init__(self, missing_ids):
        self.missing_ids = sorted(missing_ids)
        shown = ", ".join(str(i) for i in self.missing_ids[:20])
        more = "" if len(self.missing_ids) <= 20 else f", ... ({len(self.missing_ids)} total)"
        super().__init__(f"no prediction for sample ids: {shown}{more}")
