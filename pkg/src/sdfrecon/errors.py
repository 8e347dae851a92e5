"""Exception taxonomy shared by every module.

Exit-code mapping used by the CLI: input problems -> 1, numeric problems -> 2,
I/O problems -> 3 (see ``EXIT_CODE``).
"""


class SdfReconError(Exception):
    """Base class for all package errors."""


# --- input / contract violations (exit code 1) ---

class ParseError(SdfReconError):
    """A mesh, container, or camera file does not match its grammar."""


class MissingInput(SdfReconError):
    """A required input file or container entry is absent."""


class EmptyMesh(SdfReconError):
    """Zero faces where at least one is required."""


class EmptyCloud(SdfReconError):
    pass


class BadCount(SdfReconError):
    """A requested count is outside its valid range."""


class DegenerateExtent(SdfReconError):
    """Bounding box with zero longest side."""


class GridMismatch(SdfReconError):
    """Two grids disagree in resolution or extent."""


class LengthMismatch(SdfReconError):
    pass


class ShapeMismatch(SdfReconError):
    pass


class KernelTooLarge(SdfReconError):
    pass


class UnboundPort(SdfReconError):
    """A fuse port was declared but never bound, or bound twice."""


class BadBundle(SdfReconError):
    """Weight bundle violates its structural contract."""


class OpenMesh(SdfReconError):
    """Operation requires a watertight mesh."""


class CameraInsideMesh(SdfReconError):
    pass


# --- numeric failures (exit code 2) ---

class NumericError(SdfReconError):
    pass


class NondeterministicSign(NumericError):
    """Parity ray kept grazing edges/vertices after all retries."""


class SubdivisionOverflow(NumericError):
    """Midpoint subdivision exceeded the depth cap."""


# --- helpers ---

class PipelineStageError(SdfReconError):
    """Wraps a constituent failure with the pipeline stage that raised it."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}': {cause}")
        self.stage = stage
        self.cause = cause


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit code contract."""
    if isinstance(exc, PipelineStageError):
        return exit_code_for(exc.cause)
    if isinstance(exc, NumericError):
        return 2
    if isinstance(exc, (OSError, IOError)):
        return 3
    if isinstance(exc, SdfReconError):
        return 1
    return 1


EXIT_CODE = {"input": 1, "numeric": 2, "io": 3}
