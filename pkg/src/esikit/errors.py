"""Exception hierarchy shared by all esikit modules."""


class EsiError(Exception):
    """Base class for all esikit errors."""


class ParseError(EsiError):
    """A file violates its declared grammar.

    Carries the 1-based line number when one is known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FormatError(ParseError):
    """A file is in an unsupported variant of a known format (e.g. binary PLY)."""


class SchemaError(ParseError):
    """A CSV/table does not match the expected column schema."""


class TopologyError(EsiError):
    """Mesh connectivity violates an invariant (out-of-range index,
    degenerate face, non-manifold or inconsistently oriented edge)."""


class LimitError(EsiError):
    """A guard against resource blowup was exceeded."""


class GeometryError(EsiError):
    """A geometric precondition fails (coincident points, zero-length vector)."""


class ShapeError(EsiError):
    """Array dimensions are inconsistent with each other or with metadata."""


class DimensionError(ShapeError):
    """A requested size is outside the valid range (e.g. more modes than vertices)."""


class NumericalError(EsiError):
    """A numeric quantity left its valid regime (e.g. a near-infinite cotangent)."""


class ConvergenceError(NumericalError):
    """An iterative solver exhausted its iteration budget.

    ``residual`` records the last convergence measure for diagnostics.
    """

    def __init__(self, message, residual=None):
        if residual is not None:
            message = f"{message} (last residual {residual:.3e})"
        super().__init__(message)
        self.residual = residual


class LinAlgError(NumericalError):
    """A linear-algebra operation failed (singular system, indefinite covariance)."""


class DegenerateError(EsiError):
    """An input is degenerate for the requested operation (all-zero map,
    zero-variance vector, zero signal)."""
