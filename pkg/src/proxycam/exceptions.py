"""Exception types raised by proxycam.

Everything derives from ValueError so callers that do not care about the
distinction can catch one base class.
"""


class ShapeError(ValueError):
    """Array rank or dimensions do not match what an operation requires."""


class DegenerateInputError(ValueError):
    """Input is mathematically unusable: zero vector, all-zero heatmap, antipodal mean."""


class InvariantViolationError(ValueError):
    """A domain type's invariant does not hold (non-finite values, bad norms, ...)."""


class MissingDataError(ValueError):
    """Required records (embeddings, proxies, annotations) are absent."""


class ContainerFormatError(ValueError):
    """Tensor container file is malformed; message names the entry or byte offset."""


class AnnotationError(ValueError):
    """Annotation file is malformed or inconsistent with the image it describes."""


class EmptyMaskError(ValueError):
    """Binary mask has no foreground pixels where at least one is required."""
