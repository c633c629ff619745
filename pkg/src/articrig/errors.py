"""Exception classes shared across the package."""


class ArticRigError(Exception):
    """Base class for all errors raised by articrig."""


class DegenerateGeometryError(ArticRigError, ValueError):
    """Raised when a geometric construction has no well-defined answer
    (zero-length axis, coincident keypoints, stacked projections)."""


class SchemaError(ArticRigError, ValueError):
    """A JSON asset is missing fields or holds values of the wrong shape."""


class SplatFormatError(ArticRigError, ValueError):
    """A splat PLY header does not match the expected property layout."""


class SplatLengthError(SplatFormatError):
    """The binary payload of a splat PLY is shorter or longer than declared."""


class ConfigError(ArticRigError, ValueError):
    """The pipeline configuration cannot be parsed or is inconsistent."""


class RefineError(ArticRigError, ValueError):
    """The pose refinement objective was evaluated at invalid parameters."""
