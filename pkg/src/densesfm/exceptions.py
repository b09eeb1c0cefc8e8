"""Exception types shared across the matching pipeline."""


class PyramidFormatError(ValueError):
    """A pyramid file or in-memory pyramid violates the format contract."""


class BadMagicError(PyramidFormatError):
    """File does not start with the expected magic bytes."""


class TruncatedFileError(PyramidFormatError):
    """File ended before the declared payload was fully read."""


class NonFiniteDataError(PyramidFormatError):
    """Descriptor payload contains NaN or infinity."""


class StrideChainError(PyramidFormatError):
    """Level strides do not form a halving chain ending at stride 1."""


class PyramidStructureError(ValueError):
    """A pyramid is missing a level required by the requested operation."""


class BoundsError(IndexError):
    """Cell or pixel coordinate lies outside its grid or image."""


class DegeneracyError(ValueError):
    """Point configuration is too degenerate to fit the requested model."""


class NoModelError(ValueError):
    """Robust estimation found no model with minimal support."""


class InvalidRotationError(ValueError):
    """Matrix expected to be a proper rotation is not one."""


class ArchiveFormatError(ValueError):
    """A match archive is corrupt or has an unsupported version."""
