"""Exception hierarchy shared by all patchdesc modules."""


class PatchdescError(Exception):
    """Base class for all errors raised by this package."""


class InvalidShapeError(PatchdescError):
    """A requested tensor shape is empty or has a non-positive extent."""


class ShapeMismatchError(PatchdescError):
    """Operand shapes are incompatible for the requested operation."""


class NonFiniteError(PatchdescError):
    """A tensor would contain NaN or infinite values."""


class CacheMismatchError(PatchdescError):
    """A backward pass received a gradient that does not fit its cache."""


class DatasetStructureError(PatchdescError):
    """A dataset directory is missing required files or is not a directory."""


class MosaicFormatError(PatchdescError):
    """A patch mosaic image is not a 1024x1024 8-bit grayscale image."""


class ConsistencyError(PatchdescError):
    """Dataset contents contradict each other (counts, ids, ranges)."""


class MatchFileParseError(PatchdescError):
    """A pair/match file line could not be parsed."""


class SamplingInfeasibleError(PatchdescError):
    """Requested pair counts exceed what the store(s) can provide."""


class EmptyBatchError(PatchdescError):
    """A loss or gradient was requested for an empty pair list."""


class DegenerateLabelsError(PatchdescError):
    """A metric needs both positive and negative labels but got only one."""


class DivergenceError(PatchdescError):
    """Training produced a non-finite objective or gradient."""


class CheckpointFormatError(PatchdescError):
    """A checkpoint file is malformed; message names the failing offset."""


class ConfigError(PatchdescError):
    """A run configuration value or key is invalid."""
