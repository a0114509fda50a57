"""Exception types shared across the package."""


class SegbiasError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SegbiasError, ValueError):
    """A configuration value violates its documented constraints."""


class DegenerateMaskError(SegbiasError):
    """Mask is all-foreground or all-background where a boundary is required."""


class ManifestError(SegbiasError):
    """A corpus manifest is missing, malformed, or references bad files."""


class DimensionMismatchError(ManifestError):
    """Files belonging to one sample disagree on image dimensions."""


class AlreadyBiasedError(SegbiasError):
    """Corruption was requested for a group that already contains corrupted samples."""


class UnknownGroupError(SegbiasError, KeyError):
    """A group id has no conditioning parameters in the model."""


class AllMaskedOutError(SegbiasError):
    """Every pixel weight is zero, so the weighted loss is undefined."""


class FoldDegenerateError(SegbiasError):
    """A cross-validation training split is missing a class or a group."""


class EmptyClassError(SegbiasError):
    """No observed pixels carry the class needed for a threshold."""


class ExpectedZeroError(SegbiasError):
    """A contingency table has an expected cell count of zero."""


class NoErrorsError(SegbiasError):
    """Both error types have zero total count; the symmetry score is undefined."""


class GroupTooSmallError(SegbiasError):
    """A group has too few members for the requested statistic."""


class TooFewPixelsError(SegbiasError):
    """Not enough pixels to run the requested clustering."""


class UndefinedItaError(SegbiasError):
    """ITA is undefined (L* = 50 with zero yellow-blue chroma)."""


class ShapeMismatchError(SegbiasError, ValueError):
    """Two masks passed to a metric have different shapes."""


class MissingCleanMaskError(SegbiasError):
    """A corrupted sample lacks the retained clean mask needed for evaluation."""
