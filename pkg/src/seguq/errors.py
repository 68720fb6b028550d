"""Exception types raised across the toolkit.

Every error that callers are expected to catch has its own class so that
cohort-level drivers can attribute failures to a specific contract
violation instead of parsing messages.
"""


class SegUQError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatchError(SegUQError):
    """Inputs that must share dims/spacing do not."""


class EmptyMaskError(SegUQError):
    """A mask required to contain foreground is all background."""


class EmptyGroundTruthError(SegUQError):
    """Reference mask is empty where the metric needs a nonzero reference volume."""


class EmptyVentriclesError(SegUQError):
    """Ventricle mask has no foreground; distance rings are undefined."""


class RaggedSamplesError(SegUQError):
    """Per-slice sample lists do not all have the same length."""


class DomainError(SegUQError):
    """Numeric argument outside the valid domain (e.g. concentration < 1)."""


class DegenerateError(SegUQError):
    """Metric denominator is empty/zero; value is undefined, not 0."""


class DegenerateLabelsError(SegUQError):
    """Classifier fitting needs at least two classes present."""


class MissingFeatureError(SegUQError):
    """A row does not cover every feature the model was trained on."""


class SynthSpecError(SegUQError):
    """Synthetic volume spec cannot be realised (e.g. no room for lesions)."""


class ConfigError(SegUQError):
    """Pipeline configuration is invalid or references missing inputs."""
