"""Exception hierarchy for the camscope package."""


class CamscopeError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(CamscopeError):
    """A domain value failed validation (activation range, probability sum, ids)."""


class FormatError(CamscopeError):
    """A file on disk does not conform to the interchange format."""


class ManifestError(FormatError):
    """The dataset manifest is malformed or structurally inconsistent."""


class MetricError(CamscopeError):
    """A metric was evaluated on inputs outside its domain."""


class AnalysisError(CamscopeError):
    """An aggregation or ranking step received inconsistent inputs."""
