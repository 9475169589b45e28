"""Exception taxonomy for the training/export harness."""


class HarnessError(Exception):
    """Base class for all harness failures."""


class SpecError(HarnessError):
    """An experiment spec file is malformed or describes an invalid run."""


class DataError(HarnessError):
    """Dataset acquisition, construction, or build-artifact loading failed."""


class TrainingError(HarnessError):
    """Model training could not run or produced unusable artifacts."""


class LayerLookupError(HarnessError):
    """The target layer for activation-map extraction could not be found."""


class ExportError(HarnessError):
    """Writing the analysis-ready dataset failed."""
