"""Exception hierarchy shared across the pipeline."""


class SpsError(Exception):
    """Base class for all pipeline errors."""


class DimensionError(SpsError):
    """Matrix shapes are incompatible for the requested operation."""


class ConfigurationError(SpsError):
    """Hyper-parameters, parameter shapes, or module wiring are inconsistent."""


class IngestionError(SpsError):
    """An input file could not be decoded (bad format, truncation, NaN)."""


class ManifestError(SpsError):
    """A dataset manifest violates its contract (reported with line number)."""


class DegenerateViewError(SpsError):
    """A feature view collapsed to the zero vector; cosine similarity undefined."""


class DegenerateInputError(SpsError):
    """An input is too small or empty for the requested extractor."""


class CheckpointError(SpsError):
    """Checkpoint file is corrupt, truncated, or of an unsupported version."""


class TrainingDivergenceError(SpsError):
    """A non-finite gradient or loss appeared during training."""


class EvaluationError(SpsError):
    """Evaluation inputs are misaligned."""


class NonConvergenceWarning(UserWarning):
    """Iterative fit stopped at max_iter; the last iterate is still returned."""
