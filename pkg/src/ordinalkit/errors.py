"""Exception hierarchy shared by every ordinalkit module."""


class OrdinalError(Exception):
    """Base class for all library errors."""


class InvalidInputError(OrdinalError, ValueError):
    """Non-finite values, out-of-range hyperparameters, malformed vectors."""


class InvalidLabelError(OrdinalError, ValueError):
    """Class index outside 1..K or a label name not in the label space."""


class DomainError(OrdinalError, ValueError):
    """Empty inputs, length or dimension mismatches."""


class DegenerateBatchError(OrdinalError, ValueError):
    """Weighted-kappa batch whose chance-agreement term vanishes."""


class DegenerateTrainingError(OrdinalError, ValueError):
    """Training data lacks the classes the objective needs."""


class TrainingDivergedError(OrdinalError, RuntimeError):
    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class ConfigError(OrdinalError, ValueError):
    """Invalid experiment, loss or verbaliser configuration."""


class IngestionError(OrdinalError, ValueError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class RunNotFoundError(OrdinalError, FileNotFoundError):
    """A run directory or stored prediction is missing."""
