"""Exception types shared across the package."""


class ScnetError(Exception):
    pass


class ShapeError(ScnetError, ValueError):
    """An operand dimension does not match what the operation requires."""


class NumericsError(ScnetError, ArithmeticError):
    """A NaN or Inf showed up where every value must be finite."""


class ConfigError(ScnetError, ValueError):
    """A model description or training configuration is invalid."""


class DataFormatError(ScnetError, ValueError):
    """A dataset file does not follow its declared binary layout."""


class CheckpointError(ScnetError, ValueError):
    """A checkpoint file is corrupt, truncated, or of unknown version."""


class TrainingDiverged(ScnetError, RuntimeError):
    """The optimization loop produced a non-finite loss."""
