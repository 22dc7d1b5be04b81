"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid scenario / training / augmentation configuration."""


class DimensionError(ValueError):
    """Array shape inconsistent with the configured system dimensions."""


class DatasetFormatError(IOError):
    """On-disk dataset or checkpoint is corrupt or has an unsupported version."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during an optimization run."""
