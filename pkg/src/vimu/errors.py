"""Exception types shared across the package."""


class VimuError(Exception):
    """Base class for library errors."""


class ConfigError(VimuError):
    """Invalid configuration, layer geometry, or usage."""


class DataError(VimuError):
    """Malformed or inconsistent data (files, channels, splits)."""


class FormatError(DataError):
    """Corrupt, truncated, or wrongly versioned binary artifact."""


class ModalityError(DataError):
    """Operation applied to the wrong signal modality."""


class StatsMismatchError(DataError):
    """Normalization statistics do not match the data geometry."""


class LeakageError(DataError):
    """Test-trial data reached a training step."""


class DivergenceError(VimuError):
    """Training produced non-finite losses."""
