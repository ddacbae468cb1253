"""Exception hierarchy shared across the toolkit.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, DivergenceError -> 4.
"""


class HakwsError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(HakwsError):
    """Bad or inconsistent configuration."""


class DataError(HakwsError):
    """Missing or malformed data assets (corpora, banks, manifests)."""


class DivergenceError(HakwsError):
    """Training produced non-finite losses or gradients."""


class LowEnergyWarning(UserWarning):
    """Measurement input had almost no energy; result is unreliable."""
