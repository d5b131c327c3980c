"""Exception types shared across the package.

The CLI maps these onto stable exit codes (config 2, data 3, divergence 4).
"""


class EnnfedError(Exception):
    pass


class ShapeError(EnnfedError):
    """Tensor/layer dimension mismatch, at build or run time."""


class ConfigError(EnnfedError):
    """Invalid or unparseable experiment configuration."""


class DataError(EnnfedError):
    """Missing or malformed dataset / checkpoint input."""


class DivergenceError(EnnfedError):
    """A non-finite loss or gradient was produced during training."""
