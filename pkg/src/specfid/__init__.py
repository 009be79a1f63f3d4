"""specfid: how low-bit quantization error reshapes the singular spectrum of power-law matrices."""

from importlib.metadata import PackageNotFoundError, version

from .errors import (
    ConfigError,
    DataError,
    DomainError,
    FormatError,
    ShapeError,
    SpecfidError,
    TruncationError,
)

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - running from a source tree
    __version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "DomainError",
    "FormatError",
    "ShapeError",
    "SpecfidError",
    "TruncationError",
    "__version__",
]
