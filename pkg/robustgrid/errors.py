from __future__ import annotations

from typing import Optional


class RobustGridError(Exception):
    """Base class for every error raised by robustgrid."""


class NetworkFormatError(RobustGridError):
    """Raised when a network document is malformed."""

    def __init__(self, message: str, layer: Optional[int] = None):
        self.layer = layer
        if layer is not None:
            message = f"layer {layer}: {message}"
        super().__init__(message)


class DimensionMismatch(RobustGridError, ValueError):
    """Raised when a vector or matrix does not have the size it is combined with."""

    def __init__(self, expected: int, got: int, where: str, layer: Optional[int] = None):
        self.expected = expected
        self.got = got
        self.where = where
        self.layer = layer
        prefix = f"layer {layer}: " if layer is not None else ""
        super().__init__(f"{prefix}{where}: expected {expected}, got {got}")


class ImageFormatError(RobustGridError):
    """Raised when an image file cannot be decoded into a grayscale image."""


class EncodingError(RobustGridError, ValueError):
    """Raised when a perturbation cannot be encoded as a verification query."""


class MisclassifiedAnchor(RobustGridError):
    """Raised when an anchor image is not classified as its label."""

    def __init__(self, expected: int, got: int):
        self.expected = expected
        self.got = got
        super().__init__(f"anchor is classified as {got}, expected {expected}")


class OracleCapExceeded(RobustGridError):
    """Raised when enumeration is requested for a network with too many ReLUs."""

    def __init__(self, relus: int, cap: int):
        self.relus = relus
        self.cap = cap
        super().__init__(f"network has {relus} ReLUs, enumeration is capped at {cap}")


class ConfigError(RobustGridError, ValueError):
    """Raised when a sweep configuration or command line argument is invalid."""


class VerifierError(RobustGridError):
    """Raised when the verification pipeline fails for an anchor."""
