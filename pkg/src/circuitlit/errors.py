"""Shared exception types.

Validation errors carry the offending key/path in ``.key`` so tool layers can
format observations like ``load failed: MissingField(doc_id)`` without parsing
message strings.
"""

from __future__ import annotations


class CircuitLitError(Exception):
    """Base class for all package errors."""


class KeyedError(CircuitLitError):
    """Error pinned to a named field, path, or identifier."""

    def __init__(self, key: str, detail: str = ""):
        self.key = key
        self.detail = detail
        msg = f"{type(self).__name__}({key})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)

    def tag(self) -> str:
        return f"{type(self).__name__}({self.key})"


class MissingField(KeyedError):
    pass


class UnreadableImage(KeyedError):
    pass


class DuplicateImageId(KeyedError):
    pass


class EmptyDocument(CircuitLitError):
    pass


class ProviderError(CircuitLitError):
    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class DimMismatch(CircuitLitError):
    pass


class EmptyBatch(CircuitLitError):
    pass


class CorruptIndex(CircuitLitError):
    pass


class FetchNotFound(KeyedError):
    pass


class NetworkError(ProviderError):
    def __init__(self, message: str):
        super().__init__(message, retryable=True)


class UnsupportedKind(KeyedError):
    pass


class EmptyImage(CircuitLitError):
    pass


class NoComponents(CircuitLitError):
    pass
