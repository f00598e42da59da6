from __future__ import annotations

from typing import Optional


class WhoeffdingError(Exception):
    """Base error. `status_code` follows the HTTP convention used by the API layer."""

    status_code: int = 422

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ArgumentError(WhoeffdingError, ValueError):
    status_code = 422


class CapExceededError(ArgumentError):
    pass


class DomainError(ArgumentError):
    pass


class UnsupportedError(WhoeffdingError):
    status_code = 409


class DivergenceError(WhoeffdingError):
    status_code = 409

    def __init__(self, detail: str, partial_sum: Optional[float] = None):
        super().__init__(detail)
        self.partial_sum = partial_sum


class ConfigError(WhoeffdingError):
    status_code = 422

    def __init__(self, detail: str, line: Optional[int] = None):
        if line is not None:
            detail = f"line {line}: {detail}"
        super().__init__(detail)
        self.line = line
