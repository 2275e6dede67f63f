"""Exception types raised across the package."""

from __future__ import annotations


class InvalidArgumentError(ValueError):
    """A caller-supplied argument violates a precondition."""


class DomainError(ValueError):
    """A point or constant lies outside the domain where a quantity is defined."""


class UnidentifiableError(ValueError):
    """The least-squares design is rank deficient; the parameter is not identified."""


class DataError(ValueError):
    """An observation stream contains an unusable value."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class ExplosionError(RuntimeError):
    """A simulated state became non-finite or exceeded the explosion threshold."""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class ConfigError(ValueError):
    """A run configuration failed validation; ``errors`` holds every problem found."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)
