"""Online estimation of SDE drift and diffusion coefficients by stochastic mirror descent."""

from .errors import (
    ConfigError,
    DataError,
    DomainError,
    ExplosionError,
    InvalidArgumentError,
    UnidentifiableError,
)
from .spaces import Ball, Box, Simplex, project

__version__ = "0.1.0"

__all__ = [
    "Ball",
    "Box",
    "ConfigError",
    "DataError",
    "DomainError",
    "ExplosionError",
    "InvalidArgumentError",
    "Simplex",
    "UnidentifiableError",
    "project",
]
