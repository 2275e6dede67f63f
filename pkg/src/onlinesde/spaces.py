"""Compact convex parameter sets with closed-form Euclidean projection.

Every projection works on a single point of shape ``(p,)`` or on a batch of
points of shape ``(..., p)``; the batch form is what the Monte-Carlo harness
uses to advance many replications at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError


def as_parameter(coords, dim: int | None = None) -> np.ndarray:
    """Validate and return a parameter vector as a float array of shape ``(p,)``."""
    theta = np.atleast_1d(np.asarray(coords, dtype=float))
    if theta.ndim != 1 or theta.size < 1:
        raise InvalidArgumentError(f"parameter must be a non-empty vector, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise InvalidArgumentError("parameter coordinates must be finite")
    if dim is not None and theta.size != dim:
        raise InvalidArgumentError(f"parameter has dimension {theta.size}, expected {dim}")
    return theta


class ParameterSpace:
    """Base class; subclasses define ``dim``, ``diameter``, ``center`` and ``_project``."""

    kind: str = ""
    dim: int
    diameter: float
    center: np.ndarray

    def project(self, point) -> np.ndarray:
        x = np.asarray(point, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.dim:
            raise InvalidArgumentError(
                f"point of shape {x.shape} does not match a {self.dim}-dimensional space"
            )
        return self._project(x)

    def contains(self, point, tol: float = 1e-12) -> bool:
        x = np.asarray(point, dtype=float)
        return bool(np.all(np.linalg.norm(self.project(x) - x, axis=-1) <= tol))

    def _project(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Box(ParameterSpace):
    lower: np.ndarray
    upper: np.ndarray
    kind: str = field(default="box", init=False)

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InvalidArgumentError("box bounds must be vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InvalidArgumentError("box bounds must be finite")
        if np.any(lo > hi):
            raise InvalidArgumentError("box requires lower <= upper in every coordinate")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def _project(self, x):
        return np.clip(x, self.lower, self.upper)

    def __eq__(self, other):
        return (
            isinstance(other, Box)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )

    def __repr__(self):
        return f"Box(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


@dataclass(frozen=True, eq=False)
class Ball(ParameterSpace):
    center: np.ndarray
    radius: float
    kind: str = field(default="ball", init=False)

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        if c.ndim != 1 or not np.all(np.isfinite(c)):
            raise InvalidArgumentError("ball center must be a finite vector")
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise InvalidArgumentError("ball radius must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def _project(self, x):
        offset = x - self.center
        norm = np.linalg.norm(offset, axis=-1, keepdims=True)
        scale = np.where(norm > self.radius, self.radius / np.where(norm > 0, norm, 1.0), 1.0)
        return self.center + offset * scale

    def __eq__(self, other):
        return (
            isinstance(other, Ball)
            and np.array_equal(self.center, other.center)
            and self.radius == other.radius
        )

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius})"


@dataclass(frozen=True)
class Simplex(ParameterSpace):
    """Probability simplex in R^p; the natural domain of the entropy prox."""

    p: int
    kind: str = field(default="simplex", init=False)

    def __post_init__(self):
        if self.p < 1:
            raise InvalidArgumentError("simplex dimension must be >= 1")

    @property
    def dim(self) -> int:
        return self.p

    @property
    def diameter(self) -> float:
        return float(np.sqrt(2.0)) if self.p > 1 else 0.0

    @property
    def center(self) -> np.ndarray:
        return np.full(self.p, 1.0 / self.p)

    def _project(self, x):
        # sort-based Euclidean projection (Held, Wolfe and Crowder)
        u = -np.sort(-x, axis=-1)
        css = np.cumsum(u, axis=-1) - 1.0
        k = np.arange(1, self.p + 1)
        cond = u - css / k > 0
        rho = self.p - 1 - np.argmax(cond[..., ::-1], axis=-1)
        tau = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1.0)
        return np.maximum(x - tau, 0.0)


def project(space: ParameterSpace, point) -> np.ndarray:
    """Euclidean-nearest point of ``space`` to ``point``."""
    return space.project(point)
