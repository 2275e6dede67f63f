"""Stochastic mirror descent: prox functions, step-size schedules and iterates.

Two prox functions are supported, each with a closed-form mirror step:

* ``EuclideanProx`` (psi = ||theta||^2 / 2 on a box or ball): the step is
  projected gradient descent, ``project(theta - eta K)``.
* ``EntropyProx`` (psi = sum theta log theta on the simplex): the step is the
  multiplicative-weights update.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, InvalidArgumentError
from .spaces import ParameterSpace, Simplex, as_parameter


class EuclideanProx:
    kind = "euclidean"

    def __init__(self, space: ParameterSpace):
        self.space = space

    def value(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return 0.5 * np.sum(theta * theta, axis=-1)

    def gradient(self, theta) -> np.ndarray:
        return np.asarray(theta, dtype=float)

    def check_domain(self, theta) -> None:
        if not np.all(np.isfinite(theta)):
            raise DomainError("Euclidean prox needs finite points")

    def mirror_step(self, theta, K, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        if eta.ndim:
            eta = eta[..., None]
        return self.space.project(np.asarray(theta) - eta * np.asarray(K))


class EntropyProx:
    kind = "entropy"

    def __init__(self, space: Simplex):
        if not isinstance(space, Simplex):
            raise InvalidArgumentError("the entropy prox lives on a Simplex")
        self.space = space

    def check_domain(self, theta) -> None:
        if np.any(np.asarray(theta) <= 0) or not np.all(np.isfinite(theta)):
            raise DomainError("negative entropy is defined for positive coordinates only")

    def value(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        self.check_domain(theta)
        return np.sum(theta * np.log(theta), axis=-1)

    def gradient(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        self.check_domain(theta)
        return 1.0 + np.log(theta)

    def mirror_step(self, theta, K, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        if eta.ndim:
            eta = eta[..., None]
        w = np.log(np.asarray(theta, dtype=float)) - eta * np.asarray(K, dtype=float)
        w = w - np.max(w, axis=-1, keepdims=True)
        e = np.exp(w)
        return e / np.sum(e, axis=-1, keepdims=True)


def bregman(prox, theta, theta_prime) -> float:
    """D(theta, theta') = psi(theta) - psi(theta') - <grad psi(theta'), theta - theta'>."""
    theta = np.asarray(theta, dtype=float)
    theta_prime = np.asarray(theta_prime, dtype=float)
    prox.check_domain(theta)
    prox.check_domain(theta_prime)
    if prox.kind == "euclidean":
        # exact form avoids cancellation between the psi terms
        d = theta - theta_prime
        return 0.5 * np.sum(d * d, axis=-1)
    return (
        prox.value(theta)
        - prox.value(theta_prime)
        - np.sum(prox.gradient(theta_prime) * (theta - theta_prime), axis=-1)
    )


# --------------------------------------------------------------------------
# step-size schedules

SCHEDULE_KINDS = ("drift-sqrt", "drift-log", "diffusion-sqrt", "diffusion-log")


@dataclass(frozen=True)
class Schedule:
    """Learning rates eta_i for i = 1..n.

    =================  ================================
    drift-sqrt         eta h / sqrt(i)
    drift-log          eta h / sqrt(i log(n h^2))
    diffusion-sqrt     eta sqrt(h / i)
    diffusion-log      eta sqrt(h / (i log(n h)))
    =================  ================================

    The log variants need ``log(n h^2) >= 1`` (resp. ``log(n h) >= 1``).
    """

    kind: str
    eta: float
    h: float
    n: int

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise InvalidArgumentError(f"unknown schedule {self.kind!r}; choose from {SCHEDULE_KINDS}")
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise InvalidArgumentError("eta must be positive")
        if not self.h > 0:
            raise InvalidArgumentError("h must be positive")
        if int(self.n) < 1:
            raise InvalidArgumentError("n must be >= 1")
        if self.kind == "drift-log" and not math.log(self.n * self.h**2) >= 1:
            raise InvalidArgumentError(
                f"drift-log schedule requires log(n h^2) >= 1, got log({self.n * self.h**2:.6g})"
            )
        if self.kind == "diffusion-log" and not math.log(self.n * self.h) >= 1:
            raise InvalidArgumentError(
                f"diffusion-log schedule requires log(n h) >= 1, got log({self.n * self.h:.6g})"
            )

    def rates(self, i) -> np.ndarray:
        """Vectorised eta_i; no range check."""
        i = np.asarray(i, dtype=float)
        if self.kind == "drift-sqrt":
            return self.eta * self.h / np.sqrt(i)
        if self.kind == "drift-log":
            return self.eta * self.h / np.sqrt(i * math.log(self.n * self.h**2))
        if self.kind == "diffusion-sqrt":
            return self.eta * np.sqrt(self.h / i)
        return self.eta * np.sqrt(self.h / (i * math.log(self.n * self.h)))


def schedule_rate(s: Schedule, i: int) -> float:
    if not 1 <= i <= s.n:
        raise InvalidArgumentError(f"step index {i} outside 1..{s.n}")
    return float(s.rates(i))


# --------------------------------------------------------------------------
# iterates


@dataclass(frozen=True, eq=False)
class SmdState:
    """Current iterate theta_i, its index i and the sum of all iterates so far.

    With ``tail_from`` set, a second sum collects iterates with index
    ``>= tail_from`` for the optional tail average.
    """

    theta: np.ndarray
    index: int
    running_sum: np.ndarray
    space: ParameterSpace
    prox: object = None
    tail_from: int | None = None
    tail_sum: np.ndarray | None = None
    tail_count: int = 0

    @classmethod
    def start(cls, space: ParameterSpace, theta1=None, prox=None, tail_from: int | None = None) -> "SmdState":
        prox = prox if prox is not None else EuclideanProx(space)
        theta = space.center.copy() if theta1 is None else as_parameter(theta1, space.dim)
        if not space.contains(theta, tol=1e-12):
            raise InvalidArgumentError(f"initial iterate {theta} is outside the parameter space")
        if tail_from is not None and tail_from < 1:
            raise InvalidArgumentError("tail_from must be >= 1")
        in_tail = tail_from is not None and tail_from <= 1
        return cls(
            theta=theta,
            index=1,
            running_sum=theta.copy(),
            space=space,
            prox=prox,
            tail_from=tail_from,
            tail_sum=theta.copy() if in_tail else np.zeros_like(theta),
            tail_count=1 if in_tail else 0,
        )

    @property
    def count(self) -> int:
        return self.index


def smd_step(state: SmdState, K, eta: float) -> SmdState:
    """theta_{i+1} = argmin <K, theta> + D(theta, theta_i) / eta over the space."""
    K = np.asarray(K, dtype=float)
    if K.shape != state.theta.shape or not np.all(np.isfinite(K)):
        raise InvalidArgumentError("subgradient must be a finite vector matching the parameter")
    if not eta > 0:
        raise InvalidArgumentError("learning rate must be positive")
    new = state.prox.mirror_step(state.theta, K, eta)
    index = state.index + 1
    tail_sum, tail_count = state.tail_sum, state.tail_count
    if state.tail_from is not None and index >= state.tail_from:
        tail_sum = tail_sum + new
        tail_count += 1
    return replace(
        state,
        theta=new,
        index=index,
        running_sum=state.running_sum + new,
        tail_sum=tail_sum,
        tail_count=tail_count,
    )


def averaged_iterate(state: SmdState, tail: bool = False) -> np.ndarray:
    """Arithmetic mean of every iterate visited (or of the tail segment)."""
    if tail:
        if state.tail_from is None or state.tail_count == 0:
            raise InvalidArgumentError("no tail iterates recorded")
        return state.tail_sum / state.tail_count
    return state.running_sum / state.index


def trace_csv(indices, thetas, etas) -> str:
    """Iterate trace as CSV ``i,theta_1,...,theta_p,eta_i``."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["i"] + [f"theta_{j + 1}" for j in range(thetas.shape[1])] + ["eta_i"])
    for i, th, e in zip(indices, thetas, etas):
        w.writerow([int(i)] + [f"{v:.17g}" for v in th] + [f"{float(e):.17g}"])
    return buf.getvalue()
