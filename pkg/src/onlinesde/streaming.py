"""Shared machinery for the online drift and diffusion estimators.

A stream consumes observations X_0, X_1, ... one at a time. On receiving X_i
it forms the approximate subgradient at the current iterate theta_i from
(X_{i-1}, Delta_i X) and takes one mirror step with rate eta_i. Only the
current iterate, the iterate sum and the previous observation are stored.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import DataError, InvalidArgumentError
from .mirror import EuclideanProx, Schedule, SmdState, smd_step, trace_csv
from .spaces import ParameterSpace


class SmdStream:
    """Base class; subclasses provide ``subgradient(theta, prev, dx, h)``."""

    def __init__(self, space: ParameterSpace, schedule: Schedule, x0, theta1=None,
                 prox=None, tail_from: int | None = None, trace: bool = False):
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        if x0.shape != (self.dim,) or not np.all(np.isfinite(x0)):
            raise DataError(f"initial observation must be a finite vector of length {self.dim}", 0)
        self.schedule = schedule
        self.smd = SmdState.start(space, theta1, prox, tail_from)
        self.previous = x0
        self.consumed = 0
        self.max_subgradient_norm = 0.0
        self._trace = [] if trace else None
        if trace:
            self._trace.append((1, self.smd.theta.copy(), float("nan")))

    dim: int = 1

    def subgradient(self, theta, prev, dx, h):
        raise NotImplementedError

    @property
    def h(self) -> float:
        return self.schedule.h

    @property
    def theta(self) -> np.ndarray:
        return self.smd.theta

    def update(self, next_observation) -> "SmdStream":
        x = np.atleast_1d(np.asarray(next_observation, dtype=float))
        if x.shape != (self.dim,) or not np.all(np.isfinite(x)):
            raise DataError(f"observation {self.consumed + 1} is not a finite {self.dim}-vector",
                            self.consumed + 1)
        i = self.smd.index
        if i > self.schedule.n:
            raise InvalidArgumentError(f"stream already consumed its {self.schedule.n} observations")
        K = self.subgradient(self.smd.theta, self.previous, x - self.previous, self.h)
        self.max_subgradient_norm = max(self.max_subgradient_norm, float(np.linalg.norm(K)))
        eta = float(self.schedule.rates(i))
        self.smd = smd_step(self.smd, K, eta)
        self.previous = x
        self.consumed += 1
        if self._trace is not None:
            self._trace.append((self.smd.index, self.smd.theta.copy(), eta))
        return self

    def consume(self, observations) -> "SmdStream":
        for x in np.asarray(observations, dtype=float).reshape(-1, self.dim):
            self.update(x)
        return self

    def estimate(self) -> np.ndarray:
        """Mean of theta_1..theta_n after n observations (theta_1 before any)."""
        if self.consumed == 0:
            return self.smd.theta.copy()
        return (self.smd.running_sum - self.smd.theta) / self.consumed

    def trace_csv(self) -> str:
        if self._trace is None:
            raise InvalidArgumentError("stream was created without trace=True")
        idx, th, eta = zip(*self._trace)
        return trace_csv(idx, np.array(th), eta)

    # ----------------------------------------------------------------- checkpoints

    def checkpoint(self, seed_position: float | None = None) -> bytes:
        """Flat record of doubles prefixed by its length (uint64, little endian).

        Layout: consumed, i, p, d, theta (p), sum (p), previous (d),
        seed_position, tail_from (-1 if unset), tail_count, tail_sum (p),
        max_subgradient_norm.
        """
        s = self.smd
        p = s.theta.size
        tail_sum = s.tail_sum if s.tail_sum is not None else np.zeros(p)
        values = np.concatenate([
            [self.consumed, s.index, p, self.dim],
            s.theta, s.running_sum, self.previous,
            [self.consumed if seed_position is None else seed_position,
             -1 if s.tail_from is None else s.tail_from, s.tail_count],
            tail_sum, [self.max_subgradient_norm],
        ]).astype("<f8")
        return struct.pack("<Q", values.size) + values.tobytes()

    def restore(self, data: bytes) -> "SmdStream":
        (count,) = struct.unpack_from("<Q", data, 0)
        values = np.frombuffer(data, dtype="<f8", count=count, offset=8).astype(float)
        consumed, index, p, d = (int(v) for v in values[:4])
        if d != self.dim or p != self.smd.theta.size:
            raise InvalidArgumentError("checkpoint dimensions do not match this stream")
        pos = 4
        theta = values[pos:pos + p]; pos += p
        total = values[pos:pos + p]; pos += p
        prev = values[pos:pos + d]; pos += d
        _seed_pos, tail_from, tail_count = values[pos:pos + 3]; pos += 3
        tail_sum = values[pos:pos + p]; pos += p
        self.max_subgradient_norm = float(values[pos])
        self.smd = SmdState(
            theta=theta.copy(), index=index, running_sum=total.copy(), space=self.smd.space,
            prox=self.smd.prox, tail_from=None if tail_from < 0 else int(tail_from),
            tail_sum=tail_sum.copy(), tail_count=int(tail_count),
        )
        self.previous = prev.copy()
        self.consumed = consumed
        return self

    @staticmethod
    def seed_position(data: bytes) -> float:
        (count,) = struct.unpack_from("<Q", data, 0)
        values = np.frombuffer(data, dtype="<f8", count=count, offset=8)
        p, d = int(values[2]), int(values[3])
        return float(values[4 + 2 * p + d])


def run_batch(subgradient, paths: np.ndarray, space: ParameterSpace, schedule: Schedule,
              theta1=None, prox=None) -> tuple[np.ndarray, np.ndarray]:
    """Run one stream per row of ``paths`` (shape ``(R, n + 1, d)``) in lock step.

    Performs exactly the per-step arithmetic of ``SmdStream.update`` on a
    batch axis. Returns ``(estimates, final_iterates)``, both ``(R, p)``, where
    the estimate is the mean of theta_1..theta_n.
    """
    paths = np.asarray(paths, dtype=float)
    if paths.ndim != 3:
        raise InvalidArgumentError("paths must have shape (R, n + 1, d)")
    R, n1, _ = paths.shape
    n = n1 - 1
    if n > schedule.n:
        raise InvalidArgumentError("paths are longer than the schedule horizon")
    prox = prox if prox is not None else EuclideanProx(space)
    start = SmdState.start(space, theta1, prox)
    theta = np.broadcast_to(start.theta, (R, start.theta.size)).copy()
    total = np.zeros_like(theta)
    etas = schedule.rates(np.arange(1, n + 1))
    h = schedule.h
    for i in range(n):
        total += theta
        prev = paths[:, i]
        K = subgradient(theta, prev, paths[:, i + 1] - prev, h)
        theta = prox.mirror_step(theta, K, etas[i])
    return total / max(n, 1) if n else theta.copy(), theta
