"""Euler-Maruyama simulation of discretely observed diffusions.

The observation step ``h`` is split into ``substeps`` internal steps; only the
state at every observation time is kept. Paths of many replications are
advanced together as a batch of shape ``(R, d)``, each replication drawing its
Gaussian increments from its own stream.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import rng as rngmod
from .errors import ExplosionError, InvalidArgumentError
from .models import SdeModel

EXPLOSION_THRESHOLD = 1e12
DEFAULT_SUBSTEPS = 20
_BLOCK = 512


@dataclass(frozen=True)
class SimConfig:
    x0: np.ndarray
    h: float
    n_observations: int
    substeps: int = DEFAULT_SUBSTEPS
    seed: int = 0

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        object.__setattr__(self, "x0", x0)
        if not (np.isfinite(self.h) and self.h > 0):
            raise InvalidArgumentError("observation step h must be positive")
        if self.h > 1:
            warnings.warn(f"observation step h={self.h} exceeds 1", stacklevel=2)
        if int(self.n_observations) < 1:
            raise InvalidArgumentError("n_observations must be >= 1")
        if int(self.substeps) < 1:
            raise InvalidArgumentError("substeps must be >= 1")
        rngmod._check_seed(self.seed)


@dataclass(frozen=True, eq=False)
class ObservationSeries:
    """States X_0, X_h, ..., X_{nh} of one path."""

    states: np.ndarray
    h: float
    seed: int = 0

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2:
            raise InvalidArgumentError("states must have shape (n + 1, d)")
        if not np.all(np.isfinite(s)):
            bad = int(np.argmax(~np.all(np.isfinite(s), axis=1)))
            raise ExplosionError(f"non-finite state at observation {bad}", bad)
        object.__setattr__(self, "states", s)

    @property
    def n(self) -> int:
        return self.states.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.h * np.arange(self.n + 1)

    def __len__(self):
        return self.states.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, ObservationSeries)
            and self.h == other.h
            and self.seed == other.seed
            and np.array_equal(self.states, other.states)
        )

    def to_csv(self, path=None) -> str:
        """Write ``t,x1,...,xd`` rows with 17 significant digits; returns the text."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t"] + [f"x{j + 1}" for j in range(self.dim)])
        for t, row in zip(self.times, self.states):
            writer.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source, seed: int = 0) -> "ObservationSeries":
        text = Path(source).read_text() if not isinstance(source, str) or "\n" not in source else source
        rows = list(csv.reader(io.StringIO(text)))
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
        if data.shape[0] < 2:
            raise InvalidArgumentError("need at least two observations to recover the step")
        h = float(data[1, 0] - data[0, 0])
        return cls(data[:, 1:], h, seed)


def increments(obs) -> np.ndarray:
    """Delta_i X = X_i - X_{i-1} for i = 1..n, shape ``(n, d)``."""
    states = obs.states if isinstance(obs, ObservationSeries) else np.asarray(obs, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    if states.shape[0] < 2:
        raise InvalidArgumentError("need at least two observations for increments")
    return np.diff(states, axis=0)


# --------------------------------------------------------------------------
# batch integrator

NoiseSource = Callable[[int], np.ndarray]


def per_replication_noise(generators: Sequence[np.random.Generator], substeps: int, dim: int) -> NoiseSource:
    """Noise drawn replication by replication; returns blocks ``(B, substeps, R, d)``."""

    def draw(block: int) -> np.ndarray:
        z = np.stack([g.standard_normal((block, substeps, dim)) for g in generators], axis=2)
        return z

    return draw


def shared_noise(generator: np.random.Generator, reps: int, substeps: int, dim: int,
                 antithetic: bool = False) -> NoiseSource:
    """Noise for a whole batch from one stream; optionally in antithetic pairs."""
    if antithetic and reps % 2:
        raise InvalidArgumentError("antithetic sampling needs an even number of replications")

    def draw(block: int) -> np.ndarray:
        if antithetic:
            half = generator.standard_normal((block, substeps, reps // 2, dim))
            return np.concatenate([half, -half], axis=2)
        return generator.standard_normal((block, substeps, reps, dim))

    return draw


def euler_maruyama(model: SdeModel, x0: np.ndarray, h: float, n: int, substeps: int,
                   noise: NoiseSource, record: bool = True) -> np.ndarray:
    """Advance a batch ``x0`` of shape ``(R, d)`` through ``n`` observation steps.

    Returns ``(R, n + 1, d)`` observed states when ``record`` is set, otherwise
    only the terminal batch ``(R, d)``.
    """
    x = np.array(x0, dtype=float, copy=True)
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise InvalidArgumentError(f"initial batch must have shape (R, {model.dim})")
    dt = h / substeps
    sqdt = np.sqrt(dt)
    scalar = model.dim == 1
    out = np.empty((x.shape[0], n + 1, x.shape[1])) if record else None
    if record:
        out[:, 0] = x
    i = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while i < n:
            block = min(_BLOCK, n - i)
            z = noise(block)
            for b in range(block):
                for s in range(substeps):
                    a = model.diffusion(x)
                    if scalar:
                        x = x + model.drift(x) * dt + sqdt * a[:, :, 0] * z[b, s]
                    else:
                        x = x + model.drift(x) * dt + sqdt * (a @ z[b, s][:, :, None])[:, :, 0]
                i += 1
                if not np.all(np.abs(x) <= EXPLOSION_THRESHOLD):
                    raise ExplosionError(
                        f"state left the finite range at observation {i}", i
                    )
                if record:
                    out[:, i] = x
    return out if record else x


def simulate_path(model: SdeModel, config: SimConfig, key: Sequence[int] = ()) -> ObservationSeries:
    """One path from ``config``; deterministic in ``(model, config, key)``."""
    if config.x0.size != model.dim:
        raise InvalidArgumentError(f"x0 has dimension {config.x0.size}, model has {model.dim}")
    gen = rngmod.stream(config.seed, *key)
    noise = per_replication_noise([gen], config.substeps, model.dim)
    states = euler_maruyama(model, config.x0[None, :], config.h, int(config.n_observations),
                            int(config.substeps), noise)
    return ObservationSeries(states[0], config.h, config.seed)


def simulate_replications(model: SdeModel, config: SimConfig, reps: int,
                          prefix: Sequence[int] = ()) -> np.ndarray:
    """``reps`` independent paths, replication r using stream ``prefix + (r,)``.

    Row r equals ``simulate_path(model, config, key=prefix + (r,)).states``.
    """
    gens = rngmod.replication_streams(config.seed, reps, *prefix)
    noise = per_replication_noise(gens, config.substeps, model.dim)
    x0 = np.broadcast_to(config.x0, (reps, model.dim))
    return euler_maruyama(model, x0, config.h, int(config.n_observations), int(config.substeps), noise)


# --------------------------------------------------------------------------
# one-step moment diagnostics


def loglog_slope(x, y) -> tuple[float, float]:
    """Least-squares slope and intercept of log(y) against log(x)."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    if np.unique(lx).size < 2:
        return float("nan"), float("nan")
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(intercept)


@dataclass
class ScalingReport:
    h: np.ndarray
    second_moment: np.ndarray
    second_moment_se: np.ndarray
    bias_norm: np.ndarray
    slope_second_moment: float
    slope_bias: float


def one_step_scaling_diagnostic(model: SdeModel, x, h_grid, reps: int, seed: int,
                                substeps: int = DEFAULT_SUBSTEPS) -> ScalingReport:
    """Monte-Carlo E||X_h - x||^2 and ||E[X_h - x - h b(x)]|| over a grid of h.

    Samples come in antithetic pairs, which leaves both expectations unchanged
    and removes the Gaussian noise from the bias estimate when the drift is
    linear and the diffusion constant.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    hs = np.asarray(h_grid, dtype=float)
    if reps < 100:
        raise InvalidArgumentError("reps must be >= 100")
    if np.any(hs <= 0) or np.any(hs > 1):
        raise InvalidArgumentError("h values must lie in (0, 1]")
    reps += reps % 2
    bx = np.asarray(model.drift(x), dtype=float)
    m2, m2_se, bias = [], [], []
    for k, h in enumerate(hs):
        noise = shared_noise(rngmod.stream(seed, k), reps, substeps, model.dim, antithetic=True)
        xs = np.broadcast_to(x, (reps, model.dim))
        xh = euler_maruyama(model, xs, float(h), 1, substeps, noise, record=False)
        sq = np.sum((xh - x) ** 2, axis=1)
        m2.append(sq.mean())
        # antithetic pairs are dependent; the SE uses pair means
        pairs = 0.5 * (sq[: reps // 2] + sq[reps // 2:])
        m2_se.append(pairs.std(ddof=1) / np.sqrt(pairs.size))
        bias.append(np.linalg.norm(np.mean(xh - x - h * bx, axis=0)))
    m2, bias = np.array(m2), np.array(bias)
    s_m2 = loglog_slope(hs, m2)[0]
    s_b = loglog_slope(hs, bias)[0] if np.all(bias > 0) else float("nan")
    return ScalingReport(hs, m2, np.array(m2_se), bias, s_m2, s_b)
