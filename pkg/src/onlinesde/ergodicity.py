"""Computable ergodicity diagnostics.

* Lyapunov constants E1, E2 for V(x) = exp(nu sqrt(1 + |x|^2)) and the moment
  bound they imply.
* Binned total-variation and Hellinger distances between empirical laws.
* Empirical decay of TV between two starting points, and a mixing-time estimate
  against a sample of the invariant law.

Binned TV is a lower bound on the TV of the underlying laws; Monte-Carlo noise
pushes the other way and is reported as a noise floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidArgumentError
from .models import FamilyParams, SdeModel, check_diffusion_conditions, check_drift_conditions
from .rng import replication_streams
from .risk import InvariantSample, sample_invariant
from .simulate import euler_maruyama, per_replication_noise

# stream prefixes for the diagnostics (the experiment harness uses 0 and 1)
_MOMENT_STREAM = 2
_DECAY_STREAM = 3
_MIXING_STREAM = 4


# --------------------------------------------------------------------------
# Lyapunov constants


def lyapunov_expression(r, gamma, nu, kappa0, varkappa1, d):
    """nu(-r^{1+gamma}/varkappa1 + varkappa1)/sqrt(1+r^2) + (nu/2)(nu kappa0 + kappa0(1+d)/sqrt(1+r^2))."""
    r = np.asarray(r, dtype=float)
    s = np.sqrt(1.0 + r * r)
    return nu * (-(r ** (1.0 + gamma)) / varkappa1 + varkappa1) / s + 0.5 * nu * (
        nu * kappa0 + kappa0 * (1.0 + d) / s
    )


@dataclass(frozen=True)
class LyapunovConstants:
    E1: float
    E2: float
    nu: float
    R1: float
    gamma: float
    kappa0: float
    varkappa1: float
    d: int
    target: float

    def moment_bound(self, x0, m: int) -> float:
        """(m!/nu^m)(exp(nu sqrt(1+|x0|^2)) + E2/E1)."""
        r = float(np.linalg.norm(np.atleast_1d(x0)))
        return math.factorial(m) / self.nu**m * (math.exp(self.nu * math.sqrt(1 + r * r)) + self.E2 / self.E1)


def lyapunov_constants(gamma: float, nu: float, kappa0: float, varkappa1: float, d: int,
                       rel_tol: float = 1e-10) -> LyapunovConstants:
    """E1, E2 and the threshold radius R1.

    The drift-side expression is strictly decreasing in r. R1 is where it
    reaches the target: -nu^2 kappa0 / 4 when gamma > 0, half its (negative)
    large-radius limit nu^2 kappa0 / 2 - nu / varkappa1 when gamma = 0. It is
    located by doubling and then bisection, keeping the endpoint on the
    feasible side so that E1 = -expression(R1) >= -target > 0.
    """
    if not gamma >= 0:
        raise InvalidArgumentError("gamma must be >= 0")
    if not nu > 0 or not kappa0 > 0 or not varkappa1 > 0:
        raise InvalidArgumentError("nu, kappa0 and varkappa1 must be positive")
    if int(d) != d or d < 1:
        raise InvalidArgumentError("d must be a positive integer")
    if gamma == 0:
        limit_nu = 2.0 / (varkappa1 * kappa0)
        if not nu < limit_nu:
            raise DomainError(
                f"gamma = 0 needs nu in (0, 2/(varkappa1*kappa0)) = (0, {limit_nu:.6g}); got nu = {nu}"
            )
        target = 0.5 * (0.5 * nu * nu * kappa0 - nu / varkappa1)
    else:
        target = -0.25 * nu * nu * kappa0

    def g(r):
        return float(lyapunov_expression(r, gamma, nu, kappa0, varkappa1, d))

    lo, hi = 0.0, 1.0
    while g(hi) > target:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise DomainError("no finite radius reaches the Lyapunov target")
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if g(mid) <= target:
            hi = mid
        else:
            lo = mid
    R1 = hi
    E1 = -g(R1)
    E2 = math.exp(nu * math.sqrt(1 + R1 * R1)) * (nu * varkappa1 + 0.5 * nu * kappa0 * (nu + 1 + d))
    return LyapunovConstants(E1, E2, float(nu), R1, float(gamma), float(kappa0), float(varkappa1), int(d), target)


def default_nu(family: FamilyParams) -> float:
    """nu = 1, or half the admissible upper end when gamma = 0."""
    if family.gamma == 0:
        return min(1.0, 1.0 / (family.varkappa1 * family.kappa0))
    return 1.0


# --------------------------------------------------------------------------
# moment bounds


def default_probe_grid(dim: int, radius: float = 5.0, points: int = 41) -> np.ndarray:
    """All pairs of a symmetric grid (d = 1) or of random points in a ball (d > 1)."""
    if dim == 1:
        pts = np.linspace(-radius, radius, points)[:, None]
    else:
        rng = np.random.default_rng(0)
        pts = rng.uniform(-radius, radius, size=(points, dim))
    i, j = np.triu_indices(len(pts), k=1)
    return np.stack([pts[i], pts[j]], axis=1)


@dataclass
class MomentReport:
    m: int
    empirical_sup: float
    stderr: float
    time_of_sup: float
    bound: float
    passed: bool
    constants: LyapunovConstants
    reps: int


def moment_bound_check(model: SdeModel, family: FamilyParams, x0, m: int, horizon: float,
                       reps: int, seed: int, nu: float | None = None, h: float = 0.05,
                       substeps: int = 10, check_conditions: bool = True,
                       probe_grid=None) -> MomentReport:
    """Compare max_t of the Monte-Carlo mean of |X_t|^m with the Lyapunov moment bound.

    The time grid is 0, h, 2h, ..., horizon. The check passes when the
    empirical maximum plus three standard errors does not exceed the bound.
    """
    if int(m) != m or m < 0:
        raise InvalidArgumentError("m must be a nonnegative integer")
    if not horizon > 0 or reps < 2:
        raise InvalidArgumentError("horizon must be positive and reps >= 2")
    if check_conditions:
        grid = default_probe_grid(model.dim) if probe_grid is None else probe_grid
        failures = (check_drift_conditions(model, family, grid).failures
                    + check_diffusion_conditions(model, family, grid).failures)
        if failures:
            names = ", ".join(f.name for f in failures)
            raise InvalidArgumentError(f"model is outside the coefficient class: {names}")
    nu = default_nu(family) if nu is None else nu
    consts = lyapunov_constants(family.gamma, nu, family.kappa0, family.varkappa1, model.dim)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = int(math.ceil(horizon / h))
    gens = replication_streams(seed, reps, _MOMENT_STREAM)
    paths = euler_maruyama(model, np.broadcast_to(x0, (reps, model.dim)), h, n, substeps,
                           per_replication_noise(gens, substeps, model.dim))
    moments = np.linalg.norm(paths, axis=-1) ** m
    means = moments.mean(axis=0)
    k = int(np.argmax(means))
    se = float(moments[:, k].std(ddof=1) / np.sqrt(reps))
    bound = consts.moment_bound(x0, int(m))
    emp = float(means[k])
    return MomentReport(int(m), emp, se, k * h, bound, emp + 3 * se <= bound, consts, reps)


# --------------------------------------------------------------------------
# histograms and distances


@dataclass(frozen=True, eq=False)
class Histogram:
    """Normalised masses on a uniform grid; ``edges`` holds one array per axis."""

    edges: tuple
    masses: np.ndarray

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float)
        shape = tuple(len(e) - 1 for e in self.edges)
        if masses.shape != shape:
            raise InvalidArgumentError(f"masses have shape {masses.shape}, edges imply {shape}")
        if np.any(masses < 0) or abs(masses.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError("masses must be nonnegative and sum to 1")
        object.__setattr__(self, "masses", masses)

    @classmethod
    def from_masses(cls, masses) -> "Histogram":
        """Histogram on unit bins 0, 1, ..., k (one axis)."""
        masses = np.asarray(masses, dtype=float)
        return cls((np.arange(masses.size + 1, dtype=float),), masses)

    @classmethod
    def from_samples(cls, points, edges) -> "Histogram":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        counts, _ = np.histogramdd(pts, bins=list(edges))
        return cls(tuple(edges), counts / counts.sum())

    def same_grid(self, other: "Histogram") -> bool:
        return len(self.edges) == len(other.edges) and all(
            np.array_equal(a, b) for a, b in zip(self.edges, other.edges)
        )


def default_bins(dim: int) -> int:
    if dim == 1:
        return 64
    if dim == 2:
        return 32
    raise InvalidArgumentError("binned distances are only supported in dimensions 1 and 2")


def common_edges(samples, bins: int | None = None, pad: float = 0.1) -> tuple:
    """Uniform edges over the pooled bounding box, widened by ``pad`` of its width per side."""
    pooled = np.concatenate([np.asarray(s, dtype=float).reshape(len(s), -1) for s in samples])
    dim = pooled.shape[1]
    bins = default_bins(dim) if bins is None else int(bins)
    if dim > 2:
        default_bins(dim)
    lo, hi = pooled.min(axis=0), pooled.max(axis=0)
    width = hi - lo
    width = np.where(width > 0, width, np.maximum(1.0, np.abs(lo)))
    lo, hi = lo - pad * width, hi + pad * width
    return tuple(np.linspace(lo[k], hi[k], bins + 1) for k in range(dim))


def histograms(samples, bins: int | None = None, pad: float = 0.1) -> list[Histogram]:
    """Histograms of several samples on one shared grid."""
    edges = common_edges(samples, bins, pad)
    return [Histogram.from_samples(s, edges) for s in samples]


def _check_grid(p: Histogram, q: Histogram) -> None:
    if not p.same_grid(q):
        raise InvalidArgumentError("histograms are on different bin grids")


def tv_distance(p: Histogram, q: Histogram) -> float:
    """Sum of absolute mass differences, in [0, 2]."""
    _check_grid(p, q)
    return float(np.sum(np.abs(p.masses - q.masses)))


def hellinger_distance(p: Histogram, q: Histogram) -> float:
    """sqrt(sum (sqrt p - sqrt q)^2), in [0, sqrt 2]."""
    _check_grid(p, q)
    return float(np.sqrt(np.sum((np.sqrt(p.masses) - np.sqrt(q.masses)) ** 2)))


# --------------------------------------------------------------------------
# decay of TV between two starting points


@dataclass
class DecayReport:
    times: np.ndarray
    tv: np.ndarray
    hellinger: np.ndarray
    noise_floor: np.ndarray
    reps: int
    rate: float
    intercept: float
    decreasing: bool
    fitted_points: int
    note: str = ("binned TV is a lower bound on the TV of the laws; the fit checks the "
                 "exponential shape, not the constants")

    def to_csv(self) -> str:
        lines = ["t,tv,hellinger,reps"]
        for t, a, b in zip(self.times, self.tv, self.hellinger):
            lines.append(f"{t:.17g},{a:.17g},{b:.17g},{self.reps}")
        lines.append(f"# fitted_rate={self.rate:.17g} intercept={self.intercept:.17g} "
                     f"decreasing={str(self.decreasing).lower()} ({self.note})")
        return "\n".join(lines) + "\n"


def _paths_at(model, x, times, reps, seed, key, dt, substeps):
    steps = np.rint(np.asarray(times) / dt).astype(int)
    if np.any(np.abs(steps * dt - np.asarray(times)) > 1e-9 * np.maximum(1, times)):
        raise InvalidArgumentError(f"times must be multiples of dt = {dt}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    gens = replication_streams(seed, reps, *key)
    paths = euler_maruyama(model, np.broadcast_to(x, (reps, model.dim)), dt, int(steps.max()),
                           substeps, per_replication_noise(gens, substeps, model.dim))
    return paths[:, steps]


def tv_decay_estimate(model: SdeModel, x, y, times, reps: int, bins: int | None = None,
                      seed: int = 0, dt: float = 0.01, substeps: int = 2) -> DecayReport:
    """Binned TV between the laws of X_t from ``x`` and from ``y`` on a time grid.

    The noise floor at each time is the TV between the two halves of the
    ``x`` sample divided by sqrt 2 (the floor scales like 1/sqrt(sample size)).
    log TV is fitted against t on the points above three times the floor.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) <= 0) or np.any(times < 0):
        raise InvalidArgumentError("times must be nonnegative and strictly increasing")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if np.array_equal(x, y):
        raise InvalidArgumentError("starting points must differ")
    if reps < 4:
        raise InvalidArgumentError("reps must be >= 4")
    default_bins(model.dim)
    px = _paths_at(model, x, times, reps, seed, (_DECAY_STREAM, 0), dt, substeps)
    py = _paths_at(model, y, times, reps, seed, (_DECAY_STREAM, 1), dt, substeps)
    tv, hel, floor = [], [], []
    half = reps // 2
    for k in range(len(times)):
        p, q = histograms([px[:, k], py[:, k]], bins)
        tv.append(tv_distance(p, q))
        hel.append(hellinger_distance(p, q))
        a, b = histograms([px[:half, k], px[half:2 * half, k]], bins)
        floor.append(tv_distance(a, b) / np.sqrt(2.0))
    tv, hel, floor = np.array(tv), np.array(hel), np.array(floor)
    keep = tv > 3 * floor
    if keep.sum() < 2:
        keep = tv > 0
    if keep.sum() >= 2:
        rate, intercept = np.polyfit(times[keep], np.log(tv[keep]), 1)
    else:
        rate, intercept = float("nan"), float("nan")
    decreasing = bool(rate < 0 and tv[0] - tv[-1] > 3 * floor.max())
    return DecayReport(times, tv, hel, floor, reps, float(rate), float(intercept), decreasing, int(keep.sum()))


# --------------------------------------------------------------------------
# mixing time


@dataclass
class MixingReport:
    tau: int | None
    reached: bool
    cap: int
    epsilon: float
    hellinger_sq: np.ndarray = field(repr=False)

    def summary(self) -> str:
        if self.reached:
            return f"tau={self.tau}"
        return f"tau not reached within cap={self.cap}"


def mixing_time_estimate(model: SdeModel, x, epsilon: float, h: float, reps: int,
                         bins: int | None = None, seed: int = 0,
                         invariant: InvariantSample | None = None, cap: int = 1000,
                         substeps: int = 10) -> MixingReport:
    """Smallest tau <= cap with binned d_Hel^2(law of X_{tau h} from x, invariant sample) <= epsilon^2.

    Without an ``invariant`` sample one is drawn with ``sample_invariant``
    (burn-in 20, stride 10, 10^4 points or ``reps``, whichever is larger).
    Exceeding the cap is reported, not raised.
    """
    if not 0 < epsilon < math.sqrt(2):
        raise InvalidArgumentError("epsilon must lie in (0, sqrt 2)")
    if not h > 0 or reps < 2 or cap < 1:
        raise InvalidArgumentError("h must be positive, reps >= 2 and cap >= 1")
    default_bins(model.dim)
    if invariant is None:
        invariant = sample_invariant(model, 20.0, max(10_000, reps), 10, seed, chains=10)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    gens = replication_streams(seed, reps, _MIXING_STREAM)
    noise = per_replication_noise(gens, substeps, model.dim)
    state = np.broadcast_to(x, (reps, model.dim)).copy()
    hel2 = []
    for tau in range(1, cap + 1):
        state = euler_maruyama(model, state, h, 1, substeps, noise, record=False)
        p, q = histograms([state, invariant.points], bins)
        d2 = hellinger_distance(p, q) ** 2
        hel2.append(d2)
        if d2 <= epsilon**2:
            return MixingReport(tau, True, cap, epsilon, np.array(hel2))
    return MixingReport(None, False, cap, epsilon, np.array(hel2))


__all__ = [
    "DecayReport",
    "Histogram",
    "LyapunovConstants",
    "MixingReport",
    "MomentReport",
    "common_edges",
    "hellinger_distance",
    "histograms",
    "lyapunov_constants",
    "lyapunov_expression",
    "mixing_time_estimate",
    "moment_bound_check",
    "tv_decay_estimate",
    "tv_distance",
]
