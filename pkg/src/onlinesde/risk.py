"""Excess risk against the invariant law and Monte-Carlo risk curves.

The population loss f(theta) = E_Pi[F(theta; xi)] is replaced by its average
over a large sample from the invariant law of the true diffusion. The target
theta_0 (the quasi-optimal parameter) minimises that average over the
parameter space, and the excess risk of an estimate is f(theta_hat) - f(theta_0).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import oracle
from .catalog import CatalogEntry
from .diffusion import DiffusionLoss, run_diffusion_batch
from .drift import DriftLoss, run_drift_batch
from .errors import InvalidArgumentError, UnidentifiableError
from .mirror import Schedule
from .models import ParametricDiffusionModel, ParametricDriftModel, SdeModel, is_affine
from .rng import replication_streams
from .simulate import (
    DEFAULT_SUBSTEPS,
    SimConfig,
    euler_maruyama,
    loglog_slope,
    per_replication_noise,
    simulate_replications,
)
from .spaces import ParameterSpace

MIN_INVARIANT_SIZE = 10_000

# stream prefixes keep invariant sampling and replications apart
_INVARIANT_STREAM = 0
_REPLICATION_STREAM = 1
_RESIDUAL_STREAM = 5


@dataclass(frozen=True, eq=False)
class InvariantSample:
    points: np.ndarray
    model_name: str
    burn_in: float
    stride: int
    seed: int
    dt: float
    chains: int

    @property
    def size(self) -> int:
        return self.points.shape[0]


def sample_invariant(model: SdeModel, burn_in: float, count: int, stride: int, seed: int,
                     dt: float = 0.01, chains: int = 1, x0=None) -> InvariantSample:
    """States of ``chains`` long paths after ``burn_in``, keeping every ``stride``-th fine step.

    Each chain uses its own stream; the pooled sample lists chain 0 first.
    With ``chains=1`` this is literally one long path.
    """
    if not burn_in > 0:
        raise InvalidArgumentError("burn_in must be positive")
    if int(stride) < 1 or int(count) < 1 or int(chains) < 1:
        raise InvalidArgumentError("stride, count and chains must be >= 1")
    stride, count, chains = int(stride), int(count), int(chains)
    h = stride * dt
    n_burn = int(math.ceil(burn_in / h))
    per_chain = -(-count // chains)
    start = np.zeros(model.dim) if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    gens = replication_streams(seed, chains, _INVARIANT_STREAM)
    noise = per_replication_noise(gens, stride, model.dim)
    states = euler_maruyama(model, np.broadcast_to(start, (chains, model.dim)), h,
                            n_burn + per_chain, stride, noise)
    pts = states[:, n_burn + 1:].reshape(-1, model.dim)[:count]
    return InvariantSample(pts, model.name, float(burn_in), stride, int(seed), float(dt), chains)


# --------------------------------------------------------------------------
# population loss on the invariant sample


def _true_coefficient(loss, truth):
    """Map a SdeModel to the callable the oracle functions expect."""
    if isinstance(truth, SdeModel):
        return truth.drift if isinstance(loss, DriftLoss) else truth.diffusion_matrix
    return truth


def empirical_loss(loss, truth, theta, sample: InvariantSample) -> float:
    coef = _true_coefficient(loss, truth)
    theta = np.asarray(theta, dtype=float)
    if isinstance(loss, DriftLoss):
        return float(np.mean(oracle.sampled_loss_F(loss, coef, theta, sample.points)))
    return float(np.mean(oracle.sampled_loss_F_diff(loss, coef, theta, sample.points)))


def _affine(model) -> bool:
    return model.linear and is_affine(model, np.random.default_rng(0))


def quadratic_form(loss, truth, points: np.ndarray):
    """(Hessian, gradient at 0) of the theta-quadratic part of the mean loss.

    Valid for models affine in theta; J is not included.
    """
    coef = _true_coefficient(loss, truth)
    model = loss.model
    zero = np.zeros(model.n_params)
    M = loss.M(points)
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    if isinstance(loss, DriftLoss):
        Phi = model.theta_jacobian(points, zero)
        c = model.value(points, zero) - coef(points)
        MPhi = M @ Phi
        H = np.einsum("ndp,ndq->pq", Phi, MPhi) / len(points)
        g = np.einsum("ndp,nd->p", MPhi, c) / len(points)
        return H, g
    B = model.theta_jacobian(points, zero)
    C = model.value(points, zero) - coef(points)
    MBM = M[:, None] @ B @ M[:, None]
    H = np.einsum("npij,nqij->pq", B, MBM) / len(points)
    g = np.einsum("npij,nij->p", MBM, C) / len(points)
    return H, g


@dataclass
class QuasiOptimum:
    theta0: np.ndarray
    chi: float
    identifiable: bool
    converged: bool = True
    iterations: int = 0


def _projected_gradient(grad, value, theta, space: ParameterSpace, step: float,
                        tol: float = 1e-8, max_iter: int = 100_000):
    """Projected gradient with backtracking; stops when the gradient mapping is below ``tol``."""
    for it in range(max_iter):
        g = grad(theta)
        t = step
        f0 = value(theta)
        while True:
            cand = space.project(theta - t * g)
            d = cand - theta
            if value(cand) <= f0 + g @ d + 0.5 / t * (d @ d) + 1e-15 or t < 1e-14:
                break
            t *= 0.5
        mapping = np.linalg.norm(d) / t
        theta = cand
        if mapping < tol:
            return theta, True, it + 1
    return theta, False, max_iter


def quasi_optimal(loss, truth, sample: InvariantSample, space: ParameterSpace,
                  min_size: int = MIN_INVARIANT_SIZE) -> QuasiOptimum:
    """Minimiser over ``space`` of the sample-average loss, and the curvature chi.

    Affine models with no regulariser are solved through the normal equations,
    projected and then polished by projected gradient; anything else is solved
    by projected gradient from the centre of the space.
    """
    if sample.size < min_size:
        raise InvalidArgumentError(f"invariant sample has {sample.size} points, need {min_size}")
    pts = sample.points
    coef = _true_coefficient(loss, truth)

    def value(th):
        return empirical_loss(loss, coef, th, sample)

    if _affine(loss.model):
        H, g = quadratic_form(loss, coef, pts)
        eig = np.linalg.eigvalsh(H)
        chi = float(max(eig[0], 0.0))
        scale = max(float(eig[-1]), 1e-300)
        if eig[0] <= 1e-12 * max(scale, 1.0):
            return QuasiOptimum(space.center.copy(), 0.0, False)
        if loss.weights.regularizer is None:
            start = space.project(np.linalg.solve(H, -g))

            def grad(th):
                return H @ th + g
        else:
            start = space.center.copy()

            def grad(th):
                return H @ th + g + loss.weights.J_subgradient(th)
        theta, ok, it = _projected_gradient(grad, value, start, space, 1.0 / scale)
        return QuasiOptimum(theta, chi, True, ok, it)

    def grad(th):
        return _numerical_gradient(value, th)

    theta, ok, it = _projected_gradient(grad, value, space.center.copy(), space, 1.0)
    hess = _numerical_hessian(value, theta)
    chi = float(max(np.linalg.eigvalsh(hess)[0], 0.0))
    return QuasiOptimum(theta, chi, chi > 0, ok, it)


def _numerical_gradient(f, x, step: float = 1e-6):
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        g[j] = (f(x + e) - f(x - e)) / (2 * step)
    return g


def _numerical_hessian(f, x, step: float = 1e-4):
    p = x.size
    H = np.empty((p, p))
    for j in range(p):
        e = np.zeros_like(x)
        e[j] = step
        H[j] = (_numerical_gradient(f, x + e) - _numerical_gradient(f, x - e)) / (2 * step)
    return 0.5 * (H + H.T)


def excess_risk(theta_hat, theta0, loss, truth, sample: InvariantSample) -> np.ndarray | float:
    """f(theta_hat) - f(theta0) on the invariant sample; rows of a batch give one value each."""
    coef = _true_coefficient(loss, truth)
    F = oracle.sampled_loss_F if isinstance(loss, DriftLoss) else oracle.sampled_loss_F_diff
    base = F(loss, coef, np.asarray(theta0, dtype=float), sample.points)
    th = np.asarray(theta_hat, dtype=float)
    if th.ndim == 1:
        return float(np.mean(F(loss, coef, th, sample.points) - base))
    return np.array([np.mean(F(loss, coef, row, sample.points) - base) for row in th])


# --------------------------------------------------------------------------
# batch least squares


def batch_lse(model: ParametricDriftModel, observations, h: float | None = None,
              space: ParameterSpace | None = None) -> np.ndarray:
    """Minimiser of sum_i ||Delta_i X - h b_m(X_{i-1}, theta)||^2, projected onto ``space``.

    ``observations`` may be an ``ObservationSeries``, states ``(n + 1, d)`` or a
    batch ``(R, n + 1, d)`` (returning ``(R, p)``).
    """
    if hasattr(observations, "states"):
        states, h = observations.states, observations.h
    else:
        states = np.asarray(observations, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        if h is None:
            raise InvalidArgumentError("h is required when passing raw states")
    if not (model.linear and is_affine(model, np.random.default_rng(0))):
        raise InvalidArgumentError("batch LSE needs a model affine in theta")
    p = model.n_params
    n, d = states.shape[-2] - 1, states.shape[-1]
    if n * d < p or n < 1:
        raise UnidentifiableError(f"{n} observations cannot identify {p} parameters")
    prev = states[..., :-1, :]
    dx = np.diff(states, axis=-2)
    zero = np.zeros(p)
    Phi = model.theta_jacobian(prev, zero)
    target = dx / h - model.value(prev, zero)
    G = np.einsum("...ndp,...ndq->...pq", Phi, Phi)
    rhs = np.einsum("...ndp,...nd->...p", Phi, target)
    ranks = np.linalg.matrix_rank(G)
    if np.any(ranks < p):
        raise UnidentifiableError("singular least-squares design")
    theta = np.linalg.solve(G, rhs[..., None])[..., 0]
    return space.project(theta) if space is not None else theta


# --------------------------------------------------------------------------
# Monte-Carlo risk curves


@dataclass
class ExperimentConfig:
    """One risk-curve experiment.

    ``h`` is ``h_c * n ** -h_delta`` unless ``h_fixed`` is given.
    """

    entry: CatalogEntry
    n_grid: tuple = (2**10, 2**12, 2**14, 2**16)
    replications: int = 100
    seed: int = 0
    schedule: str | None = None
    eta: float = 1.0
    h_c: float = 1.0
    h_delta: float = 0.3
    h_fixed: float | None = None
    space: ParameterSpace | None = None
    theta1: np.ndarray | None = None
    x0: np.ndarray | None = None
    substeps: int = DEFAULT_SUBSTEPS
    invariant_count: int = 100_000
    invariant_burn_in: float = 20.0
    invariant_stride: int = 10
    invariant_dt: float = 0.01
    invariant_chains: int = 100
    theta0: np.ndarray | None = None

    def step(self, n: int) -> float:
        return float(self.h_fixed) if self.h_fixed is not None else self.h_c * n ** (-self.h_delta)

    @property
    def kind(self) -> str:
        return self.entry.kind

    @property
    def schedule_kind(self) -> str:
        return self.schedule or ("drift-sqrt" if self.kind == "drift" else "diffusion-sqrt")

    def loss(self):
        if self.kind == "drift":
            return DriftLoss(self.entry.drift_model)
        return DiffusionLoss(self.entry.diffusion_model)


@dataclass
class RiskRow:
    n: int
    h: float
    mean_excess_risk: float
    stderr: float
    reps: int
    mean_theta: np.ndarray = field(default=None)
    theta_stderr: np.ndarray = field(default=None)


@dataclass
class RiskCurve:
    rows: list[RiskRow]
    slope: float
    intercept: float
    residual: float
    theta0: np.ndarray
    estimates: dict = field(default_factory=dict)

    def __post_init__(self):
        ns = [r.n for r in self.rows]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise InvalidArgumentError("risk-curve rows must have strictly increasing n")

    def to_csv(self) -> str:
        lines = ["n,h,mean_excess_risk,stderr,reps"]
        for r in self.rows:
            lines.append(f"{r.n},{r.h:.17g},{r.mean_excess_risk:.17g},{r.stderr:.17g},{r.reps}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "residual": self.residual,
            "theta0": [float(v) for v in self.theta0],
            "mean_theta": {str(r.n): [float(v) for v in r.mean_theta] for r in self.rows},
            "theta_stderr": {str(r.n): [float(v) for v in r.theta_stderr] for r in self.rows},
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2) + "\n"

    def to_svg(self, path) -> None:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        n = np.array([r.n for r in self.rows], dtype=float)
        risk = np.array([r.mean_excess_risk for r in self.rows])
        se = np.array([r.stderr for r in self.rows])
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.errorbar(n, risk, yerr=se, marker="o", label="mean excess risk")
        ax.plot(n, np.exp(self.intercept) * n**self.slope, "--", label=f"slope {self.slope:.3f}")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("n")
        ax.set_ylabel("excess risk")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def fit_rate(n, risk) -> tuple[float, float, float]:
    """Unweighted least-squares fit of log(risk) on log(n): slope, intercept, RMS residual."""
    slope, intercept = loglog_slope(n, risk)
    resid = np.log(risk) - (intercept + slope * np.log(np.asarray(n, dtype=float)))
    return slope, intercept, float(np.sqrt(np.mean(resid**2)))


def _validate(config: ExperimentConfig) -> list[Schedule]:
    errors, schedules = [], []
    if config.replications < 1:
        errors.append("replications must be >= 1")
    for n in config.n_grid:
        try:
            schedules.append(Schedule(config.schedule_kind, config.eta, config.step(n), int(n)))
        except InvalidArgumentError as exc:
            errors.append(f"n={n}: {exc}")
    if errors:
        raise InvalidArgumentError("; ".join(errors))
    return schedules


def run_experiment(config: ExperimentConfig, keep_estimates: bool = False) -> RiskCurve:
    """Simulate, estimate and score ``replications`` paths at every grid point.

    Replication r at grid index k draws from stream ``(seed, 1, k, r)``; the
    invariant sample uses stream ``(seed, 0, chain)``. Every schedule is
    checked before anything is simulated.
    """
    schedules = _validate(config)
    entry = config.entry
    truth = entry.true_model
    loss = config.loss()
    space = config.space or entry.space
    sample = sample_invariant(truth, config.invariant_burn_in, config.invariant_count,
                              config.invariant_stride, config.seed, config.invariant_dt,
                              config.invariant_chains)
    if config.theta0 is not None:
        theta0 = np.atleast_1d(np.asarray(config.theta0, dtype=float))
    else:
        theta0 = quasi_optimal(loss, truth, sample, space).theta0
    x0 = np.zeros(truth.dim) if config.x0 is None else np.atleast_1d(np.asarray(config.x0, dtype=float))
    run = run_drift_batch if entry.kind == "drift" else run_diffusion_batch
    rows, estimates = [], {}
    R = int(config.replications)
    for k, (n, sched) in enumerate(zip(config.n_grid, schedules)):
        sim = SimConfig(x0, sched.h, int(n), config.substeps, config.seed)
        paths = simulate_replications(truth, sim, R, prefix=(_REPLICATION_STREAM, k))
        est, _ = run(loss, paths, space, sched, config.theta1)
        risk = excess_risk(est, theta0, loss, truth, sample)
        se = float(np.std(risk, ddof=1) / np.sqrt(R)) if R > 1 else float("nan")
        th_se = np.std(est, axis=0, ddof=1) / np.sqrt(R) if R > 1 else np.full(est.shape[1], np.nan)
        rows.append(RiskRow(int(n), sched.h, float(np.mean(risk)), se, R, est.mean(axis=0), th_se))
        if keep_estimates:
            estimates[int(n)] = {"theta_bar": est, "paths": paths}
    slope, intercept, resid = fit_rate([r.n for r in rows], [r.mean_excess_risk for r in rows])
    return RiskCurve(rows, slope, intercept, resid, theta0, estimates)


# --------------------------------------------------------------------------
# residual scaling


@dataclass
class ResidualScaling:
    """Monte-Carlo mean of R_{0,n} / n for each observation step h."""

    h: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    slope: float
    intercept: float
    horizon: float
    reps: int

    def to_csv(self) -> str:
        lines = ["h,mean_residual_per_step,stderr"]
        lines += [f"{h:.17g},{m:.17g},{s:.17g}" for h, m, s in zip(self.h, self.mean, self.stderr)]
        return "\n".join(lines) + "\n"


def residual_scaling(entry: CatalogEntry, theta, h_grid, horizon: float, reps: int, seed: int,
                     substeps: int = 10, x0=None, chunk: int = 50) -> ResidualScaling:
    """R_{0,n} / n along the constant sequence ``theta`` for n = horizon / h.

    Each path contributes its residual sum divided by n; the slope is fitted
    to |mean| against h on a log-log scale. Per path the martingale part of
    R_{0,n} / n has size of order horizon^{-1/2} whatever h is, so only the
    mean carries the h-dependence. Path r at grid index k uses stream
    ``(seed, 5, k, r)``; paths are simulated ``chunk`` at a time.
    """
    hs = np.asarray(h_grid, dtype=float)
    if reps < 2:
        raise InvalidArgumentError("need at least two replications for a standard error")
    truth = entry.true_model
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    x0 = np.zeros(truth.dim) if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    if entry.kind == "drift":
        loss = DriftLoss(entry.drift_model)
        residual = lambda paths, h: oracle.residual_R(loss, truth.drift, theta, paths, 0, h)
    else:
        loss = DiffusionLoss(entry.diffusion_model)
        residual = lambda paths, h: oracle.residual_R_diff(loss, truth.diffusion_matrix, theta, paths, 0, h)
    means, ses = [], []
    for k, h in enumerate(hs):
        n = int(round(horizon / h))
        gens = replication_streams(seed, reps, _RESIDUAL_STREAM, k)
        per_path = []
        for start in range(0, reps, chunk):
            g = gens[start:start + chunk]
            noise = per_replication_noise(g, substeps, truth.dim)
            paths = euler_maruyama(truth, np.broadcast_to(x0, (len(g), truth.dim)), float(h), n, substeps, noise)
            per_path.append(residual(paths, float(h)) / n)
        vals = np.concatenate(per_path)
        means.append(vals.mean())
        ses.append(vals.std(ddof=1) / math.sqrt(reps))
    means, ses = np.array(means), np.array(ses)
    slope, intercept = loglog_slope(hs, np.abs(means))
    return ResidualScaling(hs, means, ses, slope, intercept, float(horizon), int(reps))
