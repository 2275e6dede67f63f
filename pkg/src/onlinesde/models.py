"""True SDE coefficients, parametric models, loss weights and condition checks.

Shape conventions (``...`` is any batch shape):

* drift ``b(x)``: ``(..., d) -> (..., d)``
* diffusion ``a(x)``: ``(..., d) -> (..., d, d)``
* parametric drift ``b_m(x, theta)``: ``(..., d), (..., p) -> (..., d)``;
  its Jacobian is ``(..., d, p)``
* parametric diffusion ``A_m(x, theta)``: ``-> (..., d, d)``; its Jacobian is
  the stack ``(..., p, d, d)`` of the partial derivatives in each coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError

Array = np.ndarray


@dataclass(frozen=True)
class FamilyParams:
    """Constants (alpha, beta, gamma, kappa0, kappa1, varkappa1) of a coefficient class."""

    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    kappa0: float = 1.0
    kappa1: float = 1.0
    varkappa1: float = 1.0
    dim: int = 1

    def __post_init__(self):
        problems = []
        if not 0.0 < self.alpha <= 1.0:
            problems.append("alpha must lie in (0, 1]")
        if not 0.0 <= self.beta <= 1.0:
            problems.append("beta must lie in [0, 1]")
        if not self.gamma >= 0.0:
            problems.append("gamma must be >= 0")
        if not self.kappa0 >= 1.0:
            problems.append("kappa0 must be >= 1")
        if not self.kappa1 > 0.0:
            problems.append("kappa1 must be > 0")
        if not self.varkappa1 > 0.0:
            problems.append("varkappa1 must be > 0")
        if int(self.dim) != self.dim or self.dim < 1:
            problems.append("dim must be a positive integer")
        if problems:
            raise InvalidArgumentError("; ".join(problems))


@dataclass(frozen=True)
class SdeModel:
    """Coefficients of dX = b(X) dt + a(X) dW in dimension ``dim``."""

    drift: Callable[[Array], Array]
    diffusion: Callable[[Array], Array]
    dim: int
    name: str = "custom"

    def diffusion_matrix(self, x) -> Array:
        """A(x) = a(x) a(x)^T."""
        a = self.diffusion(np.asarray(x, dtype=float))
        return a @ np.swapaxes(a, -1, -2)


@dataclass(frozen=True)
class ParametricDriftModel:
    value: Callable[[Array, Array], Array]
    theta_jacobian: Callable[[Array, Array], Array]
    dim: int
    n_params: int
    linear: bool = False
    name: str = "custom"


@dataclass(frozen=True)
class ParametricDiffusionModel:
    value: Callable[[Array, Array], Array]
    theta_jacobian: Callable[[Array, Array], Array]
    dim: int
    n_params: int
    linear: bool = False
    name: str = "custom"


@dataclass(frozen=True)
class LossWeights:
    """Weight matrix M(x) and convex regularizer J(theta).

    ``weight=None`` stands for the identity and ``regularizer=None`` for zero;
    both together give the least-squares loss.
    """

    weight: Callable[[Array], Array] | None = None
    regularizer: Callable[[Array], Array] | None = None
    regularizer_subgradient: Callable[[Array], Array] | None = None

    @property
    def least_squares(self) -> bool:
        return self.weight is None and self.regularizer is None

    def M(self, x, dim: int) -> Array:
        x = np.asarray(x, dtype=float)
        if self.weight is None:
            return np.broadcast_to(np.eye(dim), x.shape[:-1] + (dim, dim))
        return np.asarray(self.weight(x), dtype=float)

    def J(self, theta) -> Array:
        theta = np.asarray(theta, dtype=float)
        if self.regularizer is None:
            return np.zeros(theta.shape[:-1])
        return np.asarray(self.regularizer(theta), dtype=float)

    def J_subgradient(self, theta) -> Array:
        theta = np.asarray(theta, dtype=float)
        if self.regularizer_subgradient is None:
            if self.regularizer is not None:
                raise InvalidArgumentError("regularizer supplied without a subgradient")
            return np.zeros_like(theta)
        return np.asarray(self.regularizer_subgradient(theta), dtype=float)


def l1_regularizer(lam: float) -> LossWeights:
    """lam * ||theta||_1 with the zero subgradient selected at kinks."""
    if lam < 0:
        raise InvalidArgumentError("l1 weight must be nonnegative")
    return LossWeights(
        regularizer=lambda th: lam * np.sum(np.abs(th), axis=-1),
        regularizer_subgradient=lambda th: lam * np.sign(th),
    )


# --------------------------------------------------------------------------
# Model contract checks


def jacobian_error(model, points: Array, thetas: Array, step: float = 1e-5) -> float:
    """Largest relative error between ``theta_jacobian`` and central differences.

    Works for both drift and diffusion models; the relative error is measured
    per sample against ``max(1, |analytic|)``.
    """
    points = np.atleast_2d(points)
    thetas = np.atleast_2d(thetas)
    diffusion = isinstance(model, ParametricDiffusionModel)
    worst = 0.0
    for x, th in zip(points, thetas):
        analytic = np.asarray(model.theta_jacobian(x, th), dtype=float)
        cols = []
        for j in range(th.size):
            e = np.zeros_like(th)
            e[j] = step
            cols.append((model.value(x, th + e) - model.value(x, th - e)) / (2 * step))
        numeric = np.stack(cols, axis=0 if diffusion else -1)
        scale = max(1.0, float(np.max(np.abs(analytic))))
        worst = max(worst, float(np.max(np.abs(numeric - analytic))) / scale)
    return worst


def affine_defect(model, points: Array, thetas_a: Array, thetas_b: Array) -> float:
    """Largest violation of additivity of ``value(x, .) - value(x, 0)``.

    Zero (up to rounding) exactly when the model is affine in theta.
    """
    worst = 0.0
    for x, t1, t2 in zip(np.atleast_2d(points), np.atleast_2d(thetas_a), np.atleast_2d(thetas_b)):
        base = model.value(x, np.zeros_like(t1))
        lhs = model.value(x, t1 + t2) - base
        rhs = (model.value(x, t1) - base) + (model.value(x, t2) - base)
        scale = 1.0 + float(np.max(np.abs(lhs)))
        worst = max(worst, float(np.max(np.abs(lhs - rhs))) / scale)
    return worst


def is_affine(model, rng: np.random.Generator, trials: int = 20, tol: float = 1e-9) -> bool:
    points = rng.normal(size=(trials, model.dim)) * 3
    ta = rng.normal(size=(trials, model.n_params))
    tb = rng.normal(size=(trials, model.n_params))
    return affine_defect(model, points, ta, tb) <= tol


def min_weight_eigenvalue(weights: LossWeights, points: Array, dim: int) -> float:
    M = weights.M(np.atleast_2d(points), dim)
    sym = 0.5 * (M + np.swapaxes(M, -1, -2))
    return float(np.min(np.linalg.eigvalsh(sym)))


def weights_are_psd(weights: LossWeights, points: Array, dim: int) -> bool:
    return min_weight_eigenvalue(weights, points, dim) >= -1e-10


def regularizer_is_convex(weights: LossWeights, thetas_a: Array, thetas_b: Array) -> bool:
    """Midpoint convexity of J along the given segments."""
    ta, tb = np.atleast_2d(thetas_a), np.atleast_2d(thetas_b)
    mid = weights.J(0.5 * (ta + tb))
    return bool(np.all(mid <= 0.5 * weights.J(ta) + 0.5 * weights.J(tb) + 1e-10))


# --------------------------------------------------------------------------
# Coefficient-class conditions on a probe grid


@dataclass
class ConditionResult:
    """Outcome of one condition on the probe grid.

    ``statistic`` is the worst value observed and ``bound`` the value it is
    compared to. A failure is definitive and carries the violating input in
    ``certificate``; a pass is evidence on the grid only.
    """

    name: str
    statistic: float
    bound: float
    passed: bool
    certificate: tuple | None = None
    extra: dict = field(default_factory=dict)


@dataclass
class ConditionReport:
    results: list[ConditionResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> list[ConditionResult]:
        return [r for r in self.results if not r.passed]

    def __getitem__(self, name: str) -> ConditionResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)


def _as_pairs(probe_grid, dim: int) -> Array:
    pairs = np.asarray(probe_grid, dtype=float)
    if pairs.ndim == 2 and dim == 1 and pairs.shape[1] == 2:
        pairs = pairs[..., None]
    if pairs.ndim != 3 or pairs.shape[1] != 2 or pairs.shape[2] != dim or pairs.shape[0] == 0:
        raise InvalidArgumentError(
            f"probe grid must have shape (m, 2, {dim}) with m >= 1, got {pairs.shape}"
        )
    if not np.all(np.isfinite(pairs)):
        raise InvalidArgumentError("probe grid contains non-finite points")
    return pairs


def pairs_from_points(points) -> Array:
    """All unordered pairs of distinct rows of ``points`` as a probe grid."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    i, j = np.triu_indices(len(pts), k=1)
    return np.stack([pts[i], pts[j]], axis=1)


def check_drift_conditions(model: SdeModel, family: FamilyParams, probe_grid) -> ConditionReport:
    """Check the Hoelder/growth condition and the Lyapunov drift condition on b."""
    pairs = _as_pairs(probe_grid, model.dim)
    x, y = pairs[:, 0], pairs[:, 1]
    results = []

    b0 = np.asarray(model.drift(np.zeros(model.dim)), dtype=float)
    b0_norm = float(np.linalg.norm(b0))
    results.append(
        ConditionResult(
            "H_beta_b_origin",
            b0_norm,
            family.kappa1,
            b0_norm <= family.kappa1,
            None if b0_norm <= family.kappa1 else (np.zeros(model.dim),),
        )
    )

    dist = np.linalg.norm(x - y, axis=-1)
    keep = dist > 0
    diff = np.linalg.norm(model.drift(x) - model.drift(y), axis=-1)
    denom = np.maximum(dist**family.beta, dist)
    ratio = np.where(keep, diff / np.where(keep, denom, 1.0), 0.0)
    k = int(np.argmax(ratio))
    ok = bool(ratio[k] <= family.kappa1)
    results.append(
        ConditionResult(
            "H_beta_b", float(ratio[k]), family.kappa1, ok, None if ok else (x[k], y[k])
        )
    )

    pts = np.concatenate([x, y])
    r = np.linalg.norm(pts, axis=-1)
    inner = np.sum(model.drift(pts) * pts, axis=-1)
    slack = inner - (-(r ** (1 + family.gamma)) / family.varkappa1 + family.varkappa1)
    k = int(np.argmax(slack))
    ok = bool(slack[k] <= 0)
    results.append(
        ConditionResult("L_gamma_b", float(slack[k]), 0.0, ok, None if ok else (pts[k],))
    )
    return ConditionReport(results)


def check_diffusion_conditions(model: SdeModel, family: FamilyParams, probe_grid) -> ConditionReport:
    """Check uniform ellipticity of a a^T and the alpha-Hoelder bound on a."""
    pairs = _as_pairs(probe_grid, model.dim)
    x, y = pairs[:, 0], pairs[:, 1]
    results = []

    pts = np.concatenate([x, y])
    shape = np.shape(model.diffusion(pts))
    if shape != pts.shape + (model.dim,):
        raise InvalidArgumentError(f"diffusion returned shape {shape}, expected {pts.shape + (model.dim,)}")
    eig = np.linalg.eigvalsh(model.diffusion_matrix(pts))
    lo, hi = eig[:, 0], eig[:, -1]
    k_lo, k_hi = int(np.argmin(lo)), int(np.argmax(hi))
    ok_lo = bool(lo[k_lo] * family.kappa0 >= 1.0 - 1e-12)
    ok_hi = bool(hi[k_hi] <= family.kappa0 * (1.0 + 1e-12))
    results.append(
        ConditionResult(
            "H_alpha_a_ellipticity_lower", float(lo[k_lo]), 1.0 / family.kappa0, ok_lo,
            None if ok_lo else (pts[k_lo],),
        )
    )
    results.append(
        ConditionResult(
            "H_alpha_a_ellipticity_upper", float(hi[k_hi]), family.kappa0, ok_hi,
            None if ok_hi else (pts[k_hi],),
        )
    )

    dist = np.linalg.norm(x - y, axis=-1)
    keep = dist > 0
    diff = np.linalg.norm(model.diffusion(x) - model.diffusion(y), axis=(-2, -1))
    ratio = np.where(keep, diff / np.where(keep, dist, 1.0) ** family.alpha, 0.0)
    k = int(np.argmax(ratio))
    ok = bool(ratio[k] <= family.kappa0)
    results.append(
        ConditionResult(
            "H_alpha_a", float(ratio[k]), family.kappa0, ok, None if ok else (x[k], y[k])
        )
    )
    return ConditionReport(results)
