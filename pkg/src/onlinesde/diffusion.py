"""Online estimation of the diffusion matrix A = a a^T.

The loss is F(theta; xi) = 1/2 ||M^{1/2} (A(xi) - A_m(xi, theta)) M^{1/2}||_F^2
+ J(theta); the estimator replaces A(X_{i-1}) by the quadratic-variation
increment (Delta_i X)(Delta_i X)^T / h.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .mirror import Schedule
from .models import LossWeights, ParametricDiffusionModel, is_affine
from .spaces import ParameterSpace
from .streaming import SmdStream, run_batch

LEAST_SQUARES = "least-squares"
GENERAL = "general"


@dataclass(frozen=True)
class DiffusionLoss:
    model: ParametricDiffusionModel
    weights: LossWeights = field(default_factory=LossWeights)
    mode: str = LEAST_SQUARES

    def __post_init__(self):
        if self.mode not in (LEAST_SQUARES, GENERAL):
            raise InvalidArgumentError(f"unknown loss mode {self.mode!r}")
        if self.mode == LEAST_SQUARES:
            if not self.weights.least_squares:
                raise InvalidArgumentError("least-squares mode fixes M = I and J = 0")
            if not is_affine(self.model, np.random.default_rng(0)):
                raise InvalidArgumentError(
                    f"model {self.model.name!r} is not affine in theta; least-squares mode needs it"
                )

    @property
    def dim(self) -> int:
        return self.model.dim

    def M(self, x) -> np.ndarray:
        return self.weights.M(x, self.model.dim)


def sqrt_psd(M) -> np.ndarray:
    """Symmetric square root with negative eigenvalues clamped to zero."""
    M = np.asarray(M, dtype=float)
    w, V = np.linalg.eigh(0.5 * (M + np.swapaxes(M, -1, -2)))
    return (V * np.sqrt(np.clip(w, 0.0, None))[..., None, :]) @ np.swapaxes(V, -1, -2)


def qv_increment(dx, h) -> np.ndarray:
    """(Delta X)(Delta X)^T / h, batched over leading axes."""
    if not h > 0:
        raise InvalidArgumentError(f"observation step must be positive, got {h}")
    dx = np.atleast_1d(np.asarray(dx, dtype=float))
    return dx[..., :, None] * dx[..., None, :] / h


def ls_diffusion_subgradient(model: ParametricDiffusionModel, theta, prev, dx, h) -> np.ndarray:
    """Component j: -<d A_m / d theta_j, QV - A_m(prev, theta)>_F."""
    qv = qv_increment(dx, h)
    theta = np.asarray(theta, dtype=float)
    prev = np.asarray(prev, dtype=float)
    resid = qv - model.value(prev, theta)
    jac = model.theta_jacobian(prev, theta)
    return -np.einsum("...pij,...ij->...p", jac, resid)


def general_diffusion_subgradient(loss: DiffusionLoss, theta, prev, dx, h) -> np.ndarray:
    """Component j: -<d A_m / d theta_j, M (QV - A_m) M>_F + dJ(theta)."""
    qv = qv_increment(dx, h)
    theta = np.asarray(theta, dtype=float)
    prev = np.asarray(prev, dtype=float)
    M = loss.M(prev)
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    resid = M @ (qv - loss.model.value(prev, theta)) @ M
    jac = loss.model.theta_jacobian(prev, theta)
    return -np.einsum("...pij,...ij->...p", jac, resid) + loss.weights.J_subgradient(theta)


def diffusion_subgradient(loss: DiffusionLoss, theta, prev, dx, h) -> np.ndarray:
    if loss.mode == LEAST_SQUARES:
        return ls_diffusion_subgradient(loss.model, theta, prev, dx, h)
    return general_diffusion_subgradient(loss, theta, prev, dx, h)


class DiffusionStream(SmdStream):
    """Online diffusion estimator; same interface as ``DriftStream``."""

    def __init__(self, loss: DiffusionLoss, space: ParameterSpace, schedule: Schedule, x0,
                 theta1=None, prox=None, tail_from: int | None = None, trace: bool = False):
        if space.dim != loss.model.n_params:
            raise InvalidArgumentError("parameter space dimension differs from the model's")
        self.loss = loss
        super().__init__(space, schedule, x0, theta1, prox, tail_from, trace)

    @property
    def dim(self) -> int:
        return self.loss.model.dim

    def subgradient(self, theta, prev, dx, h):
        return diffusion_subgradient(self.loss, theta, prev, dx, h)


def stream_diffusion_update(stream: DiffusionStream, next_observation) -> DiffusionStream:
    return stream.update(next_observation)


def run_diffusion_batch(loss: DiffusionLoss, paths, space: ParameterSpace, schedule: Schedule,
                        theta1=None, prox=None):
    return run_batch(lambda th, x, dx, h: diffusion_subgradient(loss, th, x, dx, h),
                     paths, space, schedule, theta1, prox)
