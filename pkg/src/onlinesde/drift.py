"""Online estimation of drift coefficients.

The loss for a model b_m and weights (M, J) is

    F(theta; xi) = 1/2 M(xi)[(b_m(xi, theta) - b(xi))^{(x)2}] + J(theta),

which involves the unknown drift b. The estimator only ever uses subgradients
of the observable surrogate

    H_i(theta) = 1/(2 h^2) M(X_{i-1})[(dX - h b_m)^{(x)2} - (dX - h b)^{(x)2}] + J(theta),

whose b-dependent part does not depend on theta. Functions that evaluate F or
H themselves need the true drift and live in :mod:`onlinesde.oracle`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .mirror import Schedule
from .models import LossWeights, ParametricDriftModel, is_affine
from .spaces import ParameterSpace
from .streaming import SmdStream, run_batch

LEAST_SQUARES = "least-squares"
GENERAL = "general"


@dataclass(frozen=True)
class DriftLoss:
    model: ParametricDriftModel
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


def _check_h(h) -> None:
    if not h > 0:
        raise InvalidArgumentError(f"observation step must be positive, got {h}")


def ls_drift_subgradient(model: ParametricDriftModel, theta, prev, dx, h) -> np.ndarray:
    """K = -(1/h) (d b_m / d theta)^T (dX - h b_m(prev, theta)); batches broadcast."""
    _check_h(h)
    theta = np.asarray(theta, dtype=float)
    prev = np.asarray(prev, dtype=float)
    jac = model.theta_jacobian(prev, theta)
    resid = np.asarray(dx, dtype=float) - h * model.value(prev, theta)
    return -np.einsum("...dp,...d->...p", jac, resid) / h


def general_drift_subgradient(loss: DriftLoss, theta, prev, dx, h) -> np.ndarray:
    """-(1/h) J_theta^T M (dX - h b_m) + dJ(theta), with M symmetrised."""
    _check_h(h)
    theta = np.asarray(theta, dtype=float)
    prev = np.asarray(prev, dtype=float)
    model = loss.model
    jac = model.theta_jacobian(prev, theta)
    resid = np.asarray(dx, dtype=float) - h * model.value(prev, theta)
    M = loss.M(prev)
    Mr = np.einsum("...ij,...j->...i", 0.5 * (M + np.swapaxes(M, -1, -2)), resid)
    return -np.einsum("...dp,...d->...p", jac, Mr) / h + loss.weights.J_subgradient(theta)


def drift_subgradient(loss: DriftLoss, theta, prev, dx, h) -> np.ndarray:
    if loss.mode == LEAST_SQUARES:
        return ls_drift_subgradient(loss.model, theta, prev, dx, h)
    return general_drift_subgradient(loss, theta, prev, dx, h)


class DriftStream(SmdStream):
    """Online drift estimator fed one observation at a time::

        stream = DriftStream(loss, Box([0.1], [3.0]), Schedule("drift-sqrt", 1.0, h, n), x0)
        for x in observations[1:]:
            stream.update(x)
        theta_bar = stream.estimate()
    """

    def __init__(self, loss: DriftLoss, space: ParameterSpace, schedule: Schedule, x0,
                 theta1=None, prox=None, tail_from: int | None = None, trace: bool = False):
        if space.dim != loss.model.n_params:
            raise InvalidArgumentError("parameter space dimension differs from the model's")
        self.loss = loss
        super().__init__(space, schedule, x0, theta1, prox, tail_from, trace)

    @property
    def dim(self) -> int:
        return self.loss.model.dim

    def subgradient(self, theta, prev, dx, h):
        return drift_subgradient(self.loss, theta, prev, dx, h)


def stream_drift_update(stream: DriftStream, next_observation) -> DriftStream:
    return stream.update(next_observation)


def run_drift_batch(loss: DriftLoss, paths, space: ParameterSpace, schedule: Schedule,
                    theta1=None, prox=None):
    """Vectorised equivalent of one ``DriftStream`` per row of ``paths``."""
    return run_batch(lambda th, x, dx, h: drift_subgradient(loss, th, x, dx, h),
                     paths, space, schedule, theta1, prox)
