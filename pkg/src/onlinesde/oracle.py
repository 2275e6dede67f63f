"""Quantities that require the true coefficients (simulation studies only).

The online estimators never call into this module. It evaluates the sampled
loss F, its observable surrogate H, their difference identity and the
residual sums used to check how far H drifts from F.

All functions broadcast over leading batch axes. ``b`` is the true drift
callable and ``A`` the true diffusion matrix callable ``x -> a(x) a(x)^T``.
"""

from __future__ import annotations

import numpy as np

from .diffusion import DiffusionLoss, qv_increment, sqrt_psd
from .drift import DriftLoss
from .errors import InvalidArgumentError


def _bilinear(M, u, v) -> np.ndarray:
    """M[u, v] = u^T M v."""
    return np.einsum("...i,...ij,...j->...", u, M, v)


def _check_h(h) -> None:
    if not h > 0:
        raise InvalidArgumentError(f"observation step must be positive, got {h}")


# --------------------------------------------------------------------------
# drift


def sampled_loss_F(loss: DriftLoss, b, theta, xi) -> np.ndarray:
    """1/2 M(xi)[(b_m(xi, theta) - b(xi))^{(x)2}] + J(theta)."""
    xi = np.asarray(xi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    u = loss.model.value(xi, theta) - b(xi)
    return 0.5 * _bilinear(loss.M(xi), u, u) + loss.weights.J(theta)


def approx_loss_H(loss: DriftLoss, b, theta, prev, dx, h) -> np.ndarray:
    """1/(2h^2) M(prev)[(dX - h b_m)^{(x)2} - (dX - h b)^{(x)2}] + J(theta)."""
    _check_h(h)
    prev = np.asarray(prev, dtype=float)
    theta = np.asarray(theta, dtype=float)
    dx = np.asarray(dx, dtype=float)
    M = loss.M(prev)
    u = dx - h * loss.model.value(prev, theta)
    v = dx - h * b(prev)
    return (_bilinear(M, u, u) - _bilinear(M, v, v)) / (2 * h * h) + loss.weights.J(theta)


def hf_identity_rhs(loss: DriftLoss, b, theta, prev, dx, h) -> np.ndarray:
    """(1/h) M(prev)[b(prev) - b_m(prev, theta), dX - h b(prev)]."""
    _check_h(h)
    prev = np.asarray(prev, dtype=float)
    bp = b(prev)
    u = bp - loss.model.value(prev, np.asarray(theta, dtype=float))
    return _bilinear(loss.M(prev), u, np.asarray(dx, dtype=float) - h * bp) / h


def hf_identity_gap(loss: DriftLoss, b, theta, prev, dx, h) -> np.ndarray:
    """|(H - F) - rhs| where F is evaluated at xi = prev."""
    H = approx_loss_H(loss, b, theta, prev, dx, h)
    F = sampled_loss_F(loss, b, theta, prev)
    return np.abs((H - F) - hf_identity_rhs(loss, b, theta, prev, dx, h))


def _residual_terms(states, iterates, tau):
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    n = states.shape[-2] - 1
    if not 0 <= tau < n:
        raise InvalidArgumentError(f"tau must satisfy 0 <= tau < n = {n}, got {tau}")
    m = n - tau
    prev = states[..., tau:n, :]
    dx = states[..., tau + 1:n + 1, :] - prev
    theta = np.asarray(iterates, dtype=float)
    if theta.ndim >= 2:
        if theta.shape[-2] < m:
            raise InvalidArgumentError(f"need at least {m} iterates, got {theta.shape[-2]}")
        theta = theta[..., :m, :]
    else:
        theta = np.broadcast_to(theta, prev.shape[:-1] + theta.shape[-1:])
    return theta, prev, dx


def residual_R(loss: DriftLoss, b, iterates, observations, tau: int, h: float | None = None) -> np.ndarray:
    """sum_{i=1}^{n-tau} F(v_i; xi_{i+tau}) - H_{i+tau}(v_i) with xi_i = X_{i-1}.

    ``iterates`` is either one parameter (a constant sequence) or an array whose
    second-to-last axis indexes v_1, v_2, ...; ``observations`` may be an
    ``ObservationSeries`` or an array of states, optionally batched ``(R, n+1, d)``.
    """
    states, h = _states_and_step(observations, h)
    theta, prev, dx = _residual_terms(states, iterates, tau)
    terms = sampled_loss_F(loss, b, theta, prev) - approx_loss_H(loss, b, theta, prev, dx, h)
    return np.sum(terms, axis=-1)


def _states_and_step(observations, h):
    if hasattr(observations, "states"):
        return observations.states, observations.h if h is None else h
    if h is None:
        raise InvalidArgumentError("h is required when passing raw states")
    return observations, h


# --------------------------------------------------------------------------
# diffusion


def _weighted(loss: DiffusionLoss, x, X) -> np.ndarray:
    """M^{1/2} X M^{1/2}; identity weight skips the square root."""
    if loss.weights.weight is None:
        return X
    S = sqrt_psd(loss.M(x))
    return S @ X @ S


def _frob2(X) -> np.ndarray:
    return np.sum(X * X, axis=(-2, -1))


def sampled_loss_F_diff(loss: DiffusionLoss, A, theta, xi) -> np.ndarray:
    """1/2 ||M^{1/2}(A(xi) - A_m(xi, theta)) M^{1/2}||_F^2 + J(theta)."""
    xi = np.asarray(xi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    D = A(xi) - loss.model.value(xi, theta)
    return 0.5 * _frob2(_weighted(loss, xi, D)) + loss.weights.J(theta)


def approx_loss_H_diff(loss: DiffusionLoss, A, theta, prev, dx, h) -> np.ndarray:
    """Difference of the two weighted Frobenius norms, plus J(theta)."""
    prev = np.asarray(prev, dtype=float)
    theta = np.asarray(theta, dtype=float)
    qv = qv_increment(dx, h)
    first = _weighted(loss, prev, qv - loss.model.value(prev, theta))
    second = _weighted(loss, prev, qv - A(prev))
    return 0.5 * (_frob2(first) - _frob2(second)) + loss.weights.J(theta)


def approx_loss_H_diff_expanded(loss: DiffusionLoss, A, theta, prev, dx, h) -> np.ndarray:
    """(A - A_m)[M (QV - A) M] + F(theta; prev), the expanded form of H."""
    prev = np.asarray(prev, dtype=float)
    theta = np.asarray(theta, dtype=float)
    qv = qv_increment(dx, h)
    Ap = A(prev)
    M = loss.M(prev)
    inner = M @ (qv - Ap) @ M
    cross = np.sum((Ap - loss.model.value(prev, theta)) * inner, axis=(-2, -1))
    return cross + sampled_loss_F_diff(loss, A, theta, prev)


def residual_R_diff(loss: DiffusionLoss, A, iterates, observations, tau: int,
                    h: float | None = None) -> np.ndarray:
    """Diffusion analogue of :func:`residual_R`."""
    states, h = _states_and_step(observations, h)
    theta, prev, dx = _residual_terms(states, iterates, tau)
    terms = sampled_loss_F_diff(loss, A, theta, prev) - approx_loss_H_diff(loss, A, theta, prev, dx, h)
    return np.sum(terms, axis=-1)
