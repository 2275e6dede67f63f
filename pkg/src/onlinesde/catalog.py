"""Built-in models addressable by string id.

=======================  =========================================  ==================
id                       true coefficients                          parametric model
=======================  =========================================  ==================
``ou``                   b(x) = -theta_star x, a = sigma I          b_m = -theta x
``ou-sin``               b(x) = -x - sin_weight sin(x), a = sigma I  b_m = -theta x
``sqrt-theta-diffusion`` b(x) = -rate x, a = sigma I                 A_m = theta I
``constant``             b(x) = rate, a = sigma I                   b_m = theta
=======================  =========================================  ==================

Parameter slots and their defaults are listed in ``DEFAULT_PARAMS``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .models import (
    FamilyParams,
    ParametricDiffusionModel,
    ParametricDriftModel,
    SdeModel,
)
from .spaces import Box

DEFAULT_PARAMS: dict[str, dict[str, float]] = {
    "ou": {"theta_star": 1.0, "sigma": 1.0, "dim": 1},
    "ou-sin": {"sin_weight": 0.5, "sigma": 1.0},
    "sqrt-theta-diffusion": {"rate": 1.0, "sigma": math.sqrt(2.0), "dim": 1},
    "constant": {"rate": 1.0, "sigma": 0.0},
}

DEFAULT_SPACES = {
    "ou": (0.1, 3.0),
    "ou-sin": (0.1, 3.0),
    "sqrt-theta-diffusion": (0.5, 4.0),
    "constant": (-5.0, 5.0),
}


@dataclass(frozen=True)
class CatalogEntry:
    id: str
    true_model: SdeModel
    space: Box
    params: dict = field(default_factory=dict)
    drift_model: ParametricDriftModel | None = None
    diffusion_model: ParametricDiffusionModel | None = None

    @property
    def kind(self) -> str:
        return "drift" if self.drift_model is not None else "diffusion"


def _isotropic(sigma: float, dim: int):
    def a(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(sigma * np.eye(dim), x.shape[:-1] + (dim, dim))

    return a


def _scaled_identity_drift(dim: int) -> ParametricDriftModel:
    def value(x, theta):
        return -np.asarray(theta)[..., :1] * np.asarray(x)

    def jac(x, theta):
        x = np.asarray(x, dtype=float)
        return -x[..., None] + 0.0 * np.asarray(theta, dtype=float)[..., None, :]

    return ParametricDriftModel(value, jac, dim=dim, n_params=1, linear=True, name="scaled-identity")


def _constant_drift(dim: int) -> ParametricDriftModel:
    def value(x, theta):
        x = np.asarray(x, dtype=float)
        return np.asarray(theta)[..., :1] + 0.0 * x

    def jac(x, theta):
        x = np.asarray(x, dtype=float)
        return np.ones_like(x)[..., None] + 0.0 * np.asarray(theta, dtype=float)[..., None, :]

    return ParametricDriftModel(value, jac, dim=dim, n_params=1, linear=True, name="constant")


def scaled_identity_diffusion(dim: int) -> ParametricDiffusionModel:
    """A_m(x, theta) = theta I_d."""
    eye = np.eye(dim)

    def value(x, theta):
        return np.asarray(theta, dtype=float)[..., :1, None] * eye

    def jac(x, theta):
        x = np.asarray(x, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], np.shape(theta)[:-1])
        return np.broadcast_to(eye, shape + (1, dim, dim))

    return ParametricDiffusionModel(value, jac, dim=dim, n_params=1, linear=True, name="theta-identity")


def build(model_id: str, **params) -> CatalogEntry:
    """Instantiate a catalog model; unknown parameter names are rejected."""
    if model_id not in DEFAULT_PARAMS:
        raise InvalidArgumentError(
            f"unknown model id {model_id!r}; choose from {sorted(DEFAULT_PARAMS)}"
        )
    merged = dict(DEFAULT_PARAMS[model_id])
    unknown = set(params) - set(merged)
    if unknown:
        raise InvalidArgumentError(f"unknown parameters for {model_id}: {sorted(unknown)}")
    merged.update(params)
    lo, hi = DEFAULT_SPACES[model_id]
    dim = int(merged.get("dim", 1))
    sigma = float(merged["sigma"])

    if model_id == "ou":
        ts = float(merged["theta_star"])
        true = SdeModel(lambda x: -ts * np.asarray(x, dtype=float), _isotropic(sigma, dim), dim, "ou")
        return CatalogEntry(model_id, true, Box([lo], [hi]), merged, drift_model=_scaled_identity_drift(dim))
    if model_id == "ou-sin":
        w = float(merged["sin_weight"])

        def b(x):
            x = np.asarray(x, dtype=float)
            return -x - w * np.sin(x)

        true = SdeModel(b, _isotropic(sigma, 1), 1, "ou-sin")
        return CatalogEntry(model_id, true, Box([lo], [hi]), merged, drift_model=_scaled_identity_drift(1))
    if model_id == "sqrt-theta-diffusion":
        rate = float(merged["rate"])
        true = SdeModel(
            lambda x: -rate * np.asarray(x, dtype=float), _isotropic(sigma, dim), dim, "sqrt-theta-diffusion"
        )
        return CatalogEntry(
            model_id, true, Box([lo], [hi]), merged, diffusion_model=scaled_identity_diffusion(dim)
        )
    rate = float(merged["rate"])
    true = SdeModel(lambda x: rate + 0.0 * np.asarray(x, dtype=float), _isotropic(sigma, 1), 1, "constant")
    return CatalogEntry(model_id, true, Box([lo], [hi]), merged, drift_model=_constant_drift(1))


def family_for(entry: CatalogEntry) -> FamilyParams:
    """A coefficient class the catalog model belongs to (used by diagnostics)."""
    p = entry.params
    sigma = float(p["sigma"])
    dim = entry.true_model.dim
    kappa0 = max(1.0, sigma**2, 1.0 / sigma**2) if sigma > 0 else 1.0
    if entry.id == "ou":
        ts = float(p["theta_star"])
        return FamilyParams(alpha=1, beta=1, gamma=1, kappa0=kappa0,
                            kappa1=max(ts, 1e-12), varkappa1=max(1.0, 1.0 / ts) if ts > 0 else 1.0, dim=dim)
    if entry.id == "ou-sin":
        w = float(p["sin_weight"])
        return FamilyParams(alpha=1, beta=1, gamma=1, kappa0=kappa0, kappa1=1 + w,
                            varkappa1=max(1.0, 2.0 * (1.0 + w)), dim=1)
    if entry.id == "sqrt-theta-diffusion":
        rate = float(p["rate"])
        return FamilyParams(alpha=1, beta=1, gamma=1, kappa0=kappa0, kappa1=max(rate, 1e-12),
                            varkappa1=max(1.0, 1.0 / rate) if rate > 0 else 1.0, dim=dim)
    return FamilyParams(alpha=1, beta=1, gamma=0, kappa0=kappa0, kappa1=max(abs(float(p["rate"])), 1e-12),
                        varkappa1=1.0, dim=1)
