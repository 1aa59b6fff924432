"""Regularized Heaviside/Dirac kernels and biphasic density estimation.

The smoothed step has compact support [-eps, eps] and a sine correction that
keeps it C^1 at the ends; its derivative is the raised-cosine delta.  Phase
densities follow the Chan-Vese region means, evaluated with Simpson weights
shared between numerator and denominator so constants are recovered exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import ScalarField, simpson_weights


class EmptyPhaseError(ValueError):
    """One of the two phases has zero integrated indicator mass."""


@dataclass(frozen=True)
class PhaseDensities:
    """Estimated inside/outside densities and the regularization width used."""

    rho1: float
    rho2: float
    eps: float

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if not (np.isfinite(self.rho1) and np.isfinite(self.rho2)):
            raise ValueError("phase densities must be finite")

    def as_dict(self, units: str = "arbitrary") -> dict:
        return {"rho1": self.rho1, "rho2": self.rho2, "eps": self.eps, "units": units}


def heaviside_eps(x, eps: float):
    """Smoothed unit step: 0 below -eps, 1 above +eps, sine-eased between."""
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    x = np.asarray(x, dtype=np.float64)
    u = x / eps
    ramp = 0.5 * (1.0 + u + np.sin(np.pi * u) / np.pi)
    out = np.where(u >= 1.0, 1.0, np.where(u <= -1.0, 0.0, ramp))
    return out if out.ndim else float(out)


def dirac_eps(x, eps: float):
    """Raised-cosine delta, d/dx of heaviside_eps; support [-eps, eps]."""
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    x = np.asarray(x, dtype=np.float64)
    out = np.where(np.abs(x) <= eps, (1.0 + np.cos(np.pi * x / eps)) / (2.0 * eps), 0.0)
    return out if out.ndim else float(out)


def _weight_tensor_parts(field: ScalarField):
    geo = field.geometry
    return tuple(simpson_weights(geo.dims[a], geo.spacing[a]) for a in range(3))


def _weighted_integral(wx, wy, wz, values) -> float:
    return float(np.einsum("i,j,k,ijk->", wx, wy, wz, values, optimize=True))


def estimate_phases(rho_smoothed: ScalarField, phi: ScalarField, eps: float) -> PhaseDensities:
    """Region-mean densities of the inside (phi < 0) and outside phases.

    Both masses use the regularized indicator theta_eps(-phi) and the same
    Simpson weights, so a constant image yields rho1 == rho2 == that constant.
    """
    if rho_smoothed.geometry != phi.geometry:
        raise ValueError("density and embedding must share one geometry")
    inside = heaviside_eps(-phi.values, eps)
    outside = 1.0 - inside
    wx, wy, wz = _weight_tensor_parts(phi)
    mass_in = _weighted_integral(wx, wy, wz, inside)
    mass_out = _weighted_integral(wx, wy, wz, outside)
    if mass_in <= 0.0:
        raise EmptyPhaseError("inside phase (phi < 0) has zero mass")
    if mass_out <= 0.0:
        raise EmptyPhaseError("outside phase (phi > 0) has zero mass")
    rho1 = _weighted_integral(wx, wy, wz, rho_smoothed.values * inside) / mass_in
    rho2 = _weighted_integral(wx, wy, wz, rho_smoothed.values * outside) / mass_out
    return PhaseDensities(rho1=rho1, rho2=rho2, eps=eps)


def reconstruct_density(phi: ScalarField, phases: PhaseDensities) -> ScalarField:
    """Biphasic density image implied by the embedding and phase densities."""
    inside = heaviside_eps(-phi.values, phases.eps)
    values = phases.rho1 * inside + phases.rho2 * (1.0 - inside)
    return ScalarField(phi.geometry, values)
