"""Analytic test surfaces, synthetic density images, and order estimation.

The double-sphere field follows the usual min-of-spheres construction; its
zero set is the union boundary.  For error studies that need the genuine
distance to that boundary (min-of-SDFs is too shallow inside the overlap
lens), surface_distance_truth supplies the exact union signed distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .phases import heaviside_eps
from .volume import GridGeometry, ScalarField


@dataclass(frozen=True)
class AnalyticSurface:
    """A closed test surface with a closed-form signed distance field."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sphere", "torus", "double_spheres"):
            raise ValueError(f"unknown surface kind {self.kind!r}")
        p = dict(self.params)
        if self.kind == "sphere":
            if p.get("r", 0) <= 0:
                raise ValueError("sphere needs radius r > 0")
        elif self.kind == "torus":
            if p.get("a", 0) <= 0 or p.get("c", 0) <= 0:
                raise ValueError("torus needs a > 0 and c > 0")
            if p["c"] <= p["a"]:
                raise ValueError("embedded torus needs c > a")
        else:
            if p.get("r", 0) <= 0 or p.get("d", 0) <= 0:
                raise ValueError("double spheres need r > 0 and separation d > 0")
        object.__setattr__(self, "params", p)

    @classmethod
    def sphere(cls, r: float = 5.0) -> "AnalyticSurface":
        return cls("sphere", {"r": float(r)})

    @classmethod
    def torus(cls, a: float = 2.0, c: float = 3.0) -> "AnalyticSurface":
        return cls("torus", {"a": float(a), "c": float(c)})

    @classmethod
    def double_spheres(cls, r: float = 5.0, d: float = 3.0 * math.sqrt(3.0)) -> "AnalyticSurface":
        return cls("double_spheres", {"r": float(r), "d": float(d)})


def _coords(geometry: GridGeometry):
    xs = geometry.axis_coords(0)[:, None, None]
    ys = geometry.axis_coords(1)[None, :, None]
    zs = geometry.axis_coords(2)[None, None, :]
    return xs, ys, zs


def analytic_sdf(surface: AnalyticSurface, geometry: GridGeometry) -> ScalarField:
    """Signed distance samples of the surface, inside negative.

    double_spheres is the min of the two sphere fields (centers at +-d/2 on
    the x axis): exact outside the union, and non-smooth on the intersection
    circle.
    """
    xs, ys, zs = _coords(geometry)
    if surface.kind == "sphere":
        r = surface.params["r"]
        vals = np.sqrt(xs**2 + ys**2 + zs**2) - r
    elif surface.kind == "torus":
        a, c = surface.params["a"], surface.params["c"]
        ring = np.sqrt(xs**2 + ys**2) - c
        vals = np.sqrt(ring**2 + zs**2) - a
    else:
        r, d = surface.params["r"], surface.params["d"]
        d1 = np.sqrt((xs - d / 2) ** 2 + ys**2 + zs**2) - r
        d2 = np.sqrt((xs + d / 2) ** 2 + ys**2 + zs**2) - r
        vals = np.minimum(d1, d2)
    return ScalarField(geometry, np.broadcast_to(vals, geometry.shape).copy())


def surface_distance_truth(surface: AnalyticSurface, geometry: GridGeometry) -> ScalarField:
    """Exact signed distance to the surface's zero set.

    Identical to analytic_sdf for sphere and torus.  For overlapping double
    spheres the interior distance accounts for the dissolved caps: the nearest
    boundary point is a valid radial exit or the intersection circle.
    """
    if surface.kind != "double_spheres":
        return analytic_sdf(surface, geometry)
    r, d = surface.params["r"], surface.params["d"]
    half = d / 2.0
    if half >= r:
        return analytic_sdf(surface, geometry)  # disjoint or tangent: min is exact

    xs, ys, zs = _coords(geometry)
    shape = geometry.shape
    x = np.broadcast_to(xs, shape)
    y = np.broadcast_to(ys, shape)
    z = np.broadcast_to(zs, shape)
    rho_c = math.sqrt(r * r - half * half)  # intersection circle radius, plane x = 0

    d1 = np.sqrt((x - half) ** 2 + y**2 + z**2)
    d2 = np.sqrt((x + half) ** 2 + y**2 + z**2)
    outside = np.minimum(d1, d2) >= r
    phi = np.minimum(d1 - r, d2 - r)

    big = np.inf
    # radial exit through sphere 1, valid only if it lands outside sphere 2
    with np.errstate(invalid="ignore", divide="ignore"):
        scale1 = np.where(d1 > 0, r / np.where(d1 > 0, d1, 1.0), 0.0)
        ex1 = half + (x - half) * scale1
        ey1 = y * scale1
        ez1 = z * scale1
        valid1 = (d1 < r) & (np.sqrt((ex1 + half) ** 2 + ey1**2 + ez1**2) >= r)
        cand1 = np.where(valid1, r - d1, big)
        cand1 = np.where(d1 == 0, r, cand1)  # center: any x>0 exit is valid

        scale2 = np.where(d2 > 0, r / np.where(d2 > 0, d2, 1.0), 0.0)
        ex2 = -half + (x + half) * scale2
        ey2 = y * scale2
        ez2 = z * scale2
        valid2 = (d2 < r) & (np.sqrt((ex2 - half) ** 2 + ey2**2 + ez2**2) >= r)
        cand2 = np.where(valid2, r - d2, big)
        cand2 = np.where(d2 == 0, r, cand2)

    crease = np.sqrt(x**2 + (np.sqrt(y**2 + z**2) - rho_c) ** 2)
    depth = np.minimum(np.minimum(cand1, cand2), crease)
    vals = np.where(outside, phi, -depth)
    return ScalarField(geometry, vals)


def synth_density(phi: ScalarField, rho1: float, rho2: float, eps: float) -> ScalarField:
    """Biphasic density image of an embedding: rho1 inside, rho2 outside."""
    inside = heaviside_eps(-phi.values, eps)
    return ScalarField(phi.geometry, rho1 * inside + rho2 * (1.0 - inside))


def order_estimate(err_h: float, err_h2: float) -> float:
    """Observed order of accuracy from errors at spacing h and h/2."""
    if err_h <= 0 or err_h2 <= 0:
        raise ValueError("order estimation needs strictly positive errors")
    return math.log2(err_h / err_h2)


def midphase_threshold(rho1: float, rho2: float) -> float:
    """Threshold at the phase-density midpoint, where the step crosses 1/2."""
    return 0.5 * (rho1 + rho2)
