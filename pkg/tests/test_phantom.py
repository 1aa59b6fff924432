import math

import numpy as np
import pytest

from sdfield.phantom import (
    AnalyticSurface,
    analytic_sdf,
    midphase_threshold,
    order_estimate,
    surface_distance_truth,
    synth_density,
)
from sdfield.volume import derivatives4

from conftest import cube_geometry, coordinate_grids


def test_surface_validation():
    with pytest.raises(ValueError):
        AnalyticSurface.sphere(r=-1.0)
    with pytest.raises(ValueError):
        AnalyticSurface.torus(a=3.0, c=2.0)  # not embedded
    with pytest.raises(ValueError):
        AnalyticSurface("blob")


def test_sphere_sdf_center_value():
    geo = cube_geometry(1.0)
    phi = analytic_sdf(AnalyticSurface.sphere(5.0), geo)
    assert phi.values[10, 10, 10] == pytest.approx(-5.0)


def test_torus_sdf_anchor_values():
    geo = cube_geometry(1.0)
    phi = analytic_sdf(AnalyticSurface.torus(a=2.0, c=3.0), geo)
    # (5, 0, 0) is on the outer equator; origin is c - a = 1 away from the tube
    assert phi.values[15, 10, 10] == pytest.approx(0.0, abs=1e-12)
    assert phi.values[10, 10, 10] == pytest.approx(1.0)


def test_double_spheres_midpoint_value():
    geo = cube_geometry(0.5)
    phi = analytic_sdf(AnalyticSurface.double_spheres(), geo)
    center = tuple(n // 2 for n in geo.dims)
    assert phi.values[center] == pytest.approx(3 * math.sqrt(3) / 2 - 5, abs=1e-12)
    assert phi.values[center] == pytest.approx(-2.4019, abs=1e-4)


def test_double_spheres_truth_matches_min_outside_and_deepens_lens():
    geo = cube_geometry(0.25)
    surf = AnalyticSurface.double_spheres()
    min_sdf = analytic_sdf(surf, geo)
    truth = surface_distance_truth(surf, geo)
    outside = min_sdf.values > 0
    assert np.array_equal(truth.values[outside], min_sdf.values[outside])
    # interior midpoint: nearest boundary is the intersection circle
    center = tuple(n // 2 for n in geo.dims)
    r, d = surf.params["r"], surf.params["d"]
    rho_c = math.sqrt(r**2 - (d / 2) ** 2)
    assert truth.values[center] == pytest.approx(-rho_c, abs=1e-12)
    # truth is never shallower than the min construction
    assert np.all(truth.values <= min_sdf.values + 1e-12)
    # deep inside one sphere only, away from dissolved caps, the two agree
    xs, ys, zs = coordinate_grids(geo)
    x = np.broadcast_to(xs, geo.shape)
    near_far_pole = (x > 5.0) & (min_sdf.values < -0.5)
    assert np.allclose(truth.values[near_far_pole], min_sdf.values[near_far_pole])


def test_disjoint_double_spheres_truth_is_min():
    geo = cube_geometry(0.5)
    surf = AnalyticSurface.double_spheres(r=3.0, d=10.0)
    assert np.array_equal(
        surface_distance_truth(surf, geo).values, analytic_sdf(surf, geo).values
    )


@pytest.mark.parametrize(
    "surface, exclude",
    [
        (AnalyticSurface.sphere(5.0), lambda x, y, z: np.sqrt(x**2 + y**2 + z**2) < 2.0),
        (
            AnalyticSurface.torus(2.0, 3.0),
            lambda x, y, z: (np.sqrt((np.sqrt(x**2 + y**2) - 3.0) ** 2 + z**2) < 1.9)
            | (np.sqrt(x**2 + y**2) < 1.9),
        ),
        (
            AnalyticSurface.double_spheres(),
            lambda x, y, z: (np.abs(x) < 1.0)
            | (np.sqrt((x - 2.598) ** 2 + y**2 + z**2) < 2.0)
            | (np.sqrt((x + 2.598) ** 2 + y**2 + z**2) < 2.0),
        ),
    ],
    ids=["sphere", "torus", "double_spheres"],
)
def test_sdf_gradient_magnitude_is_one(surface, exclude):
    # medial sets and surface corners excluded with a fixed physical margin:
    # the stencil error grows like h^4 / r^4 approaching the singular sets
    geo = cube_geometry(0.25)
    phi = analytic_sdf(surface, geo)
    grad, _ = derivatives4(phi)
    gmag = np.sqrt((grad**2).sum(axis=-1))
    xs, ys, zs = coordinate_grids(geo)
    bad = np.broadcast_to(exclude(xs, ys, zs), geo.shape).copy()
    collar = 2
    keep = np.zeros(geo.shape, dtype=bool)
    keep[collar:-collar, collar:-collar, collar:-collar] = True
    keep &= ~bad
    assert np.max(np.abs(gmag[keep] - 1.0)) <= 1e-3


def test_synth_density_saturation_and_range():
    geo = cube_geometry(0.5)
    phi = analytic_sdf(AnalyticSurface.sphere(5.0), geo)
    rho = synth_density(phi, 100.0, 0.0, eps=2.0)
    assert np.allclose(rho.values[phi.values < -3.0], 100.0)
    assert np.allclose(rho.values[phi.values > 3.0], 0.0)
    assert rho.values.min() >= 0.0 and rho.values.max() <= 100.0
    swapped = synth_density(phi, 0.0, 100.0, eps=2.0)
    assert swapped.values.min() >= 0.0 and swapped.values.max() <= 100.0


def test_synth_density_midphase_value_on_surface():
    geo = cube_geometry(0.5)
    phi = analytic_sdf(AnalyticSurface.sphere(5.0), geo)
    rho = synth_density(phi, 100.0, 0.0, eps=2.0)
    on_surface = np.isclose(np.abs(phi.values), 0.0, atol=1e-12)
    assert on_surface.any()
    assert np.allclose(rho.values[on_surface], 50.0)


def test_order_estimate():
    assert order_estimate(0.4, 0.1) == pytest.approx(2.0)
    assert order_estimate(0.3, 0.3) == pytest.approx(0.0)
    assert order_estimate(6.43e-5, 3.26e-6) == pytest.approx(4.30, abs=0.005)
    assert order_estimate(7 * 0.4, 7 * 0.1) == pytest.approx(order_estimate(0.4, 0.1))
    with pytest.raises(ValueError):
        order_estimate(0.0, 0.1)
    with pytest.raises(ValueError):
        order_estimate(0.1, -0.1)


def test_midphase_threshold():
    assert midphase_threshold(100.0, 0.0) == 50.0
    assert midphase_threshold(3.5, 3.5) == 3.5
    assert midphase_threshold(646.6, 3.8) == pytest.approx(325.2)
