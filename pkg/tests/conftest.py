import numpy as np
import pytest

from sdfield.volume import GridGeometry, ScalarField


def cube_geometry(h: float, side: float = 20.0) -> GridGeometry:
    """Node-centered grid on [-side/2, side/2]^3 with spacing h; nests under h -> h/2."""
    n = int(round(side / h)) + 1
    return GridGeometry(dims=(n, n, n), spacing=(h, h, h), origin=(-side / 2,) * 3)


def coordinate_grids(geometry: GridGeometry):
    xs = geometry.axis_coords(0)[:, None, None]
    ys = geometry.axis_coords(1)[None, :, None]
    zs = geometry.axis_coords(2)[None, None, :]
    return xs, ys, zs


def field_from_function(geometry: GridGeometry, fn) -> ScalarField:
    xs, ys, zs = coordinate_grids(geometry)
    return ScalarField(geometry, np.broadcast_to(fn(xs, ys, zs), geometry.shape).copy())


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
