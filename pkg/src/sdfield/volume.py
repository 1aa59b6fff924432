"""Rectilinear scalar/mask fields and the shared numerical substrate.

Fields live on a node-centered rectilinear grid: voxel ``(i, j, k)`` sits at
``origin + (i*sx, j*sy, k*sz)``.  Arrays are indexed ``values[i, j, k]`` with
``i`` along x; serialized payloads are x-fastest (the MetaImage raw layout).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage


class MetaImageError(Exception):
    """Malformed, inconsistent, or unsupported MetaImage data."""


@dataclass(frozen=True)
class GridGeometry:
    """Voxel counts, physical spacing, and world origin of a grid."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(dims) != 3 or len(spacing) != 3 or len(origin) != 3:
            raise ValueError("geometry is 3-D: dims, spacing, origin need 3 entries")
        if any(n < 1 for n in dims):
            raise ValueError(f"dims must be >= 1, got {dims}")
        if any(s <= 0 for s in spacing):
            raise ValueError(f"spacing must be > 0, got {spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.dims

    @property
    def voxel_count(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def voxel_volume(self) -> float:
        return self.spacing[0] * self.spacing[1] * self.spacing[2]

    @property
    def min_spacing(self) -> float:
        return min(self.spacing)

    @property
    def extent(self) -> tuple[float, float, float]:
        """Physical edge lengths spanned by the grid nodes, (n-1)*h per axis."""
        return tuple((n - 1) * s for n, s in zip(self.dims, self.spacing))

    @property
    def total_volume(self) -> float:
        """Physical volume of the grid extent."""
        ex, ey, ez = self.extent
        return ex * ey * ez

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing[axis] * np.arange(self.dims[axis])

    def world_points(self, indices: np.ndarray) -> np.ndarray:
        """World coordinates of voxel centers, indices shaped (..., 3)."""
        idx = np.asarray(indices, dtype=np.float64)
        return np.asarray(self.origin) + idx * np.asarray(self.spacing)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Dense real values on a grid, one per voxel, all finite."""

    geometry: GridGeometry
    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.shape != self.geometry.shape:
            raise ValueError(
                f"values shape {vals.shape} does not match dims {self.geometry.shape}"
            )
        if not np.isfinite(vals).all():
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", vals)

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.geometry, values)


@dataclass(frozen=True, eq=False)
class MaskField:
    """Boolean flags on a grid, shape-compatible with ScalarField."""

    geometry: GridGeometry
    bits: np.ndarray

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=bool)
        if bits.shape != self.geometry.shape:
            raise ValueError(
                f"bits shape {bits.shape} does not match dims {self.geometry.shape}"
            )
        object.__setattr__(self, "bits", bits)

    @property
    def count(self) -> int:
        return int(self.bits.sum())


_ELEMENT_DTYPES = {
    "MET_SHORT": np.dtype("<i2"),
    "MET_FLOAT": np.dtype("<f4"),
    "MET_DOUBLE": np.dtype("<f8"),
}

_REQUIRED_KEYS = ("ObjectType", "NDims", "DimSize", "ElementSpacing",
                  "ElementType", "ElementDataFile")


def _parse_header(path: Path) -> dict:
    header = {}
    with open(path, "r") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise MetaImageError(f"{path}: malformed header line {line!r}")
            key, _, value = line.partition("=")
            header[key.strip()] = value.strip()
            if key.strip() == "ElementDataFile":
                break
    return header


def read_metaimage(path) -> ScalarField:
    """Read an .mhd header plus raw payload into a ScalarField.

    Supports MET_SHORT / MET_FLOAT / MET_DOUBLE elements; values are converted
    to float64.  The raw payload is x-fastest.
    """
    path = Path(path)
    header = _parse_header(path)
    missing = [k for k in _REQUIRED_KEYS if k not in header]
    if missing:
        raise MetaImageError(f"{path}: missing header keys {missing}")
    if header["ObjectType"] != "Image":
        raise MetaImageError(f"{path}: unsupported ObjectType {header['ObjectType']!r}")
    if header["NDims"] != "3":
        raise MetaImageError(f"{path}: only NDims = 3 supported, got {header['NDims']}")
    if header.get("CompressedData", "False") == "True":
        raise MetaImageError(f"{path}: compressed payloads not supported")

    try:
        dims = tuple(int(tok) for tok in header["DimSize"].split())
        spacing = tuple(float(tok) for tok in header["ElementSpacing"].split())
        origin = tuple(float(tok) for tok in header.get("Offset", "0 0 0").split())
    except ValueError as exc:
        raise MetaImageError(f"{path}: unparseable numeric header field: {exc}") from exc
    if len(dims) != 3 or len(spacing) != 3 or len(origin) != 3:
        raise MetaImageError(f"{path}: DimSize/ElementSpacing/Offset need 3 entries")

    elem = header["ElementType"]
    if elem not in _ELEMENT_DTYPES:
        raise MetaImageError(f"{path}: unsupported ElementType {elem!r}")
    dtype = _ELEMENT_DTYPES[elem]
    if header.get("BinaryDataByteOrderMSB", "False") == "True":
        dtype = dtype.newbyteorder(">")

    datafile = header["ElementDataFile"]
    if datafile in ("LOCAL", "LIST"):
        raise MetaImageError(f"{path}: ElementDataFile {datafile} not supported")
    raw_path = path.parent / datafile
    if not raw_path.exists():
        raise MetaImageError(f"{path}: raw payload {raw_path} does not exist")

    payload = np.fromfile(raw_path, dtype=dtype)
    expected = dims[0] * dims[1] * dims[2]
    if payload.size != expected:
        raise MetaImageError(
            f"{raw_path}: payload has {payload.size} elements, header promises {expected}"
        )
    values = payload.astype(np.float64).reshape(dims, order="F")
    geometry = GridGeometry(dims=dims, spacing=spacing, origin=origin)
    return ScalarField(geometry, values)


def write_metaimage(field: ScalarField, path) -> None:
    """Write field as .mhd header + sibling .raw payload (MET_DOUBLE, x-fastest).

    Round-trips bit-exactly through read_metaimage.
    """
    path = Path(path)
    raw_path = path.with_suffix(".raw")
    geo = field.geometry
    lines = [
        "ObjectType = Image",
        "NDims = 3",
        "BinaryData = True",
        "BinaryDataByteOrderMSB = False",
        "CompressedData = False",
        "DimSize = {} {} {}".format(*geo.dims),
        "ElementSpacing = {:.17g} {:.17g} {:.17g}".format(*geo.spacing),
        "Offset = {:.17g} {:.17g} {:.17g}".format(*geo.origin),
        "ElementType = MET_DOUBLE",
        f"ElementDataFile = {raw_path.name}",
    ]
    path.write_text("\n".join(lines) + "\n")
    field.values.flatten(order="F").astype("<f8").tofile(raw_path)


def gaussian_smooth(field: ScalarField, sigma: float) -> ScalarField:
    """Separable Gaussian convolution with physical std ``sigma``.

    Per axis the kernel is sampled at the voxel positions, truncated at radius
    ceil(3*sigma/h), and renormalized to unit sum; boundaries mirror.  sigma=0
    returns the input unchanged.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return field
    out = field.values
    for axis in range(3):
        h = field.geometry.spacing[axis]
        radius = math.ceil(3.0 * sigma / h)
        if radius == 0:
            continue
        offsets = np.arange(-radius, radius + 1) * h
        kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
        kernel /= kernel.sum()
        out = ndimage.correlate1d(out, kernel, axis=axis, mode="mirror")
    return ScalarField(field.geometry, out)


def simpson_weights(n: int, h: float) -> np.ndarray:
    """Composite Simpson quadrature weights for n samples at spacing h.

    Even n falls back to a trapezoid on the trailing interval; n == 1 yields a
    unit weight so degenerate axes drop out of the product rule.
    """
    if n < 1:
        raise ValueError(f"need at least one sample, got {n}")
    if n == 1:
        return np.array([1.0])
    if n == 2:
        return np.array([0.5 * h, 0.5 * h])
    m = n if n % 2 == 1 else n - 1
    w = np.zeros(n)
    w[:m] = 2.0
    w[1:m:2] = 4.0
    w[0] = w[m - 1] = 1.0
    w[:m] *= h / 3.0
    if m != n:
        w[n - 2] += 0.5 * h
        w[n - 1] = 0.5 * h
    return w


def integrate_simpson(field: ScalarField) -> float:
    """Integral of the field over the grid extent by separable Simpson weights."""
    geo = field.geometry
    wx, wy, wz = (simpson_weights(geo.dims[a], geo.spacing[a]) for a in range(3))
    return float(np.einsum("i,j,k,ijk->", wx, wy, wz, field.values, optimize=True))


_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


def _apply_stencil(values: np.ndarray, axis: int, coeffs: np.ndarray, scale: float) -> np.ndarray:
    pad = [(0, 0)] * 3
    pad[axis] = (2, 2)
    padded = np.pad(values, pad, mode="reflect")
    out = np.zeros_like(values)
    n = values.shape[axis]
    for offset, c in enumerate(coeffs):
        if c == 0.0:
            continue
        sl = [slice(None)] * 3
        sl[axis] = slice(offset, offset + n)
        out += c * padded[tuple(sl)]
    return out * scale


def derivatives4(field: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    """Per-voxel gradient and Hessian via 4th-order central differences.

    Mirror boundaries.  Returns (grad, hess) with shapes dims+(3,) and
    dims+(3,3); mixed partials come from composing the first-derivative
    stencil along both axes.
    """
    geo = field.geometry
    if any(n < 5 for n in geo.dims):
        raise ValueError(f"need >= 5 voxels per axis for the stencil, got {geo.dims}")
    vals = field.values
    h = geo.spacing

    first = [_apply_stencil(vals, a, _D1, 1.0 / h[a]) for a in range(3)]
    grad = np.stack(first, axis=-1)

    hess = np.zeros(geo.shape + (3, 3))
    for a in range(3):
        hess[..., a, a] = _apply_stencil(vals, a, _D2, 1.0 / h[a] ** 2)
    for a in range(3):
        for b in range(a + 1, 3):
            cross = _apply_stencil(first[a], b, _D1, 1.0 / h[b])
            hess[..., a, b] = cross
            hess[..., b, a] = cross
    return grad, hess


def error_norms(candidate: ScalarField, truth: ScalarField, mask: MaskField) -> tuple[float, float]:
    """(l1, linf) of candidate - truth over masked voxels; l1 is the mean."""
    if candidate.geometry != truth.geometry or candidate.geometry != mask.geometry:
        raise ValueError("candidate, truth, and mask must share one geometry")
    if not mask.bits.any():
        raise ValueError("mask selects no voxels")
    diff = np.abs(candidate.values[mask.bits] - truth.values[mask.bits])
    return float(diff.mean()), float(diff.max())
