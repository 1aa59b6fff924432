"""High-order signed distance fields and morphometry from grayscale volumes."""

__version__ = "0.1.0"

from .volume import (
    GridGeometry,
    MaskField,
    MetaImageError,
    ScalarField,
    derivatives4,
    error_norms,
    gaussian_smooth,
    integrate_simpson,
    read_metaimage,
    simpson_weights,
    write_metaimage,
)

__all__ = [
    "__version__",
    "GridGeometry",
    "ScalarField",
    "MaskField",
    "MetaImageError",
    "read_metaimage",
    "write_metaimage",
    "gaussian_smooth",
    "simpson_weights",
    "integrate_simpson",
    "derivatives4",
    "error_norms",
]
