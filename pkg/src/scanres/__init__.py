"""scanres: minimum acceptable scan resolution for raster regions of
scanned documents."""

from .learn import Label, SvmClassifier, SvmModel, min_acceptable_dpi, predict
from .metrics import CANONICAL_FEATURES, FeatureVector, TILE_SIZES, extract_features
from .raster import (
    BASE_DPI,
    DPI_LEVELS,
    GrayImage,
    RegionSpec,
    crop_region,
    emulate_dpi,
)

__all__ = [
    "BASE_DPI",
    "CANONICAL_FEATURES",
    "DPI_LEVELS",
    "FeatureVector",
    "GrayImage",
    "Label",
    "RegionSpec",
    "SvmClassifier",
    "SvmModel",
    "TILE_SIZES",
    "crop_region",
    "emulate_dpi",
    "extract_features",
    "min_acceptable_dpi",
    "predict",
]

__version__ = "0.1.0"
