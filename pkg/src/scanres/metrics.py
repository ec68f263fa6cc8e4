"""The nine region-quality features and the reference SSIM.

Full-reference features (DSA, MSE, PSD, Tile-SSIM) compare the 300 dpi
region against the emulated low-dpi image resized back to base scale and are
tiled at the base-resolution tile size (12). The no-reference edge-density
pair is computed on the decimated image at the candidate dpi, tiled at that
dpi's tile size, which keeps the physical tile extent constant.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .errors import DimMismatch, ImageTooSmall, InvalidFeature, MapTooSmall
from .raster import BASE_DPI, DPI_LEVELS, EmulatedPair, GrayImage

#: Tile size per dpi; keeps tiles at ~0.04 inch regardless of resolution.
TILE_SIZES = {300: 12, 200: 8, 150: 6, 100: 4}

#: Canonical feature order (index 0..8), fixed once for masks and CSV columns.
CANONICAL_FEATURES = (
    "dsa",
    "psd_std",
    "psd_mean",
    "ed_std",
    "ed_mean",
    "tssim_std",
    "mse_std",
    "tssim_mean",
    "mse_mean",
)

# SSIM stabilization constants for 8-bit dynamic range (K1=0.01, K2=0.03).
_SSIM_C1 = (0.01 * 255.0) ** 2
_SSIM_C2 = (0.03 * 255.0) ** 2


def tile_size_for_dpi(dpi: int) -> int:
    if dpi not in TILE_SIZES:
        raise InvalidFeature(f"dpi {dpi} not in {sorted(TILE_SIZES)}")
    return TILE_SIZES[dpi]


@dataclass(frozen=True)
class FeatureVector:
    """The nine features of one (region, candidate dpi) pair, canonical order."""

    dsa: float
    psd_std: float
    psd_mean: float
    ed_std: float
    ed_mean: float
    tssim_std: float
    mse_std: float
    tssim_mean: float
    mse_mean: float

    def __post_init__(self):
        arr = self.as_array()
        if not np.all(np.isfinite(arr)):
            raise InvalidFeature(f"non-finite feature entries: {arr}")
        eps = 1e-9
        nonneg = (self.dsa, self.psd_std, self.psd_mean, self.ed_std,
                  self.tssim_std, self.mse_std, self.mse_mean)
        if min(nonneg) < -eps:
            raise InvalidFeature(f"negative magnitude feature: {arr}")
        if not (-eps <= self.ed_mean <= 1 + eps and -eps <= self.ed_std <= 1 + eps):
            raise InvalidFeature(f"edge density outside [0,1]: {arr}")
        if not (-1 - eps <= self.tssim_mean <= 1 + eps):
            raise InvalidFeature(f"tssim_mean outside [-1,1]: {arr}")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "FeatureVector":
        arr = np.asarray(arr, dtype=np.float64).ravel()
        if arr.shape[0] != len(CANONICAL_FEATURES):
            raise InvalidFeature(f"expected 9 features, got {arr.shape[0]}")
        return cls(*(float(v) for v in arr))


def tile_partition(field2d: np.ndarray, tile: int) -> list[np.ndarray]:
    """Split a 2D field into full tile x tile blocks, row-major.

    Partial blocks at the right/bottom edges are discarded.
    """
    field2d = np.asarray(field2d)
    h, w = field2d.shape
    if h < tile or w < tile:
        raise MapTooSmall(f"map {h}x{w} smaller than tile {tile}")
    return [
        field2d[r * tile : (r + 1) * tile, c * tile : (c + 1) * tile]
        for r in range(h // tile)
        for c in range(w // tile)
    ]


def tile_stats(per_tile: list[float] | np.ndarray) -> tuple[float, float]:
    """Arithmetic mean and population stddev of per-tile scalars."""
    arr = np.asarray(per_tile, dtype=np.float64)
    if arr.size == 0:
        raise MapTooSmall("no tiles to aggregate")
    return float(np.mean(arr)), float(np.std(arr))


def _shifted_views(padded: np.ndarray, h: int, w: int):
    return {(dr, dc): padded[dr : dr + h, dc : dc + w] for dr in range(3) for dc in range(3)}


def sobel_magnitude(img: GrayImage | np.ndarray) -> np.ndarray:
    """Gradient magnitude sqrt(Gx^2 + Gy^2) with 3x3 Sobel kernels.

    Border pixels use replicate padding.
    """
    x = _pixels(img)
    h, w = x.shape
    if h < 3 or w < 3:
        raise ImageTooSmall(f"sobel needs >= 3x3, got {h}x{w}")
    p = np.pad(x, 1, mode="edge")
    v = _shifted_views(p, h, w)
    gx = (v[0, 2] + 2 * v[1, 2] + v[2, 2]) - (v[0, 0] + 2 * v[1, 0] + v[2, 0])
    gy = (v[2, 0] + 2 * v[2, 1] + v[2, 2]) - (v[0, 0] + 2 * v[0, 1] + v[0, 2])
    return np.hypot(gx, gy)


def dsa(ref: GrayImage, test: GrayImage) -> float:
    """Differential spatial activity: RMS difference of Sobel magnitude maps."""
    _check_same_dims(ref, test)
    d = sobel_magnitude(ref) - sobel_magnitude(test)
    return float(np.sqrt(np.mean(d * d)))


def mse_tiles(ref: GrayImage, test: GrayImage, tile: int) -> tuple[float, float]:
    """Mean/stddev over tiles of the per-tile mean squared pixel difference."""
    _check_same_dims(ref, test)
    diff2 = (_pixels(ref) - _pixels(test)) ** 2
    return tile_stats([float(np.mean(t)) for t in tile_partition(diff2, tile)])


def _power_spectrum(tile: np.ndarray) -> np.ndarray:
    f = np.fft.fft2(tile)
    return (f.real * f.real + f.imag * f.imag) / tile.size


def psd_tiles(ref: GrayImage, test: GrayImage, tile: int) -> tuple[float, float]:
    """Mean/stddev over tiles of the power-spectrum difference.

    Per tile pair: mean over frequency bins of |P_ref - P_test| where
    P = |DFT|^2 / tile_pixels.
    """
    _check_same_dims(ref, test)
    ref_tiles = tile_partition(_pixels(ref), tile)
    test_tiles = tile_partition(_pixels(test), tile)
    scalars = [
        float(np.mean(np.abs(_power_spectrum(a) - _power_spectrum(b))))
        for a, b in zip(ref_tiles, test_tiles)
    ]
    return tile_stats(scalars)


def _gaussian_kernel1d(sigma: float, radius: int) -> np.ndarray:
    d = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(d * d) / (2.0 * sigma * sigma))
    return k / k.sum()


def _smooth_replicate(x: np.ndarray, k1d: np.ndarray) -> np.ndarray:
    """Separable correlation with replicate padding, same-size output."""
    r = (len(k1d) - 1) // 2
    p = np.pad(x, ((r, r), (0, 0)), mode="edge")
    t = sliding_window_view(p, len(k1d), axis=0) @ k1d
    p = np.pad(t, ((0, 0), (r, r)), mode="edge")
    return sliding_window_view(p, len(k1d), axis=1) @ k1d


def _sobel_components(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h, w = x.shape
    p = np.pad(x, 1, mode="edge")
    v = _shifted_views(p, h, w)
    gx = (v[0, 2] + 2 * v[1, 2] + v[2, 2]) - (v[0, 0] + 2 * v[1, 0] + v[2, 0])
    gy = (v[2, 0] + 2 * v[2, 1] + v[2, 2]) - (v[0, 0] + 2 * v[0, 1] + v[0, 2])
    return gx, gy


def _non_max_suppression(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    h, w = mag.shape
    padded = np.pad(mag, 1, mode="constant")  # out-of-bounds neighbors are 0

    def nb(dr, dc):
        return padded[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w]

    ang = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    sector0 = (ang < 22.5) | (ang >= 157.5)          # horizontal gradient
    sector45 = (ang >= 22.5) & (ang < 67.5)          # diagonal down-right
    sector90 = (ang >= 67.5) & (ang < 112.5)         # vertical gradient
    sector135 = (ang >= 112.5) & (ang < 157.5)       # diagonal down-left

    keep = np.zeros_like(mag, dtype=bool)
    keep |= sector0 & (mag >= nb(0, 1)) & (mag >= nb(0, -1))
    keep |= sector45 & (mag >= nb(1, 1)) & (mag >= nb(-1, -1))
    keep |= sector90 & (mag >= nb(1, 0)) & (mag >= nb(-1, 0))
    keep |= sector135 & (mag >= nb(1, -1)) & (mag >= nb(-1, 1))
    return np.where(keep, mag, 0.0)


def canny_edges(img: GrayImage | np.ndarray) -> np.ndarray:
    """Binary Canny edge map (1 = edge).

    Gaussian smoothing (sigma 1.0, 5x5), Sobel gradients, non-maximum
    suppression, hysteresis at 0.1/0.2 of the maximum gradient magnitude.
    """
    x = _pixels(img)
    h, w = x.shape
    if h < 5 or w < 5:
        raise ImageTooSmall(f"canny needs >= 5x5, got {h}x{w}")
    smoothed = _smooth_replicate(x, _gaussian_kernel1d(1.0, 2))
    gx, gy = _sobel_components(smoothed)
    mag = np.hypot(gx, gy)
    peak = float(mag.max())
    if peak == 0.0:
        return np.zeros((h, w), dtype=np.uint8)
    nms = _non_max_suppression(mag, gx, gy)
    strong = nms >= 0.2 * peak
    weak = nms >= 0.1 * peak
    if not strong.any():
        return np.zeros((h, w), dtype=np.uint8)
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    keep = np.unique(labels[strong])
    return (weak & np.isin(labels, keep)).astype(np.uint8)


def tile_fraction_stats(binary_map: np.ndarray, tile: int) -> tuple[float, float]:
    """Mean/stddev over tiles of the fraction of set pixels in a binary map."""
    field2d = np.asarray(binary_map, dtype=np.float64)
    return tile_stats([float(np.mean(t)) for t in tile_partition(field2d, tile)])


def edge_density(native_lowres: GrayImage, tile: int) -> tuple[float, float]:
    """Mean/stddev over tiles of the fraction of Canny edge pixels."""
    return tile_fraction_stats(canny_edges(native_lowres), tile)


def ssim(ref: GrayImage, test: GrayImage) -> float:
    """Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), L=255.

    The mean is taken over valid window positions only.
    """
    _check_same_dims(ref, test)
    x = _pixels(ref)
    y = _pixels(test)
    h, w = x.shape
    if h < 11 or w < 11:
        raise ImageTooSmall(f"ssim needs >= 11x11, got {h}x{w}")
    k = _gaussian_kernel1d(1.5, 5)

    def valid_filter(a):
        t = sliding_window_view(a, 11, axis=0) @ k
        return sliding_window_view(t, 11, axis=1) @ k

    mu_x = valid_filter(x)
    mu_y = valid_filter(y)
    sxx = valid_filter(x * x) - mu_x * mu_x
    syy = valid_filter(y * y) - mu_y * mu_y
    sxy = valid_filter(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + _SSIM_C1) * (2 * sxy + _SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + _SSIM_C1) * (sxx + syy + _SSIM_C2)
    return float(np.mean(num / den))


def _tile_ssim_scalar(a: np.ndarray, b: np.ndarray) -> float:
    mx, my = a.mean(), b.mean()
    vx = (a * a).mean() - mx * mx
    vy = (b * b).mean() - my * my
    cxy = (a * b).mean() - mx * my
    num = (2 * mx * my + _SSIM_C1) * (2 * cxy + _SSIM_C2)
    den = (mx * mx + my * my + _SSIM_C1) * (vx + vy + _SSIM_C2)
    return float(num / den)


def tile_ssim(ref: GrayImage, test: GrayImage, tile: int) -> tuple[float, float]:
    """Mean/stddev over tiles of per-tile SSIM with one uniform window per tile."""
    _check_same_dims(ref, test)
    if tile < 4:
        raise MapTooSmall(f"tile-ssim needs tile >= 4, got {tile}")
    ref_tiles = tile_partition(_pixels(ref), tile)
    test_tiles = tile_partition(_pixels(test), tile)
    return tile_stats([_tile_ssim_scalar(a, b) for a, b in zip(ref_tiles, test_tiles)])


def extract_features(ref: GrayImage, pair: EmulatedPair, dpi: int) -> FeatureVector:
    """Assemble the nine features for one (region, candidate dpi) pair."""
    if ref.dpi != BASE_DPI:
        raise InvalidFeature(f"reference must be {BASE_DPI} dpi, got {ref.dpi}")
    if dpi not in DPI_LEVELS:
        raise InvalidFeature(f"dpi {dpi} not in {DPI_LEVELS}")
    base_tile = TILE_SIZES[BASE_DPI]
    d = dsa(ref, pair.at_base)
    mse_m, mse_s = mse_tiles(ref, pair.at_base, base_tile)
    psd_m, psd_s = psd_tiles(ref, pair.at_base, base_tile)
    ts_m, ts_s = tile_ssim(ref, pair.at_base, base_tile)
    ed_m, ed_s = edge_density(pair.native_lowres, TILE_SIZES[dpi])
    return FeatureVector(
        dsa=d,
        psd_std=psd_s,
        psd_mean=psd_m,
        ed_std=ed_s,
        ed_mean=ed_m,
        tssim_std=ts_s,
        mse_std=mse_s,
        tssim_mean=ts_m,
        mse_mean=mse_m,
    )


def _pixels(img: GrayImage | np.ndarray) -> np.ndarray:
    if isinstance(img, GrayImage):
        return img.pixels.astype(np.float64)
    return np.asarray(img, dtype=np.float64)


def _check_same_dims(ref: GrayImage, test: GrayImage) -> None:
    if (ref.height, ref.width) != (test.height, test.width):
        raise DimMismatch(
            f"image dims differ: {ref.height}x{ref.width} vs {test.height}x{test.width}"
        )
