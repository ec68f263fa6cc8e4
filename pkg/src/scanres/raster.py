"""Raster image handling: grayscale conversion, region cropping, dpi emulation.

A low-dpi scan is emulated from the 300 dpi base scan by exact area-average
box downsampling followed by nearest-neighbor upsampling back to the base
pixel grid, so that full-reference metrics can compare both images at the
same size.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    InvalidDimensions,
    InvalidImage,
    IoError,
    ParseError,
    RegionOutOfBounds,
    UpsampleNotAllowed,
    WrongRegionClass,
)

#: Canonical scan resolutions; 300 dpi is the base (native scan) resolution.
DPI_LEVELS = (100, 150, 200, 300)
BASE_DPI = 300

REGION_CLASSES = ("raster_image", "text", "other")


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grayscale raster with dpi metadata. Pixels are (height, width)."""

    pixels: np.ndarray
    dpi: int

    def __post_init__(self):
        px = self.pixels
        if not isinstance(px, np.ndarray) or px.ndim != 2:
            raise InvalidImage("pixels must be a 2D array")
        if px.size == 0:
            raise InvalidImage("image must have at least one pixel")
        if px.dtype != np.uint8:
            raise InvalidImage(f"pixels must be uint8, got {px.dtype}")
        if self.dpi not in DPI_LEVELS:
            raise InvalidImage(f"dpi must be one of {DPI_LEVELS}, got {self.dpi}")
        px.setflags(write=False)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.dpi == other.dpi and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True)
class RegionSpec:
    """A labeled page region: either a rectangle or a closed polygon.

    ``rect`` is (x, y, w, h) in pixels; ``polygon`` is a vertex list in pixel
    coordinates, filled with the even-odd rule at pixel centers.
    """

    id: str
    cls: str
    rect: tuple[int, int, int, int] | None = None
    polygon: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.cls not in REGION_CLASSES:
            raise ParseError(f"unknown region class {self.cls!r}")
        if (self.rect is None) == (self.polygon is None):
            raise ParseError("region needs exactly one of rect or polygon")
        if self.rect is not None:
            _, _, w, h = self.rect
            if w < 1 or h < 1:
                raise ParseError("rectangle must have w,h >= 1")
        if self.polygon is not None and len(self.polygon) < 3:
            raise ParseError("polygon needs at least 3 vertices")

    def bounding_box(self) -> tuple[int, int, int, int]:
        """(x, y, w, h) covering the region."""
        if self.rect is not None:
            return self.rect
        xs = [p[0] for p in self.polygon]
        ys = [p[1] for p in self.polygon]
        x0 = int(np.floor(min(xs)))
        y0 = int(np.floor(min(ys)))
        x1 = int(np.ceil(max(xs)))
        y1 = int(np.ceil(max(ys)))
        return (x0, y0, max(1, x1 - x0), max(1, y1 - y0))


@dataclass(frozen=True)
class EmulatedPair:
    """Result of emulating a low-dpi scan of a 300 dpi region."""

    native_lowres: GrayImage
    at_base: GrayImage
    dpi: int = field(default=BASE_DPI)


def to_grayscale(rgb: np.ndarray, dpi: int = BASE_DPI) -> GrayImage:
    """Convert an (H, W, 3) 8-bit image to BT.601 luma, rounded half-up."""
    rgb = np.asarray(rgb)
    if rgb.size == 0:
        raise InvalidImage("empty image")
    if rgb.ndim == 2:
        return GrayImage(rgb.astype(np.uint8), dpi)
    if rgb.ndim != 3 or rgb.shape[2] < 3:
        raise InvalidImage(f"expected (H, W, 3) image, got shape {rgb.shape}")
    r = rgb[:, :, 0].astype(np.float64)
    g = rgb[:, :, 1].astype(np.float64)
    b = rgb[:, :, 2].astype(np.float64)
    luma = np.floor(0.299 * r + 0.587 * g + 0.114 * b + 0.5)
    return GrayImage(np.clip(luma, 0, 255).astype(np.uint8), dpi)


def _polygon_mask(polygon, x0, y0, w, h) -> np.ndarray:
    """Even-odd inside mask for pixel centers of the (x0, y0, w, h) box."""
    verts = np.asarray(polygon, dtype=np.float64)
    xs = x0 + np.arange(w) + 0.5
    mask = np.zeros((h, w), dtype=bool)
    x1, y1 = verts[:, 0], verts[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    for row in range(h):
        yc = y0 + row + 0.5
        # half-open rule: an edge crosses the scanline if exactly one endpoint
        # is below it
        crosses = (y1 <= yc) != (y2 <= yc)
        if not crosses.any():
            continue
        xc = x1[crosses] + (yc - y1[crosses]) * (x2[crosses] - x1[crosses]) / (
            y2[crosses] - y1[crosses]
        )
        mask[row] = (xc[None, :] > xs[:, None]).sum(axis=1) % 2 == 1
    return mask


def crop_region(page: GrayImage, region: RegionSpec, strict: bool = False) -> GrayImage:
    """Crop a region's bounding box; polygon exteriors are filled white."""
    if strict and region.cls != "raster_image":
        raise WrongRegionClass(f"region {region.id!r} has class {region.cls!r}")
    x, y, w, h = region.bounding_box()
    if x < 0 or y < 0 or x + w > page.width or y + h > page.height:
        raise RegionOutOfBounds(
            f"region {region.id!r} bbox {(x, y, w, h)} exceeds page "
            f"{page.width}x{page.height}"
        )
    out = page.pixels[y : y + h, x : x + w].copy()
    if region.polygon is not None:
        inside = _polygon_mask(region.polygon, x, y, w, h)
        out[~inside] = 255
    return GrayImage(out, page.dpi)


def _box_weights(n_in: int, base: int, target: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer area-overlap weights for one axis of the box downsampler.

    Coordinates are scaled by ``target`` so every interval endpoint is an
    integer: source pixel k spans [k*target, (k+1)*target) and output pixel j
    spans [j*base, (j+1)*base), with the last output pixel extended to absorb
    any leftover partial source pixels.
    """
    n_out = max(1, (n_in * target) // base)
    weights = np.zeros((n_out, n_in), dtype=np.int64)
    total = np.zeros(n_out, dtype=np.int64)
    src_end_units = n_in * target
    for j in range(n_out):
        lo = j * base
        hi = (j + 1) * base if j < n_out - 1 else src_end_units
        k0 = lo // target
        k1 = (hi + target - 1) // target
        for k in range(k0, min(k1, n_in)):
            overlap = min(hi, (k + 1) * target) - max(lo, k * target)
            if overlap > 0:
                weights[j, k] = overlap
        total[j] = hi - lo
    return weights, total


def downsample_box(img: GrayImage, base_dpi: int, target_dpi: int) -> GrayImage:
    """Exact area-average downsample from base_dpi to target_dpi.

    Output dims are floor(dims * target/base) with a minimum of 1; fractional
    factors (e.g. 300->200) use fractional pixel coverage weights. Averages
    are rounded half-up. Evaluation is pure integer arithmetic, so results
    are exact and bit-deterministic.
    """
    if target_dpi > base_dpi:
        raise UpsampleNotAllowed(f"target {target_dpi} > base {base_dpi}")
    if img.dpi != base_dpi:
        raise InvalidImage(f"image dpi {img.dpi} != declared base {base_dpi}")
    if target_dpi not in DPI_LEVELS:
        raise InvalidImage(f"target dpi {target_dpi} not in {DPI_LEVELS}")
    if target_dpi == base_dpi:
        return GrayImage(img.pixels.copy(), target_dpi)

    wr, dr = _box_weights(img.height, base_dpi, target_dpi)
    wc, dc = _box_weights(img.width, base_dpi, target_dpi)
    num = wr @ img.pixels.astype(np.int64) @ wc.T
    den = np.outer(dr, dc)
    out = (2 * num + den) // (2 * den)  # round half-up, exactly
    return GrayImage(out.astype(np.uint8), target_dpi)


def upsample_nearest(
    img: GrayImage, base_dpi: int, out_width: int, out_height: int
) -> GrayImage:
    """Nearest-neighbor upsample with source index floor(dest * src / out)."""
    if out_width < 1 or out_height < 1:
        raise InvalidDimensions(f"output dims {out_width}x{out_height} invalid")
    if out_width < img.width or out_height < img.height:
        raise InvalidDimensions("nearest-neighbor upsample cannot shrink the image")
    rows = (np.arange(out_height, dtype=np.int64) * img.height) // out_height
    cols = (np.arange(out_width, dtype=np.int64) * img.width) // out_width
    return GrayImage(img.pixels[np.ix_(rows, cols)], base_dpi)


def emulate_dpi(region: GrayImage, target_dpi: int) -> EmulatedPair:
    """Emulate a target-dpi scan of a 300 dpi region.

    ``native_lowres`` is the decimated image at the candidate dpi;
    ``at_base`` is its nearest-neighbor reconstruction on the original grid.
    Emulating at 300 dpi is the identity.
    """
    if region.dpi != BASE_DPI:
        raise InvalidImage(f"emulation requires a {BASE_DPI} dpi region")
    native = downsample_box(region, BASE_DPI, target_dpi)
    at_base = upsample_nearest(native, BASE_DPI, region.width, region.height)
    return EmulatedPair(native_lowres=native, at_base=at_base, dpi=target_dpi)


def load_image(path, dpi: int = BASE_DPI) -> GrayImage:
    """Load an 8-bit grayscale or RGB PNG/PGM file as a GrayImage."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.mode in ("RGB", "RGBA", "P"):
                arr = np.asarray(im.convert("RGB"))
                return to_grayscale(arr, dpi)
            arr = np.asarray(im.convert("L"))
    except FileNotFoundError as exc:
        raise IoError(f"cannot read image {path}: {exc}") from exc
    except Exception as exc:  # Pillow raises various decode errors
        raise ParseError(f"cannot decode image {path}: {exc}") from exc
    if arr.size == 0:
        raise InvalidImage(f"empty image {path}")
    return GrayImage(arr.astype(np.uint8), dpi)


def save_image(img: GrayImage, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(img.pixels)).save(path)


def region_from_dict(obj: dict) -> RegionSpec:
    try:
        rid = str(obj["id"])
        cls = str(obj["class"])
    except KeyError as exc:
        raise ParseError(f"region missing field {exc}") from exc
    rect = obj.get("rect")
    polygon = obj.get("polygon")
    if rect is not None:
        if len(rect) != 4:
            raise ParseError(f"rect must be [x, y, w, h], got {rect}")
        return RegionSpec(rid, cls, rect=tuple(int(v) for v in rect))
    if polygon is not None:
        return RegionSpec(
            rid, cls, polygon=tuple((float(p[0]), float(p[1])) for p in polygon)
        )
    raise ParseError(f"region {rid!r} has neither rect nor polygon")


def region_to_dict(region: RegionSpec) -> dict:
    obj = {"id": region.id, "class": region.cls}
    if region.rect is not None:
        obj["rect"] = list(region.rect)
    else:
        obj["polygon"] = [[float(x), float(y)] for x, y in region.polygon]
    return obj


@dataclass(frozen=True)
class SegmentationMap:
    page: str
    dpi: int
    regions: tuple[RegionSpec, ...]


def load_segmentation(path) -> SegmentationMap:
    """Parse a segmentation JSON: {page, dpi, regions: [...]}."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise IoError(f"cannot read segmentation {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed segmentation {path}: {exc}") from exc
    try:
        return SegmentationMap(
            page=str(obj["page"]),
            dpi=int(obj["dpi"]),
            regions=tuple(region_from_dict(r) for r in obj["regions"]),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"segmentation {path} missing fields: {exc}") from exc


def save_segmentation(seg: SegmentationMap, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    obj = {
        "page": seg.page,
        "dpi": seg.dpi,
        "regions": [region_to_dict(r) for r in seg.regions],
    }
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
