"""Dataset assembly: ratings, manifests, augmentation, and a synthetic corpus.

The synthetic corpus generator stands in for scanned pages plus human
ratings at desk scale: procedurally textured 300 dpi regions are scored
A-D by a proxy rater that thresholds the SSIM between the region and its
emulated low-dpi version, with seeded threshold jitter playing the role of
rater disagreement.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidFeature, IoError, ParseError, VersionError
from .evaluation import Sample
from .learn import Label
from .metrics import (
    FeatureVector,
    TILE_SIZES,
    dsa,
    edge_density,
    extract_features,
    mse_tiles,
    psd_tiles,
    ssim,
    tile_ssim,
)
from .noise import CalibrationTarget, apply_noise, calibrate_noise
from .raster import (
    BASE_DPI,
    GrayImage,
    RegionSpec,
    SegmentationMap,
    crop_region,
    emulate_dpi,
    load_image,
    load_segmentation,
    save_image,
    save_segmentation,
)

MANIFEST_FORMAT_VERSION = 1

SCORES = ("A", "B", "C", "D")

_SYNTH_TIMESTAMP = "2026-01-01T00:00:00+00:00"


@dataclass(frozen=True)
class RatingRecord:
    region_id: str
    dpi: int
    rater_id: str
    score: str
    timestamp: str

    def __post_init__(self):
        if self.score not in SCORES:
            raise ParseError(f"invalid score {self.score!r}")


@dataclass(frozen=True)
class PageEntry:
    image: str
    dpi: int
    segmentation: str
    subset: str | None = None


@dataclass(frozen=True)
class CorpusManifest:
    pages: tuple[PageEntry, ...]
    root: Path = field(default_factory=Path)

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p


def binarize(score: str, strict: bool = False) -> Label:
    """A/B -> acceptable, C/D -> unacceptable; strict mode accepts only A."""
    if score not in SCORES:
        raise ParseError(f"invalid score {score!r}")
    acceptable = ("A",) if strict else ("A", "B")
    return Label.ACCEPTABLE if score in acceptable else Label.UNACCEPTABLE


def aggregate_ratings(records, strict: bool = False) -> dict:
    """Majority vote of binarized ratings per (region_id, dpi); ties are
    unacceptable."""
    votes: dict[tuple, list[Label]] = {}
    for rec in records:
        votes.setdefault((rec.region_id, rec.dpi), []).append(
            binarize(rec.score, strict)
        )
    out = {}
    for key, labels in votes.items():
        ok = sum(1 for v in labels if v is Label.ACCEPTABLE)
        out[key] = Label.ACCEPTABLE if ok * 2 > len(labels) else Label.UNACCEPTABLE
    return out


def save_ratings(records, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rating_to_json(rec) + "\n")


def rating_to_json(rec: RatingRecord) -> str:
    obj = {
        "region_id": rec.region_id,
        "dpi": rec.dpi,
        "rater_id": rec.rater_id,
        "score": rec.score,
        "timestamp": rec.timestamp,
    }
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def load_ratings(path) -> list[RatingRecord]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError as exc:
        raise IoError(f"cannot read ratings {path}: {exc}") from exc
    records = []
    seen = set()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            rec = RatingRecord(
                region_id=str(obj["region_id"]),
                dpi=int(obj["dpi"]),
                rater_id=str(obj["rater_id"]),
                score=str(obj["score"]),
                timestamp=str(obj["timestamp"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}:{lineno}: malformed rating: {exc}") from exc
        key = (rec.region_id, rec.dpi, rec.rater_id)
        if key in seen:
            raise ParseError(f"{path}:{lineno}: duplicate rating for {key}")
        seen.add(key)
        records.append(rec)
    return records


def save_manifest(manifest: CorpusManifest, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    obj = {
        "version": MANIFEST_FORMAT_VERSION,
        "pages": [
            {
                "image": p.image,
                "dpi": p.dpi,
                "segmentation": p.segmentation,
                **({"subset": p.subset} if p.subset else {}),
            }
            for p in manifest.pages
        ],
    }
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_manifest(path, check_files: bool = True) -> CorpusManifest:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise IoError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed manifest {path}: {exc}") from exc
    version = obj.get("version")
    if version != MANIFEST_FORMAT_VERSION:
        raise VersionError(f"unsupported manifest version {version!r}")
    try:
        pages = tuple(
            PageEntry(
                image=str(p["image"]),
                dpi=int(p["dpi"]),
                segmentation=str(p["segmentation"]),
                subset=p.get("subset"),
            )
            for p in obj["pages"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"manifest {path} missing fields: {exc}") from exc
    manifest = CorpusManifest(pages=pages, root=path.parent)
    for page in pages:
        if page.dpi != BASE_DPI:
            raise ParseError(f"page {page.image!r} must be {BASE_DPI} dpi")
        if check_files:
            for rel in (page.image, page.segmentation):
                if not manifest.resolve(rel).exists():
                    raise IoError(f"manifest references missing file {rel!r}")
    return manifest


@dataclass(frozen=True)
class AugmentationPlan:
    """How many noisy copies per region, and with what parameters.

    A parameter of None means "calibrate against the SSIM target first".
    """

    gaussian_copies: int = 0
    sp_copies: int = 0
    gaussian_variance: float | None = None
    sp_density: float | None = None
    target: CalibrationTarget = field(default_factory=CalibrationTarget)
    seed: int = 0
    max_calibration_images: int = 20


def augmented_features(clean: GrayImage, noisy: GrayImage) -> FeatureVector:
    """Features of a (clean, noisy) base-resolution pair.

    Noise augmentation happens at 300 dpi, so every map lives at base
    resolution: tile 12 throughout, with edge density taken on the noisy
    image.
    """
    tile = TILE_SIZES[BASE_DPI]
    d = dsa(clean, noisy)
    mse_m, mse_s = mse_tiles(clean, noisy, tile)
    psd_m, psd_s = psd_tiles(clean, noisy, tile)
    ts_m, ts_s = tile_ssim(clean, noisy, tile)
    ed_m, ed_s = edge_density(noisy, tile)
    return FeatureVector(
        dsa=d, psd_std=psd_s, psd_mean=psd_m, ed_std=ed_s, ed_mean=ed_m,
        tssim_std=ts_s, mse_std=mse_s, tssim_mean=ts_m, mse_mean=mse_m,
    )


def _load_regions(manifest: CorpusManifest):
    """Yield (region_id, cropped 300dpi GrayImage) for raster_image regions."""
    for page in manifest.pages:
        img = load_image(manifest.resolve(page.image), page.dpi)
        seg: SegmentationMap = load_segmentation(manifest.resolve(page.segmentation))
        for region in seg.regions:
            if region.cls != "raster_image":
                continue
            yield region.id, crop_region(img, region)


def resolve_noise_parameters(plan: AugmentationPlan, crops) -> dict:
    """Fill in missing noise parameters by calibrating on the given crops."""
    params = {}
    if plan.gaussian_copies > 0:
        params["gaussian"] = (
            plan.gaussian_variance
            if plan.gaussian_variance is not None
            else calibrate_noise(
                "gaussian",
                crops[: plan.max_calibration_images],
                plan.target,
                seed=plan.seed,
            )
        )
    if plan.sp_copies > 0:
        params["salt_pepper"] = (
            plan.sp_density
            if plan.sp_density is not None
            else calibrate_noise(
                "salt_pepper",
                crops[: plan.max_calibration_images],
                plan.target,
                seed=plan.seed + 1,
            )
        )
    return params


def build_dataset(
    manifest: CorpusManifest,
    ratings: list[RatingRecord],
    plan: AugmentationPlan | None = None,
    strict_binarize: bool = False,
) -> list[Sample]:
    """Assemble rated samples (one per rated region/dpi) plus augmented ones.

    Feature failures are reported as warnings and skipped so a single bad
    region cannot abort a corpus build.
    """
    labels = aggregate_ratings(ratings, strict=strict_binarize)
    crops = dict(_load_regions(manifest))
    samples: list[Sample] = []

    for (region_id, dpi), label in sorted(labels.items()):
        crop = crops.get(region_id)
        if crop is None:
            warnings.warn(f"rated region {region_id!r} not found in manifest")
            continue
        try:
            features = extract_features(crop, emulate_dpi(crop, dpi), dpi)
        except Exception as exc:  # keep building the rest of the corpus
            warnings.warn(f"feature extraction failed for {region_id}@{dpi}: {exc}")
            continue
        samples.append(
            Sample(
                features=features, label=label, dpi=dpi,
                origin="rated", region_id=region_id,
            )
        )

    if plan is not None and (plan.gaussian_copies or plan.sp_copies):
        ordered = sorted(crops.items())
        params = resolve_noise_parameters(plan, [img for _, img in ordered])
        kind_ids = {"gaussian": 0, "salt_pepper": 1}
        copies = {"gaussian": plan.gaussian_copies, "salt_pepper": plan.sp_copies}
        for kind, parameter in params.items():
            for i, (region_id, crop) in enumerate(ordered):
                for c in range(copies[kind]):
                    seed = np.random.SeedSequence(
                        entropy=plan.seed, spawn_key=(kind_ids[kind], i, c)
                    )
                    noisy = apply_noise(crop, kind, parameter, seed)
                    try:
                        features = augmented_features(crop, noisy)
                    except Exception as exc:
                        warnings.warn(
                            f"augmented features failed for {region_id}: {exc}"
                        )
                        continue
                    samples.append(
                        Sample(
                            features=features,
                            label=Label.UNACCEPTABLE,
                            dpi=BASE_DPI,
                            origin="augmented",
                            region_id=f"{region_id}#{kind}{c}",
                        )
                    )
    return samples


# --- synthetic corpus ----------------------------------------------------

TEXTURE_KINDS = ("noise", "gradient", "halftone", "strokes")

DEFAULT_MIX = {"noise": 0.30, "gradient": 0.25, "halftone": 0.25, "strokes": 0.20}


@dataclass(frozen=True)
class SynthSpec:
    n_regions: int
    size: int = 48
    seed: int = 0
    mix: dict = field(default_factory=lambda: dict(DEFAULT_MIX))
    thresholds: tuple = (0.95, 0.80, 0.63)
    rating_jitter: float = 0.07

    def __post_init__(self):
        if self.n_regions < 4:
            raise ParseError("synthetic corpus needs at least 4 regions")
        if self.size < 24:
            raise ParseError("region size must be >= 24 px")


def _texture_noise(rng, size):
    from .metrics import _gaussian_kernel1d, _smooth_replicate

    x = rng.uniform(0, 255, (size, size))
    sigma = rng.uniform(0.8, 2.2)
    x = _smooth_replicate(x, _gaussian_kernel1d(sigma, max(2, int(3 * sigma))))
    lo = rng.uniform(10, 60)
    hi = rng.uniform(180, 245)
    return lo + (x - x.min()) / max(float(np.ptp(x)), 1e-9) * (hi - lo)


def _texture_gradient(rng, size):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    theta = rng.uniform(0, 2 * np.pi)
    ramp = np.cos(theta) * xx + np.sin(theta) * yy
    wave = 0.15 * np.sin(2 * np.pi * ramp * rng.uniform(0.5, 1.5))
    base = rng.uniform(60, 150)
    span = rng.uniform(60, 100)
    return base + span * (0.5 * (ramp - ramp.min()) / max(float(np.ptp(ramp)), 1e-9) + wave)


def _texture_halftone(rng, size):
    period = rng.uniform(6.0, 10.0)
    phase_x = rng.uniform(0, 2 * np.pi)
    phase_y = rng.uniform(0, 2 * np.pi)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dots = np.sin(2 * np.pi * xx / period + phase_x) * np.sin(
        2 * np.pi * yy / period + phase_y
    )
    base = rng.uniform(120, 170)
    amp = rng.uniform(35, 70)
    return base + amp * dots


def _texture_strokes(rng, size):
    from .metrics import _gaussian_kernel1d, _smooth_replicate

    canvas = np.full((size, size), float(rng.uniform(210, 250)))
    n_strokes = int(rng.integers(4, 9))
    for _ in range(n_strokes):
        x0, y0, x1, y1 = rng.uniform(0, size - 1, 4)
        steps = int(max(abs(x1 - x0), abs(y1 - y0)) * 2) + 2
        xs = np.clip(np.round(np.linspace(x0, x1, steps)).astype(int), 0, size - 1)
        ys = np.clip(np.round(np.linspace(y0, y1, steps)).astype(int), 0, size - 1)
        shade = rng.uniform(0, 90)
        for dx in (0, 1):  # 2 px wide strokes survive mild downsampling
            for dy in (0, 1):
                canvas[np.clip(ys + dy, 0, size - 1), np.clip(xs + dx, 0, size - 1)] = shade
    return _smooth_replicate(canvas, _gaussian_kernel1d(0.8, 2))


_TEXTURES = {
    "noise": _texture_noise,
    "gradient": _texture_gradient,
    "halftone": _texture_halftone,
    "strokes": _texture_strokes,
}


def _make_region(kind, rng, size) -> GrayImage:
    x = np.clip(_TEXTURES[kind](rng, size), 0, 255)
    return GrayImage(np.floor(x + 0.5).astype(np.uint8), BASE_DPI)


def _proxy_scores(region: GrayImage, spec: SynthSpec, rng):
    """Score each dpi by thresholding SSIM with jittered thresholds.

    Returns None when the binarized labels are not monotone in dpi (caller
    regenerates the region).
    """
    scores = {}
    acceptable_so_far = True
    for dpi in (300, 200, 150, 100):
        s = 1.0 if dpi == BASE_DPI else ssim(region, emulate_dpi(region, dpi).at_base)
        a, b, c = (t + rng.normal(0, spec.rating_jitter) for t in spec.thresholds)
        a = min(a, 0.999)
        b = min(b, a - 1e-3)
        c = min(c, b - 1e-3)
        score = "A" if s >= a else "B" if s >= b else "C" if s >= c else "D"
        acceptable = score in ("A", "B")
        if acceptable and not acceptable_so_far:
            return None  # label improved as dpi decreased
        acceptable_so_far = acceptable
        scores[dpi] = score
    return scores


def synth_corpus(spec: SynthSpec, out_dir) -> tuple[Path, Path]:
    """Generate a synthetic corpus; returns (manifest path, ratings path)."""
    out_dir = Path(out_dir)
    (out_dir / "pages").mkdir(parents=True, exist_ok=True)
    (out_dir / "seg").mkdir(parents=True, exist_ok=True)

    kinds = sorted(spec.mix)
    weights = np.asarray([spec.mix[k] for k in kinds], dtype=np.float64)
    weights = weights / weights.sum()

    pages = []
    records = []
    for idx in range(spec.n_regions):
        pick_rng = np.random.default_rng(
            np.random.SeedSequence(entropy=spec.seed, spawn_key=(idx,))
        )
        kind = kinds[int(pick_rng.choice(len(kinds), p=weights))]
        region = None
        scores = None
        for attempt in range(50):
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=spec.seed, spawn_key=(idx, attempt))
            )
            region = _make_region(kind, rng, spec.size)
            scores = _proxy_scores(region, spec, rng)
            if scores is not None:
                break
        if scores is None:
            raise RuntimeError(f"could not generate monotone region {idx}")

        region_id = f"r{idx:04d}"
        image_rel = f"pages/{region_id}.png"
        seg_rel = f"seg/{region_id}.json"
        save_image(region, out_dir / image_rel)
        save_segmentation(
            SegmentationMap(
                page=image_rel,
                dpi=BASE_DPI,
                regions=(
                    RegionSpec(
                        id=region_id,
                        cls="raster_image",
                        rect=(0, 0, spec.size, spec.size),
                    ),
                ),
            ),
            out_dir / seg_rel,
        )
        pages.append(
            PageEntry(image=image_rel, dpi=BASE_DPI, segmentation=seg_rel, subset=kind)
        )
        for dpi in (300, 200, 150, 100):
            records.append(
                RatingRecord(
                    region_id=region_id,
                    dpi=dpi,
                    rater_id="proxy",
                    score=scores[dpi],
                    timestamp=_SYNTH_TIMESTAMP,
                )
            )

    manifest = CorpusManifest(pages=tuple(pages), root=out_dir)
    manifest_path = out_dir / "manifest.json"
    ratings_path = out_dir / "ratings.jsonl"
    save_manifest(manifest, manifest_path)
    save_ratings(records, ratings_path)
    return manifest_path, ratings_path


# --- sample persistence ---------------------------------------------------

SAMPLE_CSV_HEADER = ["region_id", "dpi", "origin", "label"] + [
    f"f{i}" for i in range(9)
]


def samples_to_csv(samples) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SAMPLE_CSV_HEADER)
    for s in samples:
        writer.writerow(
            [s.region_id, s.dpi, s.origin, s.label.value]
            + [repr(float(v)) for v in s.features.as_array()]
        )
    return buf.getvalue()


def save_samples(samples, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(samples_to_csv(samples), encoding="utf-8")


def load_samples(path) -> list[Sample]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise IoError(f"cannot read samples {path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration as exc:
        raise ParseError(f"{path}: empty samples file") from exc
    if header != SAMPLE_CSV_HEADER:
        raise ParseError(f"{path}: unexpected header {header}")
    samples = []
    for lineno, row in enumerate(reader, 2):
        if not row:
            continue
        try:
            samples.append(
                Sample(
                    features=FeatureVector.from_array([float(v) for v in row[4:13]]),
                    label=Label.from_value(row[3]),
                    dpi=int(row[1]),
                    origin=row[2],
                    region_id=row[0],
                )
            )
        except (ValueError, IndexError, InvalidFeature) as exc:
            raise ParseError(f"{path}:{lineno}: malformed sample row: {exc}") from exc
    return samples
