"""Degradation models for augmentation and the SSIM-matching calibration.

Noise parameters live on [0,1]-scaled intensities (a Gaussian variance of
0.0005 is ~5.7 gray levels of stddev, plausible scan noise; on a 0-255 scale
the same number would be invisible).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidImage, TargetUnreachable
from .metrics import ssim
from .raster import GrayImage

GAUSSIAN_MAX_VARIANCE = 0.25
SALT_PEPPER_MAX_DENSITY = 0.5

NOISE_KINDS = ("gaussian", "salt_pepper")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    parameter: float
    seed: int

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise InvalidImage(f"unknown noise kind {self.kind!r}")
        if self.parameter < 0:
            raise InvalidImage("noise parameter must be >= 0")
        if self.kind == "gaussian" and self.parameter > GAUSSIAN_MAX_VARIANCE:
            raise InvalidImage(f"gaussian variance > {GAUSSIAN_MAX_VARIANCE}")
        if self.kind == "salt_pepper" and self.parameter > SALT_PEPPER_MAX_DENSITY:
            raise InvalidImage(f"salt-pepper density > {SALT_PEPPER_MAX_DENSITY}")


@dataclass(frozen=True)
class CalibrationTarget:
    """Mean-SSIM target for noise calibration.

    Defaults match the statistics of human-rated unacceptable images
    (mean 0.63, stddev 0.06); the stddev is informational only.
    """

    target_mean_ssim: float = 0.63
    tolerance: float = 0.01
    reference_std: float = 0.06

    def __post_init__(self):
        if not (0.0 < self.target_mean_ssim <= 1.0):
            raise InvalidImage("target mean SSIM must be in (0, 1]")
        if self.tolerance <= 0:
            raise InvalidImage("tolerance must be positive")


def add_gaussian(img: GrayImage, variance: float, seed) -> GrayImage:
    """Add zero-mean Gaussian noise of the given [0,1]-scale variance."""
    if variance < 0:
        raise InvalidImage("variance must be >= 0")
    rng = np.random.default_rng(seed)
    x = img.pixels.astype(np.float64) / 255.0
    y = np.clip(x + rng.normal(0.0, np.sqrt(variance), x.shape), 0.0, 1.0)
    out = np.floor(y * 255.0 + 0.5).astype(np.uint8)
    return GrayImage(out, img.dpi)


def add_salt_pepper(img: GrayImage, density: float, seed) -> GrayImage:
    """Set exactly round(density * pixels) distinct positions to 0 or 255."""
    if not (0.0 <= density <= SALT_PEPPER_MAX_DENSITY):
        raise InvalidImage(f"density must be in [0, {SALT_PEPPER_MAX_DENSITY}]")
    rng = np.random.default_rng(seed)
    n_pixels = img.pixels.size
    n = int(np.floor(density * n_pixels + 0.5))
    out = img.pixels.copy()
    if n > 0:
        positions = rng.choice(n_pixels, size=n, replace=False)
        values = rng.integers(0, 2, size=n, dtype=np.uint8) * 255
        out.flat[positions] = values
    return GrayImage(out, img.dpi)


def apply_noise(img: GrayImage, kind: str, parameter: float, seed) -> GrayImage:
    if kind == "gaussian":
        return add_gaussian(img, parameter, seed)
    if kind == "salt_pepper":
        return add_salt_pepper(img, parameter, seed)
    raise InvalidImage(f"unknown noise kind {kind!r}")


def _derived_seed(seed: int, image_index: int, eval_index: int):
    return np.random.SeedSequence(entropy=seed, spawn_key=(image_index, eval_index))


def mean_ssim_under_noise(
    images, kind: str, parameter: float, seed: int, eval_index: int = 0, noise_fn=None
) -> float:
    """Mean over images of ssim(img, noise(img, parameter)).

    Per-image noise realizations use seeds derived from
    (seed, image index, eval_index), so evaluations are reproducible.
    """
    noise_fn = noise_fn or apply_noise
    scores = [
        ssim(img, noise_fn(img, kind, parameter, _derived_seed(seed, i, eval_index)))
        for i, img in enumerate(images)
    ]
    return float(np.mean(scores))


_LADDER_STEPS = 5
_MAX_BISECTIONS = 40
_MONOTONE_SLACK = 1e-6


def calibrate_noise(
    kind: str,
    calibration_images,
    target: CalibrationTarget | float = None,
    seed: int = 0,
    noise_fn=None,
) -> float:
    """Find the noise parameter whose mean SSIM matches the target.

    Bisection over [0, p_max] under the assumption that mean SSIM is
    non-increasing in the parameter; the assumption is checked on a 5-point
    ladder and a dense grid scan is used as fallback if it fails.
    Raises TargetUnreachable when even maximal noise stays above the target.
    """
    if target is None:
        target = CalibrationTarget()
    if isinstance(target, (int, float)):
        target = CalibrationTarget(target_mean_ssim=float(target))
    images = list(calibration_images)
    if not images:
        raise InvalidImage("calibration needs at least one image")
    if kind == "gaussian":
        p_max = GAUSSIAN_MAX_VARIANCE
    elif kind == "salt_pepper":
        p_max = SALT_PEPPER_MAX_DENSITY
    else:
        raise InvalidImage(f"unknown noise kind {kind!r}")

    goal = target.target_mean_ssim
    tol = target.tolerance
    if abs(1.0 - goal) <= tol:
        return 0.0  # zero noise already matches (ssim(a, a) = 1)

    evals = 0

    def f(p):
        nonlocal evals
        value = mean_ssim_under_noise(images, kind, p, seed, evals, noise_fn)
        evals += 1
        return value

    ladder_p = [p_max * (i + 1) / _LADDER_STEPS for i in range(_LADDER_STEPS)]
    ladder_f = [f(p) for p in ladder_p]
    if ladder_f[-1] > goal:
        raise TargetUnreachable(
            f"mean SSIM {ladder_f[-1]:.4f} at max parameter {p_max} exceeds "
            f"target {goal}"
        )

    best_p, best_err = 0.0, abs(1.0 - goal)
    for p, v in zip(ladder_p, ladder_f):
        if abs(v - goal) < best_err:
            best_p, best_err = p, abs(v - goal)

    monotone = all(
        ladder_f[i + 1] <= ladder_f[i] + _MONOTONE_SLACK
        for i in range(len(ladder_f) - 1)
    )
    if not monotone:
        warnings.warn(
            "mean SSIM is not monotone in the noise parameter; "
            "falling back to grid scan",
            stacklevel=2,
        )
        for i in range(41):
            p = p_max * i / 40
            err = abs(f(p) - goal)
            if err < best_err:
                best_p, best_err = p, err
        return best_p

    lo, hi = 0.0, p_max
    for _ in range(_MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        value = f(mid)
        err = abs(value - goal)
        if err < best_err:
            best_p, best_err = mid, err
        if err <= tol * 0.25:  # converge well inside the requested tolerance
            return mid
        if value > goal:
            lo = mid
        else:
            hi = mid
    return best_p
