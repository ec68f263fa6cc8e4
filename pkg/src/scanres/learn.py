"""Soft-margin kernel SVM (SMO) fusing the region features into a decision.

The dual problem is solved by sequential minimal optimization with
first-order maximal-violating-pair working-set selection; ties break toward
the lowest sample index, so training is bit-deterministic for a fixed input
order.
"""

from __future__ import annotations

import enum
import hashlib
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import (
    DegenerateFeature,
    InvalidFeature,
    ParseError,
    VersionError,
)
from .metrics import CANONICAL_FEATURES, FeatureVector, extract_features
from .raster import GrayImage, RegionSpec, crop_region, emulate_dpi
from .validation import (
    as_float_matrix,
    as_float_vector,
    as_signed_labels,
    check_both_classes,
    check_mask,
)

MODEL_FORMAT_VERSION = 1

_KKT_TOL = 1e-3
_SV_THRESHOLD = 1e-12
_TAU = 1e-12


class Label(enum.Enum):
    ACCEPTABLE = "acceptable"
    UNACCEPTABLE = "unacceptable"

    @classmethod
    def from_value(cls, value) -> "Label":
        if isinstance(value, cls):
            return value
        for member in cls:
            if member.value == value:
                return member
        raise ParseError(f"unknown label {value!r}")


def label_from_sign(decision: float) -> Label:
    """Ties at exactly 0 count as acceptable."""
    return Label.ACCEPTABLE if decision >= 0 else Label.UNACCEPTABLE


@dataclass(frozen=True)
class NormStats:
    """Per-feature mean and population stddev from the training rows."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def identity(cls, d: int) -> "NormStats":
        return cls(mean=np.zeros(d), std=np.ones(d))


def normalize_fit(train_features, mask=None) -> NormStats:
    """Fit z-score statistics on the selected feature columns.

    Unselected columns get identity stats so the full-width transform stays
    well defined. A selected column with zero variance raises
    DegenerateFeature.
    """
    X = as_float_matrix(train_features, "train_features")
    if X.shape[0] < 2:
        raise InvalidFeature("normalization needs at least 2 samples")
    mask = check_mask(mask, X.shape[1])
    mean = np.where(mask, X.mean(axis=0), 0.0)
    std = np.where(mask, X.std(axis=0), 1.0)
    dead = mask & (std == 0.0)
    if dead.any():
        raise DegenerateFeature(
            f"zero-variance feature column(s) {np.flatnonzero(dead).tolist()}"
        )
    return NormStats(mean=mean, std=std)


def normalize_apply(x, stats: NormStats, mask=None) -> np.ndarray:
    """Z-score then drop unselected columns. Accepts a vector or a matrix."""
    arr = np.asarray(x, dtype=np.float64)
    squeeze = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if not np.all(np.isfinite(arr)):
        raise InvalidFeature("non-finite feature values")
    mask = check_mask(mask, arr.shape[1])
    z = (arr - stats.mean) / stats.std
    z = z[:, mask]
    return z[0] if squeeze else z


@dataclass
class SvmModel:
    """A trained classifier plus the preprocessing needed to apply it."""

    kernel: str
    gamma: float | None
    C: float
    feature_mask: np.ndarray
    norm_stats: NormStats
    support_vectors: np.ndarray
    dual_coefficients: np.ndarray
    bias: float
    training_digest: str = ""

    def validate(self) -> "SvmModel":
        if self.kernel not in ("linear", "rbf"):
            raise InvalidFeature(f"unknown kernel {self.kernel!r}")
        if self.kernel == "rbf" and not (self.gamma and self.gamma > 0):
            raise InvalidFeature("rbf kernel requires gamma > 0")
        if self.C <= 0:
            raise InvalidFeature("C must be positive")
        if self.support_vectors.shape[0] < 1:
            raise InvalidFeature("model has no support vectors")
        if np.any(np.abs(self.dual_coefficients) > self.C * (1 + 1e-9)):
            raise InvalidFeature("|dual coefficient| exceeds C")
        if abs(float(self.dual_coefficients.sum())) > 1e-8:
            raise InvalidFeature("dual coefficients do not sum to zero")
        used = self.feature_mask
        if np.any(self.norm_stats.std[used] <= 0):
            raise InvalidFeature("selected feature with non-positive stddev")
        return self


def _kernel_matrix(A: np.ndarray, B: np.ndarray, kernel: str, gamma: float | None):
    if kernel == "linear":
        return A @ B.T
    if kernel == "rbf":
        sq = (
            np.sum(A * A, axis=1)[:, None]
            + np.sum(B * B, axis=1)[None, :]
            - 2.0 * (A @ B.T)
        )
        return np.exp(-gamma * np.maximum(sq, 0.0))
    raise InvalidFeature(f"unknown kernel {kernel!r}")


def default_gamma(X: np.ndarray) -> float:
    """1 / (n_features * mean per-feature variance); ~1/d on z-scored data."""
    d = X.shape[1]
    mean_var = float(np.mean(X.var(axis=0)))
    if mean_var <= 0:
        return 1.0 / d
    return 1.0 / (d * mean_var)


def smo_solve(K, y, C, tol=_KKT_TOL, max_iter=200_000, debug=False):
    """Solve the soft-margin dual on a precomputed kernel matrix.

    Working-set selection is the maximal violating pair on the gradient,
    first occurrence (lowest index) on ties. Returns (alpha, bias,
    iterations).
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    Q = np.asarray(K, dtype=np.float64) * np.outer(y, y)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 0.5 a'Qa - e'a at a = 0

    pos = y > 0
    prev_objective = -np.inf
    iterations = 0
    while iterations < max_iter:
        ygrad = -y * grad
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (pos & (alpha > 0)) | (~pos & (alpha < C))
        if not up.any() or not low.any():
            break
        i = int(np.argmax(np.where(up, ygrad, -np.inf)))
        j = int(np.argmin(np.where(low, ygrad, np.inf)))
        if ygrad[i] - ygrad[j] <= tol:
            break

        old_i, old_j = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = Q[i, i] + Q[j, j] + 2.0 * Q[i, j]
            if quad <= 0:
                quad = _TAU
            delta = (-grad[i] - grad[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
            if quad <= 0:
                quad = _TAU
            delta = (grad[i] - grad[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total

        grad += Q[:, i] * (alpha[i] - old_i) + Q[:, j] * (alpha[j] - old_j)
        iterations += 1
        if debug:
            objective = float(alpha.sum() - 0.5 * alpha @ Q @ alpha)
            slack = 1e-9 * max(1.0, abs(prev_objective))
            assert objective >= prev_objective - slack, (
                f"dual objective decreased: {prev_objective} -> {objective}"
            )
            prev_objective = objective
    else:
        warnings.warn(f"SMO did not converge within {max_iter} iterations")

    bias = _compute_bias(alpha, grad, y, C)
    return alpha, bias, iterations


def _compute_bias(alpha, grad, y, C):
    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(yg[free].mean())
    else:
        upper = ((y < 0) & (alpha >= C)) | ((y > 0) & (alpha <= 0))
        lower = ((y > 0) & (alpha >= C)) | ((y < 0) & (alpha <= 0))
        ub = float(yg[upper].min()) if upper.any() else 0.0
        lb = float(yg[lower].max()) if lower.any() else 0.0
        rho = 0.5 * (ub + lb)
    return -rho


def _training_digest(X: np.ndarray, y_signed: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X).tobytes())
    h.update(np.ascontiguousarray(y_signed).tobytes())
    return h.hexdigest()


def train_svm(
    X,
    y,
    C: float = 1.0,
    kernel: str = "rbf",
    gamma: float | None = None,
    tol: float = _KKT_TOL,
    *,
    norm_stats: NormStats | None = None,
    feature_mask=None,
    debug: bool = False,
) -> SvmModel:
    """Train on already-normalized vectors; both classes must be present.

    ``norm_stats``/``feature_mask`` describe the preprocessing that produced
    X and are embedded in the model so prediction can start from raw
    canonical feature vectors; they default to the identity.
    """
    X = as_float_matrix(X)
    y_signed = as_signed_labels(y, X.shape[0])
    check_both_classes(y_signed)
    if kernel == "rbf" and gamma is None:
        gamma = default_gamma(X)
    if kernel == "linear":
        gamma = None

    K = _kernel_matrix(X, X, kernel, gamma)
    alpha, bias, _ = smo_solve(K, y_signed, C, tol=tol, debug=debug)

    sv = alpha > _SV_THRESHOLD
    if not sv.any():
        # fully non-separable degenerate corner; keep the largest alpha
        sv = alpha == alpha.max()
    if norm_stats is None:
        norm_stats = NormStats.identity(X.shape[1])
    if feature_mask is None:
        feature_mask = np.ones(norm_stats.mean.shape[0], dtype=bool)
    feature_mask = np.asarray(feature_mask, dtype=bool)

    model = SvmModel(
        kernel=kernel,
        gamma=gamma,
        C=float(C),
        feature_mask=feature_mask,
        norm_stats=norm_stats,
        support_vectors=X[sv].copy(),
        dual_coefficients=(alpha * y_signed)[sv].copy(),
        bias=float(bias),
        training_digest=_training_digest(X, y_signed),
    )
    return model.validate()


def fit_svm_model(
    features,
    labels,
    C: float = 1.0,
    kernel: str = "rbf",
    gamma: float | None = None,
    feature_mask=None,
    tol: float = _KKT_TOL,
) -> SvmModel:
    """Normalize raw feature rows, then train; the one-stop training call.

    Zero-variance feature columns cannot be z-scored and are dropped from
    the mask with a warning.
    """
    X = as_float_matrix(features)
    mask = check_mask(feature_mask, X.shape[1])
    dead = mask & (X.std(axis=0) == 0.0)
    if dead.any():
        warnings.warn(
            f"dropping zero-variance feature column(s) "
            f"{np.flatnonzero(dead).tolist()}"
        )
        mask = mask & ~dead
        if not mask.any():
            raise DegenerateFeature("all selected features have zero variance")
    stats = normalize_fit(X, mask)
    Z = normalize_apply(X, stats, mask)
    return train_svm(
        Z, labels, C=C, kernel=kernel, gamma=gamma,
        norm_stats=stats, feature_mask=mask, tol=tol,
    )


def decision_function(model: SvmModel, X) -> np.ndarray:
    """Decision values for raw (unnormalized, full-width) feature rows."""
    arr = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Z = normalize_apply(arr, model.norm_stats, model.feature_mask)
    K = _kernel_matrix(Z, model.support_vectors, model.kernel, model.gamma)
    return K @ model.dual_coefficients + model.bias


def predict(model: SvmModel, x) -> tuple[Label, float]:
    """Classify one raw feature vector; returns (label, decision value)."""
    if isinstance(x, FeatureVector):
        x = x.as_array()
    vec = as_float_vector(x)
    value = float(decision_function(model, vec[None, :])[0])
    return label_from_sign(value), value


def min_acceptable_dpi(
    model: SvmModel, page: GrayImage, region: RegionSpec, predict_fn=None
) -> int:
    """Smallest candidate dpi the model accepts for this region.

    Scans 100, 150, 200 in ascending order; 300 dpi is acceptable by
    definition (identity emulation), so it is the fallback.
    """
    predict_fn = predict_fn or predict
    crop = crop_region(page, region)
    for dpi in (100, 150, 200):
        features = extract_features(crop, emulate_dpi(crop, dpi), dpi)
        label, _ = predict_fn(model, features.as_array())
        if label is Label.ACCEPTABLE:
            return dpi
    return 300


class SvmClassifier(BaseEstimator, ClassifierMixin):
    """Estimator-style wrapper around the SMO SVM.

    Accepts labels as Label enums, their string values, or +1/-1 integers;
    predictions are returned in the same representation.
    """

    def __init__(self, C=1.0, kernel="rbf", gamma=None, feature_mask=None, tol=_KKT_TOL):
        self.C = C
        self.kernel = kernel
        self.gamma = gamma
        self.feature_mask = feature_mask
        self.tol = tol

    def fit(self, X, y):
        y = list(y)
        signed = as_signed_labels(y)
        self._pos_label = next(
            (lbl for lbl, s in zip(y, signed) if s > 0), Label.ACCEPTABLE
        )
        self._neg_label = next(
            (lbl for lbl, s in zip(y, signed) if s < 0), Label.UNACCEPTABLE
        )
        self.model_ = fit_svm_model(
            X, y, C=self.C, kernel=self.kernel, gamma=self.gamma,
            feature_mask=self.feature_mask, tol=self.tol,
        )
        return self

    def decision_function(self, X):
        return decision_function(self.model_, X)

    def predict(self, X):
        values = self.decision_function(X)
        out = [self._pos_label if v >= 0 else self._neg_label for v in values]
        try:
            return np.asarray(out)
        except ValueError:  # pragma: no cover - enum arrays
            return out


def model_to_dict(model: SvmModel) -> dict:
    return {
        "version": MODEL_FORMAT_VERSION,
        "kernel": model.kernel,
        "gamma": model.gamma,
        "C": model.C,
        "feature_mask": [bool(b) for b in model.feature_mask],
        "norm_stats": {
            "mean": [float(v) for v in model.norm_stats.mean],
            "std": [float(v) for v in model.norm_stats.std],
        },
        "support_vectors": [[float(v) for v in row] for row in model.support_vectors],
        "dual_coefficients": [float(v) for v in model.dual_coefficients],
        "bias": model.bias,
        "training_digest": model.training_digest,
        "feature_names": list(CANONICAL_FEATURES),
    }


def model_from_dict(obj: dict) -> SvmModel:
    version = obj.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise VersionError(f"unsupported model version {version!r}")
    try:
        model = SvmModel(
            kernel=obj["kernel"],
            gamma=obj["gamma"],
            C=float(obj["C"]),
            feature_mask=np.asarray(obj["feature_mask"], dtype=bool),
            norm_stats=NormStats(
                mean=np.asarray(obj["norm_stats"]["mean"], dtype=np.float64),
                std=np.asarray(obj["norm_stats"]["std"], dtype=np.float64),
            ),
            support_vectors=np.asarray(obj["support_vectors"], dtype=np.float64),
            dual_coefficients=np.asarray(obj["dual_coefficients"], dtype=np.float64),
            bias=float(obj["bias"]),
            training_digest=str(obj.get("training_digest", "")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed model document: {exc}") from exc
    return model.validate()


def save_model(model: SvmModel, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(model), indent=2, sort_keys=True) + "\n")


def load_model(path) -> SvmModel:
    try:
        obj = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ParseError(f"cannot read model {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed model JSON {path}: {exc}") from exc
    return model_from_dict(obj)
