"""Per-category Gaussian models in embedding space and Mahalanobis rejection."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ParseError, SynthDetError

UNKNOWN = -1


@dataclass(frozen=True, eq=False)
class CategoryGaussian:
    mean: np.ndarray
    covariance: np.ndarray
    precision: np.ndarray
    cholesky: np.ndarray
    sample_count: int

    @classmethod
    def from_moments(cls, mean, covariance, sample_count: int = 0) -> "CategoryGaussian":
        """Build from a mean and a symmetric positive-definite covariance."""
        mean = np.asarray(mean, dtype=np.float64).ravel()
        cov = np.asarray(covariance, dtype=np.float64)
        d = mean.size
        if cov.shape != (d, d):
            raise SynthDetError("dimension-mismatch", f"covariance shape {cov.shape} for d={d}")
        if not np.isfinite(cov).all() or np.abs(cov - cov.T).max() > 1e-12:
            raise SynthDetError("singular-covariance", "covariance must be finite and symmetric")
        try:
            chol = np.linalg.cholesky(cov)
            precision = np.linalg.inv(cov)
        except np.linalg.LinAlgError:
            raise SynthDetError("singular-covariance", "covariance is not positive definite") from None
        if np.linalg.norm(cov @ precision - np.eye(d), 2) >= 1e-8:
            raise SynthDetError("singular-covariance", "covariance is too ill-conditioned to invert")
        return cls(mean, cov, precision, chol, int(sample_count))


@dataclass(frozen=True, eq=False)
class GaussianCategoryModel:
    dim: int
    shrinkage: float
    categories: dict  # category_id -> CategoryGaussian

    def __contains__(self, category_id) -> bool:
        return category_id in self.categories

    def get(self, category_id) -> CategoryGaussian:
        try:
            return self.categories[category_id]
        except KeyError:
            raise SynthDetError("unknown-category", f"category {category_id} not in model") from None

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "shrinkage": self.shrinkage,
            "categories": {
                str(c): {"mean": g.mean.tolist(), "covariance": g.covariance.tolist(),
                         "precision": g.precision.tolist(), "sample_count": g.sample_count}
                for c, g in sorted(self.categories.items())
            },
        }

    @classmethod
    def from_json(cls, obj) -> "GaussianCategoryModel":
        cats = {int(c): CategoryGaussian.from_moments(g["mean"], g["covariance"], g["sample_count"])
                for c, g in obj["categories"].items()}
        return cls(int(obj["dim"]), float(obj["shrinkage"]), cats)


def regularized_covariance(samples: np.ndarray, shrinkage: float) -> np.ndarray:
    """``(1 - l) * S + l * trace(S)/d * I`` with ``S`` the unbiased sample covariance."""
    d = samples.shape[1]
    centered = samples - samples.mean(axis=0)
    s = centered.T @ centered / (samples.shape[0] - 1)
    s = (s + s.T) / 2.0
    return (1.0 - shrinkage) * s + shrinkage * (np.trace(s) / d) * np.eye(d)


def fit(labeled_features: Mapping[int, Sequence], shrinkage: float = 0.1) -> GaussianCategoryModel:
    """Fit one shrinkage-regularized Gaussian per category."""
    if not 0.0 <= shrinkage <= 1.0:
        raise SynthDetError("invalid-argument", "shrinkage must be in [0, 1]")
    if not labeled_features:
        raise SynthDetError("insufficient-samples", "no categories to fit")
    dim = None
    cats = {}
    for cid in sorted(labeled_features):
        x = np.asarray(labeled_features[cid], dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 2:
            raise SynthDetError("insufficient-samples", f"category {cid} needs >= 2 samples")
        if dim is None:
            dim = x.shape[1]
        elif x.shape[1] != dim:
            raise SynthDetError("dimension-mismatch", f"category {cid} has d={x.shape[1]}, expected {dim}")
        if dim < 1 or not np.isfinite(x).all():
            raise SynthDetError("invalid-features", f"category {cid}: features must be finite with d >= 1")
        cov = regularized_covariance(x, shrinkage)
        if shrinkage > 0 and np.trace(cov) <= 0.0:
            raise SynthDetError("degenerate-covariance", f"category {cid}: zero total variance")
        try:
            cats[int(cid)] = CategoryGaussian.from_moments(x.mean(axis=0), cov, x.shape[0])
        except SynthDetError as exc:
            if shrinkage == 1.0 or np.trace(cov) <= 0.0:
                raise SynthDetError("degenerate-covariance", f"category {cid}: {exc.message}") from None
            raise SynthDetError(exc.code, f"category {cid}: {exc.message}") from None
    return GaussianCategoryModel(dim, float(shrinkage), cats)


def mahalanobis(model: GaussianCategoryModel, category_id: int, x) -> float:
    """``sqrt((x - mu)^T Sigma^-1 (x - mu))`` via a triangular solve on the Cholesky factor."""
    g = model.get(category_id)
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size != model.dim:
        raise SynthDetError("dimension-mismatch", f"feature has d={x.size}, model d={model.dim}")
    diff = x - g.mean
    from scipy.linalg import solve_triangular

    y = solve_triangular(g.cholesky, diff, lower=True, check_finite=False)
    return math.sqrt(float(y @ y))


@dataclass(frozen=True)
class ThresholdTable:
    thresholds: dict  # category_id -> tau (float, may be +inf to disable rejection)
    quantile: float

    def __post_init__(self):
        for c, t in self.thresholds.items():
            if math.isnan(t) or t < 0:
                raise SynthDetError("invalid-threshold", f"category {c}: threshold {t}")

    def to_json(self) -> dict:
        return {"quantile": self.quantile,
                "thresholds": {str(c): t for c, t in sorted(self.thresholds.items())}}

    @classmethod
    def from_json(cls, obj) -> "ThresholdTable":
        return cls({int(c): float(t) for c, t in obj["thresholds"].items()}, float(obj["quantile"]))


def nearest_rank(values, q: float) -> float:
    ordered = sorted(values)
    return ordered[max(1, math.ceil(q * len(ordered))) - 1]


def calibrate(model: GaussianCategoryModel, held_out: Mapping[int, Sequence], q: float = 0.99) -> ThresholdTable:
    """Per-category threshold: nearest-rank ``q``-quantile of held-out distances."""
    if not 0.0 < q < 1.0:
        raise SynthDetError("invalid-argument", "quantile must be in (0, 1)")
    out = {}
    for cid, feats in held_out.items():
        model.get(cid)
        if len(feats) == 0:
            raise SynthDetError("empty-held-out", f"category {cid} has no held-out samples")
        out[int(cid)] = nearest_rank([mahalanobis(model, cid, x) for x in feats], q)
    return ThresholdTable(out, q)


def decide(model: GaussianCategoryModel, thresholds: ThresholdTable, predicted_category: int, x) -> int:
    """Keep the prediction unless its Mahalanobis distance strictly exceeds the threshold."""
    dist = mahalanobis(model, predicted_category, x)
    tau = thresholds.thresholds.get(predicted_category)
    if tau is None:
        raise SynthDetError("unknown-category", f"no threshold for category {predicted_category}")
    return UNKNOWN if dist > tau else predicted_category


def read_features(path) -> tuple[int, list[tuple[int, np.ndarray]]]:
    """Parse ``dim d`` followed by ``<category_id> v1 .. vd`` lines."""
    rows = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if dim is None:
                if len(parts) != 2 or parts[0] != "dim":
                    raise ParseError(path, lineno, "expected header 'dim <d>'")
                try:
                    dim = int(parts[1])
                except ValueError:
                    raise ParseError(path, lineno, f"bad dimension {parts[1]!r}") from None
                if dim < 1:
                    raise ParseError(path, lineno, "dimension must be >= 1")
                continue
            if len(parts) != dim + 1:
                raise ParseError(path, lineno, f"expected {dim + 1} fields, got {len(parts)}")
            try:
                vec = np.array([float(t) for t in parts[1:]])
                cid = int(parts[0])
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            if not np.isfinite(vec).all():
                raise ParseError(path, lineno, "non-finite feature value")
            rows.append((cid, vec))
    if dim is None:
        raise ParseError(path, 1, "missing 'dim' header")
    return dim, rows


def write_features(rows, dim: int, path) -> None:
    lines = [f"dim {dim}"] + [f"{c} " + " ".join(repr(float(v)) for v in vec) for c, vec in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def group_features(rows) -> dict:
    grouped: dict = {}
    for cid, vec in rows:
        grouped.setdefault(cid, []).append(vec)
    return grouped


def save_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")


def load_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
