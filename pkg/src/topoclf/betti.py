"""Betti-curve features and their analysis exports.

Persistence diagrams become fixed-length count vectors by evaluating the
alive-feature count (birth <= t < death) on an inclusive, evenly spaced
threshold grid. Labelled feature matrices round-trip through CSV with a JSON
metadata sidecar, and the module carries the two analysis exports consumed by
external plotting: a 3-component PCA (cyclic Jacobi eigendecomposition) and
per-sample class aggregates.
"""

from __future__ import annotations

import json
import math
import multiprocessing
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cubical import PersistenceDiagram, build_sublevel_filtration, compute_persistence
from .image_io import LabeledSample

__all__ = [
    "BinSpec",
    "FeatureDataset",
    "JacobiConvergenceError",
    "betti_curve",
    "extract_feature_vector",
    "build_feature_dataset",
    "save_feature_csv",
    "load_feature_csv",
    "jacobi_eigh",
    "pca_project",
    "class_distribution_rows",
    "save_distribution_csv",
]


class JacobiConvergenceError(RuntimeError):
    """Jacobi sweeps exhausted before the off-diagonal mass vanished."""


@dataclass(frozen=True)
class BinSpec:
    """Evenly spaced threshold grid, inclusive of both endpoints."""

    count: int = 100
    lo: float = 0.0
    hi: float = 255.0

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError(f"bin count must be >= 1, got {self.count}")
        if not self.lo < self.hi:
            raise ValueError(f"bin range must satisfy lo < hi, got [{self.lo}, {self.hi}]")

    def centers(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.count)


@dataclass(frozen=True, eq=False)
class FeatureDataset:
    """Aligned feature rows, labels, and sample ids for one dataset."""

    features: np.ndarray  # (N, 2 * bin count) int64 counts, beta0 then beta1
    labels: np.ndarray  # (N,) class indices
    sample_ids: tuple[str, ...]
    bin_spec: BinSpec
    class_names: tuple[str, ...]

    def __post_init__(self) -> None:
        feats = np.asarray(self.features, dtype=np.int64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2 or feats.shape[1] != 2 * self.bin_spec.count:
            raise ValueError(
                f"feature matrix must be N x {2 * self.bin_spec.count}, got {feats.shape}"
            )
        n = feats.shape[0]
        sample_ids = tuple(self.sample_ids)
        class_names = tuple(self.class_names)
        if labels.shape != (n,) or len(sample_ids) != n:
            raise ValueError("features, labels, and sample_ids must have equal length")
        if len(set(sample_ids)) != n:
            raise ValueError("sample_ids must be unique")
        if n and (labels.min() < 0 or labels.max() >= len(class_names)):
            raise ValueError("label out of range for the declared classes")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "sample_ids", sample_ids)
        object.__setattr__(self, "class_names", class_names)

    def __len__(self) -> int:
        return int(self.features.shape[0])


def betti_curve(pd: PersistenceDiagram, bins: BinSpec = BinSpec()) -> np.ndarray:
    """Count of features alive at each bin centre: birth <= t < death."""
    centers = bins.centers()
    out = np.zeros(bins.count, dtype=np.int64)
    for birth, death in pd.pairs:
        out += (birth <= centers) & (centers < death)
    return out


def extract_feature_vector(img, bins: BinSpec = BinSpec()) -> np.ndarray:
    """Concatenated beta0 ++ beta1 curves of the image's sublevel filtration."""
    pd0, pd1 = compute_persistence(build_sublevel_filtration(img))
    return np.concatenate([betti_curve(pd0, bins), betti_curve(pd1, bins)])


def build_feature_dataset(
    samples: Sequence[LabeledSample],
    bins: BinSpec,
    class_names: Sequence[str],
    workers: int | None = None,
) -> FeatureDataset:
    """Extract features for every sample, preserving input order.

    ``workers > 1`` runs the per-image extraction in a process pool; rows are
    reassembled in input order, so the worker count never changes the result.
    """
    if not samples:
        raise ValueError("cannot build a feature dataset from zero samples")
    pixel_arrays = [s.image.pixels for s in samples]
    extract = partial(_extract_row, bins=bins)
    if workers is not None and workers > 1 and len(samples) > 1:
        ctx = multiprocessing.get_context()
        with ctx.Pool(min(workers, len(samples))) as pool:
            rows = pool.map(extract, pixel_arrays, chunksize=8)
    else:
        rows = [extract(px) for px in pixel_arrays]
    return FeatureDataset(
        features=np.stack(rows),
        labels=np.array([s.label for s in samples], dtype=np.int64),
        sample_ids=tuple(s.sample_id for s in samples),
        bin_spec=bins,
        class_names=tuple(class_names),
    )


def _extract_row(pixels: np.ndarray, bins: BinSpec) -> np.ndarray:
    return extract_feature_vector(pixels, bins)


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".meta.json")


def save_feature_csv(ds: FeatureDataset, path, meta_extra: dict | None = None) -> None:
    """Write ``sample_id,label,f000..`` CSV plus a JSON metadata sidecar."""
    n_cols = ds.features.shape[1]
    width = max(3, len(str(n_cols - 1)))
    header = "sample_id,label," + ",".join(f"f{i:0{width}d}" for i in range(n_cols))
    lines = [header]
    for sid, label, row in zip(ds.sample_ids, ds.labels, ds.features):
        lines.append(f"{sid},{int(label)}," + ",".join(str(int(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    meta = {
        "bin_spec": {"count": ds.bin_spec.count, "lo": ds.bin_spec.lo, "hi": ds.bin_spec.hi},
        "class_names": list(ds.class_names),
        "intensity_scale": "raw 8-bit integers 0..255",
    }
    if meta_extra:
        meta.update(meta_extra)
    sidecar_path(path).write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_feature_csv(path) -> FeatureDataset:
    """Read a feature CSV written by :func:`save_feature_csv`."""
    path = Path(path)
    meta_file = sidecar_path(path)
    if not meta_file.is_file():
        raise FileNotFoundError(f"missing feature metadata sidecar {meta_file}")
    meta = json.loads(meta_file.read_text(encoding="utf-8"))
    bins = BinSpec(
        count=int(meta["bin_spec"]["count"]),
        lo=float(meta["bin_spec"]["lo"]),
        hi=float(meta["bin_spec"]["hi"]),
    )
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty feature file")
    n_cols = 2 * bins.count
    sample_ids: list[str] = []
    labels: list[int] = []
    rows: list[list[int]] = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != n_cols + 2:
            raise ValueError(f"{path}:{ln}: expected {n_cols + 2} columns, found {len(parts)}")
        sample_ids.append(parts[0])
        labels.append(int(parts[1]))
        rows.append([int(v) for v in parts[2:]])
    return FeatureDataset(
        features=np.array(rows, dtype=np.int64).reshape(len(rows), n_cols),
        labels=np.array(labels, dtype=np.int64),
        sample_ids=tuple(sample_ids),
        bin_spec=bins,
        class_names=tuple(meta["class_names"]),
    )


def jacobi_eigh(
    matrix: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvectors in columns, in
    sweep order (unsorted). Deterministic: fixed cyclic pivot order, stopping
    when the off-diagonal Frobenius mass drops below ``tol`` relative to the
    matrix norm.
    """
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    if a.ndim != 2 or a.shape != (n, n):
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    a = (a + a.T) / 2.0
    v = np.eye(n)
    scale = math.sqrt(float((a * a).sum()))
    if scale == 0.0 or n == 1:
        return np.diag(a).copy(), v
    for _sweep in range(max_sweeps):
        off = math.sqrt(2.0 * float((np.triu(a, 1) ** 2).sum()))
        if off <= tol * scale:
            return np.diag(a).copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
    raise JacobiConvergenceError(
        f"no convergence after {max_sweeps} sweeps (off-diagonal {off:.3e})"
    )


def pca_project(
    features: np.ndarray, components: int = 3
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project rows onto the top principal components of their covariance.

    Columns are centred by their means; the sample covariance (N-1 divisor)
    is diagonalised with :func:`jacobi_eigh`; eigenvalues come back sorted
    descending and each axis is sign-fixed so its largest-magnitude entry is
    positive. Returns ``(coords N x k, eigenvalues k, axes k x D)``.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected an N x D matrix, got shape {x.shape}")
    n, d = x.shape
    if n < 2:
        raise ValueError(f"PCA needs at least 2 samples, got {n}")
    if d < components:
        raise ValueError(f"cannot extract {components} components from {d} columns")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    eigenvalues, vectors = jacobi_eigh(cov)
    order = np.argsort(-eigenvalues, kind="stable")[:components]
    top_values = eigenvalues[order].copy()
    axes = vectors[:, order].T.copy()
    for k in range(components):
        pivot = int(np.argmax(np.abs(axes[k])))
        if axes[k, pivot] < 0:
            axes[k] = -axes[k]
    coords = centered @ axes.T
    return coords, top_values, axes


def class_distribution_rows(
    ds: FeatureDataset,
) -> list[tuple[str, str, float, float]]:
    """Per-sample aggregates (sample_id, class, mean beta0, mean beta1)."""
    half = ds.bin_spec.count
    rows = []
    for sid, label, feat in zip(ds.sample_ids, ds.labels, ds.features):
        rows.append(
            (
                sid,
                ds.class_names[int(label)],
                float(feat[:half].mean()),
                float(feat[half:].mean()),
            )
        )
    return rows


def save_distribution_csv(ds: FeatureDataset, path, meta_extra: dict | None = None) -> None:
    lines = ["sample_id,class,beta0_mean,beta1_mean"]
    for sid, cls, b0, b1 in class_distribution_rows(ds):
        lines.append(f"{sid},{cls},{b0!r},{b1!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if meta_extra is not None:
        sidecar_path(path).write_text(
            json.dumps(meta_extra, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
