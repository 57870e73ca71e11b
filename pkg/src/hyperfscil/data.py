"""Feature datasets: synthetic Gaussian blobs and the CSV exchange format.

CSV layout: header ``split,class,f0,...,f{d-1}``, one sample per row, split
is ``train`` or ``test``, class ids are contiguous naturals from 0.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import DatasetError

SPLITS = ("train", "test")


@dataclass
class FeatureDataset:
    x: np.ndarray
    y: np.ndarray
    split: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=int)
        self.split = np.asarray(self.split, dtype=object)
        if self.x.ndim != 2 or len(self.x) != len(self.y) or len(self.y) != len(self.split):
            raise DatasetError("x must be (n, d) with one label and split tag per row")
        bad = set(self.split.tolist()) - set(SPLITS)
        if bad:
            raise DatasetError(f"unknown split tags {sorted(bad)}")
        if len(self.y) and not np.array_equal(np.unique(self.y), np.arange(self.y.max() + 1)):
            raise DatasetError("class ids must be contiguous naturals starting at 0")

    @property
    def dim(self):
        return self.x.shape[1]

    @property
    def classes(self):
        return np.unique(self.y).tolist()

    def indices(self, split, cls=None):
        mask = self.split == split
        if cls is not None:
            mask &= self.y == cls
        return np.flatnonzero(mask)

    def __eq__(self, other):
        return (
            isinstance(other, FeatureDataset)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.split, other.split)
        )


def generate_synthetic(num_classes, train_per_class, test_per_class, dim, separation, seed):
    """Isotropic unit-variance Gaussian blobs.

    Class means are drawn at random and rescaled so the closest pair sits
    exactly ``separation`` apart.
    """
    if min(num_classes, train_per_class, test_per_class, dim) < 1:
        raise DatasetError("counts and dimension must be >= 1")
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(num_classes, dim))
    if num_classes > 1:
        means *= separation / pdist(means).min()
    xs, ys, splits = [], [], []
    for cls in range(num_classes):
        for split, n in (("train", train_per_class), ("test", test_per_class)):
            xs.append(means[cls] + rng.normal(size=(n, dim)))
            ys.append(np.full(n, cls))
            splits.append(np.full(n, split, dtype=object))
    return FeatureDataset(np.concatenate(xs), np.concatenate(ys), np.concatenate(splits))


def dataset_to_csv(dataset):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["split", "class"] + [f"f{i}" for i in range(dataset.dim)])
    for row, cls, split in zip(dataset.x, dataset.y, dataset.split):
        writer.writerow([split, int(cls)] + [repr(float(v)) for v in row])
    return buf.getvalue()


def write_csv_dataset(dataset, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(dataset_to_csv(dataset))


def load_csv_dataset(path):
    """Parse a dataset CSV; every problem is reported with its line number."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError("empty file", line=1)
    header = rows[0]
    if header[:2] != ["split", "class"] or len(header) < 3:
        raise DatasetError("header must start with split,class followed by feature columns", line=1)
    dim = len(header) - 2
    xs, ys, splits, lines = [], [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != dim + 2:
            raise DatasetError(f"expected {dim} features, found {len(row) - 2}", line=lineno)
        if row[0] not in SPLITS:
            raise DatasetError(f"split must be train or test, got {row[0]!r}", line=lineno)
        if not row[1].isdigit():
            raise DatasetError(f"class must be a natural number, got {row[1]!r}", line=lineno)
        try:
            feats = [float(v) for v in row[2:]]
        except ValueError as exc:
            raise DatasetError(f"non-numeric feature ({exc})", line=lineno) from None
        if not np.all(np.isfinite(feats)):
            raise DatasetError("non-finite feature", line=lineno)
        splits.append(row[0])
        ys.append(int(row[1]))
        xs.append(feats)
        lines.append(lineno)
    if not ys:
        raise DatasetError("no samples", line=len(rows))
    present = sorted(set(ys))
    if present != list(range(len(present))):
        missing = sorted(set(range(present[-1] + 1)) - set(present))
        first_gap = next(n for n, c in zip(lines, ys) if c > missing[0])
        raise DatasetError(f"class ids not contiguous: missing {missing}", line=first_gap)
    return FeatureDataset(np.array(xs), np.array(ys), np.array(splits, dtype=object))
