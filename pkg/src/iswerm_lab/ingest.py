"""CSV ingestion for classification-to-bandit conversion.

Reads a local labeled CSV (header row required) into a
:class:`ClassificationTable`: numeric feature columns parsed as floats,
non-numeric feature columns integer-coded and one-hot expanded, labels
mapped to contiguous codes in order of first appearance.  Everything is
deterministic: the same file and options always produce bit-identical
output.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

__all__ = ["ClassificationTable", "load_csv_classification"]


@dataclass(frozen=True)
class ClassificationTable:
    """Cleaned feature matrix with integer class labels.

    ``labels`` are contiguous codes ``0..K-1``; every code appears at least
    once.  ``column_names`` name the columns of ``features`` (one-hot
    expanded categoricals get ``name=value`` entries).
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    column_names: tuple[str, ...]

    def __post_init__(self) -> None:
        f = np.asarray(self.features, dtype=np.float64)
        lab = np.asarray(self.labels, dtype=np.int64)
        if f.ndim != 2 or lab.shape != (f.shape[0],):
            raise ValueError("features must be (n, d) with labels (n,)")
        if f.shape[1] != len(self.column_names):
            raise ValueError("column_names must match feature width")
        if np.any(np.isnan(f)):
            raise ValueError("features contain NaN after cleaning")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        present = np.unique(lab)
        if np.any((lab < 0) | (lab >= self.num_classes)):
            raise ValueError("labels out of range")
        if len(present) != self.num_classes:
            raise ValueError("some class label never appears")
        f.setflags(write=False)
        lab.setflags(write=False)
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", lab)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


def _try_float(cell: str) -> float | None:
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if np.isfinite(v) else None


def load_csv_classification(path: str, label_column: str,
                            drop_missing: bool = True,
                            standardize: bool = True) -> ClassificationTable:
    """Load a labeled CSV into a :class:`ClassificationTable`.

    Parameters
    ----------
    path : str
        CSV file with a header row.
    label_column : str
        Header name of the label column.
    drop_missing : bool
        Drop rows containing any empty or unparsable numeric cell.  When
        False such rows raise instead.
    standardize : bool
        Transform each numeric feature column to mean 0 / sample std 1
        (n-1 denominator); constant columns become all zeros.  One-hot
        indicator columns are left as 0/1.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("empty CSV") from None
        rows = [row for row in reader if row]
    if label_column not in header:
        raise ValueError(f"label column {label_column!r} not in header {header}")
    label_idx = header.index(label_column)
    feat_cols = [i for i in range(len(header)) if i != label_idx]

    # A feature column is numeric if every non-empty cell parses as a float.
    numeric = {}
    for i in feat_cols:
        numeric[i] = all(_try_float(row[i]) is not None
                         for row in rows if row[i].strip() != "")

    kept_rows = []
    for row in rows:
        if len(row) != len(header):
            if drop_missing:
                continue
            raise ValueError(f"row has {len(row)} cells, header has {len(header)}")
        bad = row[label_idx].strip() == ""
        for i in feat_cols:
            cell = row[i].strip()
            if cell == "" or (numeric[i] and _try_float(row[i]) is None):
                bad = True
        if bad:
            if drop_missing:
                continue
            raise ValueError(f"unparsable row: {row}")
        kept_rows.append(row)
    if not kept_rows:
        raise ValueError("zero rows after cleaning")

    # Labels: contiguous codes in order of first appearance.
    label_codes: dict[str, int] = {}
    labels = np.empty(len(kept_rows), dtype=np.int64)
    for r, row in enumerate(kept_rows):
        key = row[label_idx].strip()
        if key not in label_codes:
            label_codes[key] = len(label_codes)
        labels[r] = label_codes[key]
    K = len(label_codes)
    if K < 2:
        raise ValueError(f"fewer than 2 classes after cleaning (got {K})")

    columns: list[np.ndarray] = []
    names: list[str] = []
    is_indicator: list[bool] = []
    for i in feat_cols:
        if numeric[i]:
            col = np.array([float(row[i]) for row in kept_rows])
            columns.append(col)
            names.append(header[i])
            is_indicator.append(False)
        else:
            # Integer-code by first appearance, then one-hot expand.
            codes: dict[str, int] = {}
            idx = np.empty(len(kept_rows), dtype=np.int64)
            for r, row in enumerate(kept_rows):
                key = row[i].strip()
                if key not in codes:
                    codes[key] = len(codes)
                idx[r] = codes[key]
            for value, code in codes.items():
                columns.append((idx == code).astype(np.float64))
                names.append(f"{header[i]}={value}")
                is_indicator.append(True)

    features = np.column_stack(columns) if columns else np.empty((len(kept_rows), 0))

    if standardize:
        for j in range(features.shape[1]):
            if is_indicator[j]:
                continue  # indicators stay 0/1
            col = features[:, j]
            mean = col.mean()
            std = col.std(ddof=1) if len(col) > 1 else 0.0
            features[:, j] = (col - mean) / std if std > 0 else 0.0

    return ClassificationTable(features=features, labels=labels,
                               num_classes=K, column_names=tuple(names))
