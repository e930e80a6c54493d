"""Datasets: synthetic generators, CSV ingestion/export, standardization, and
the adjusted Rand index.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractViolation, DegenerateARIError, ParseError

# Rectangular block used by gen_block_clusters: corner coordinates per axis.
# Side lengths 8, 7, 6 with unit component variance.
BLOCK_SIDES = (8.0, 7.0, 6.0)


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    data: np.ndarray
    labels: np.ndarray | None = None
    feature_names: tuple[str, ...] = ()
    label_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        x = np.asarray(self.data, dtype=float)
        if x.ndim != 2:
            raise ContractViolation("data must be a 2-d array")
        if not np.all(np.isfinite(x)):
            raise ContractViolation("data contain non-finite entries")
        names = tuple(self.feature_names) or tuple(f"X{j + 1}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise ContractViolation("feature_names must match the number of columns")
        labels = None
        if self.labels is not None:
            labels = np.asarray(self.labels).astype(int)
            if labels.shape != (x.shape[0],):
                raise ContractViolation("labels must have one entry per row")
            if labels.size and labels.min() < 1:
                raise ContractViolation("labels must be integers >= 1")
        object.__setattr__(self, "data", x)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "label_names", tuple(self.label_names))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]


def gen_two_group(seed=None) -> LabeledDataset:
    """100 x 50 data with two groups differing on the first 15 attributes.

    Group 1: 85 rows from a standard 50-d Gaussian. Group 2: 15 rows whose
    first 15 attributes are N(1.5, 0.2^2) and the remaining 35 standard normal.
    """
    rng = np.random.default_rng(seed)
    g1 = rng.standard_normal((85, 50))
    g2 = rng.standard_normal((15, 50))
    g2[:, :15] = 1.5 + 0.2 * g2[:, :15]
    labels = np.repeat([1, 2], [85, 15])
    return LabeledDataset(np.vstack([g1, g2]), labels)


def block_means(sides=BLOCK_SIDES) -> np.ndarray:
    """The eight corners of an axis-aligned rectangular block at the origin."""
    corners = np.array([[(c >> j) & 1 for j in range(3)] for c in range(8)], dtype=float)
    return corners * np.asarray(sides, dtype=float)


def gen_block_clusters(seed=None, per_cluster: int = 50, sides=BLOCK_SIDES) -> LabeledDataset:
    """400 x 8 data: eight equal-size Gaussian clusters at the corners of a
    rectangular block in the first three variables, pure N(0, 1) noise in
    variables 4-8. Common covariance is the identity.
    """
    rng = np.random.default_rng(seed)
    means = block_means(sides)
    labels = np.repeat(np.arange(1, 9), per_cluster)
    x = rng.standard_normal((8 * per_cluster, 8))
    x[:, :3] += means[labels - 1]
    return LabeledDataset(x, labels)


GENERATORS = {"two-group": gen_two_group, "block8": gen_block_clusters}


def standardize(x):
    """Centre columns and scale to unit (sample) standard deviation.

    Returns the transformed data with the column means and scales used.
    Constant columns are left at scale one.
    """
    x = np.asarray(x, dtype=float)
    mean = x.mean(axis=0)
    scale = x.std(axis=0, ddof=1) if x.shape[0] > 1 else np.ones(x.shape[1])
    scale = np.where(scale > 0, scale, 1.0)
    return (x - mean) / scale, mean, scale


def _comb2(a):
    a = np.asarray(a, dtype=float)
    return a * (a - 1.0) / 2.0


def contingency_table(labels_a, labels_b) -> np.ndarray:
    _, ia = np.unique(labels_a, return_inverse=True)
    _, ib = np.unique(labels_b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Hubert-Arabie adjusted Rand index of two partitions.

    Raises :class:`DegenerateARIError` when the index is 0/0 and the two
    partitions differ; returns 1.0 when it is 0/0 and they coincide.
    """
    a = np.asarray(labels_a).reshape(-1)
    b = np.asarray(labels_b).reshape(-1)
    if a.shape != b.shape:
        raise ContractViolation(f"label vectors differ in length ({a.size} vs {b.size})")
    if a.size < 2:
        raise ContractViolation("need at least two labelled points")
    table = contingency_table(a, b)
    sum_ij = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    expected = sum_a * sum_b / _comb2(a.size)
    denom = 0.5 * (sum_a + sum_b) - expected
    if denom == 0:
        # only possible when both partitions are trivial in the same way
        if np.count_nonzero(table) == table.shape[0] == table.shape[1]:
            return 1.0
        raise DegenerateARIError("adjusted Rand index is undefined (0/0) for these partitions")
    return float((sum_ij - expected) / denom)


def _read_text(path) -> str:
    path = Path(path)
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read file ({exc})", path=path) from None


def load_csv(path, label_column: str | None = None) -> LabeledDataset:
    """Read a numeric CSV with a header row.

    The column named ``label_column`` (if given) becomes the labels. Integer
    labels >= 1 are kept as they are; any other values are mapped to
    ``1, 2, ...`` in order of first appearance.
    """
    text = _read_text(path)
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise ParseError("empty file", path=path)
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise ParseError("no data rows after the header", path=path)
    label_idx = None
    if label_column is not None:
        if label_column not in header:
            raise ParseError(f"label column {label_column!r} not in header {header}", path=path)
        label_idx = header.index(label_column)
    feat_idx = [j for j in range(len(header)) if j != label_idx]
    data = np.empty((len(body), len(feat_idx)))
    raw_labels = []
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ParseError(
                f"expected {len(header)} fields, found {len(row)}", path=path, row=i
            )
        for out_j, j in enumerate(feat_idx):
            try:
                value = float(row[j])
            except ValueError:
                raise ParseError(
                    f"non-numeric value {row[j]!r}", path=path, row=i, column=header[j]
                ) from None
            if not math.isfinite(value):
                raise ParseError(f"non-finite value {row[j]!r}", path=path, row=i, column=header[j])
            data[i - 2, out_j] = value
        if label_idx is not None:
            raw_labels.append(row[label_idx].strip())
    labels, label_names = None, ()
    if label_idx is not None:
        labels, label_names = encode_labels(raw_labels)
    return LabeledDataset(data, labels, tuple(header[j] for j in feat_idx), label_names)


def encode_labels(values):
    """Map label strings to integers.

    Returns ``(labels, names)``; ``names`` is empty when the values were
    already positive integers.
    """
    try:
        ints = [int(v) for v in values]
    except ValueError:
        ints = None
    if ints is not None and min(ints) >= 1:
        return np.array(ints), ()
    order = {}
    for v in values:
        order.setdefault(v, len(order) + 1)
    return np.array([order[v] for v in values]), tuple(order)


def format_float(x: float) -> str:
    return repr(float(x))


def dataset_to_csv(dataset: LabeledDataset, label_column: str = "class") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = list(dataset.feature_names)
    if dataset.labels is not None:
        header.append(label_column)
    w.writerow(header)
    for i in range(dataset.n):
        row = [format_float(v) for v in dataset.data[i]]
        if dataset.labels is not None:
            row.append(str(int(dataset.labels[i])))
        w.writerow(row)
    return buf.getvalue()


def matrix_to_csv(x, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in np.atleast_2d(x):
        w.writerow([format_float(v) for v in row])
    return buf.getvalue()


def labels_to_csv(labels, name: str = "cluster") -> str:
    return name + "\n" + "".join(f"{int(v)}\n" for v in labels)


def load_labels(path) -> np.ndarray:
    """Single-column integer CSV; a non-integer first line is taken as a header."""
    text = _read_text(path)
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty label file", path=path)
    try:
        int(lines[0])
    except ValueError:
        lines = lines[1:]
    out = []
    for i, ln in enumerate(lines, start=1):
        if "," in ln:
            raise ParseError("label file must have a single column", path=path, row=i)
        try:
            out.append(int(ln))
        except ValueError:
            raise ParseError(f"non-integer label {ln!r}", path=path, row=i) from None
    if not out:
        raise ParseError("no labels in file", path=path)
    return np.array(out)
