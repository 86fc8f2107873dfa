"""Datasets: the three-cluster synthetic benchmark, CSV input/output, standardization."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .distributions import MscnParams, mscn_sample


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    x: NDArray
    true_labels: NDArray | None = None
    true_bad: NDArray | None = None
    column_names: tuple[str, ...] | None = None
    # (mean, sd) per column when ``x`` holds standardized values
    standardization: tuple[NDArray, NDArray] | None = None
    label_names: tuple[str, ...] | None = None

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        if x.ndim != 2:
            raise ValueError("x must be a 2-d matrix")
        if not np.all(np.isfinite(x)):
            raise ValueError("x has non-finite entries")
        n, d = x.shape
        if self.true_labels is not None and len(self.true_labels) != n:
            raise ValueError("true_labels length does not match n")
        if self.true_bad is not None and np.shape(self.true_bad) != (n, d):
            raise ValueError("true_bad must have the same shape as x")
        if self.column_names is not None and len(self.column_names) != d:
            raise ValueError("need one column name per column")
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def names(self) -> tuple[str, ...]:
        return self.column_names or tuple(f"x{h + 1}" for h in range(self.d))


# ---------------------------------------------------------------------------
# Synthetic benchmark
# ---------------------------------------------------------------------------

SYNTHETIC_SIZES = (400, 600, 600)
SYNTHETIC_MEANS = ((0.0, 0.0), (2.0, 6.0), (0.0, 12.0))
SYNTHETIC_COVS = (
    ((1.0, -0.5), (-0.5, 1.0)),
    ((2.0, 0.5), (0.5, 2.0)),
    ((1.0, -0.5), (-0.5, 1.0)),
)
N_OUTLIERS = 11
OUTLIER_CLUSTER = 1
# X1 of the outliers is uniform on the union of these intervals
OUTLIER_INTERVALS = ((-10.0, -7.0), (8.0, 15.0))


def sample_union_uniform(rng: np.random.Generator, intervals, size: int) -> NDArray:
    lengths = np.array([hi - lo for lo, hi in intervals])
    # one uniform on [0, total length), then mapped piecewise
    u = rng.random(size) * lengths.sum()
    edges = np.concatenate([[0.0], np.cumsum(lengths)])
    which = np.searchsorted(edges, u, side="right") - 1
    lows = np.array([lo for lo, _ in intervals])
    return lows[which] + (u - edges[which])


def generate_synthetic(seed: int = 0) -> Dataset:
    """1600 bivariate normal points in three groups, 11 cells replaced by outliers.

    Group ``j`` is drawn from its own child of ``SeedSequence(seed)``
    (children 0, 1, 2); the outlier rows and values come from child 3.
    Groups are stored in order with labels 0, 1, 2. The first coordinate
    of 11 distinct rows of group 1 is overwritten.
    """
    children = np.random.SeedSequence(seed).spawn(len(SYNTHETIC_SIZES) + 1)
    blocks, labels = [], []
    for j, (size, mu, cov) in enumerate(zip(SYNTHETIC_SIZES, SYNTHETIC_MEANS, SYNTHETIC_COVS)):
        rng = np.random.default_rng(children[j])
        chol = np.linalg.cholesky(np.array(cov))
        blocks.append(np.array(mu) + rng.standard_normal((size, 2)) @ chol.T)
        labels.append(np.full(size, j))
    x = np.vstack(blocks)
    y = np.concatenate(labels)
    rng = np.random.default_rng(children[-1])
    start = sum(SYNTHETIC_SIZES[:OUTLIER_CLUSTER])
    rows = start + np.sort(rng.choice(SYNTHETIC_SIZES[OUTLIER_CLUSTER], N_OUTLIERS, replace=False))
    x[rows, 0] = sample_union_uniform(rng, OUTLIER_INTERVALS, N_OUTLIERS)
    bad = np.zeros(x.shape, dtype=bool)
    bad[rows, 0] = True
    return Dataset(x, y, bad, ("x1", "x2"))


def sample_mixture(weights: Sequence[float], components: Sequence[MscnParams], n: int, seed: int) -> Dataset:
    """Draw ``n`` labelled points from an MSCN mixture (component counts are multinomial)."""
    ss = np.random.SeedSequence(seed)
    count_seed, *comp_seeds = ss.spawn(len(components) + 1)
    counts = np.random.default_rng(count_seed).multinomial(n, np.asarray(weights) / np.sum(weights))
    xs, ys = [], []
    for j, (c, m) in enumerate(zip(components, counts)):
        if m:
            xs.append(mscn_sample(c, int(m), np.random.default_rng(comp_seeds[j])))
            ys.append(np.full(m, j))
    return Dataset(np.vstack(xs), np.concatenate(ys))


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(
    path: str | os.PathLike,
    has_header: bool = True,
    label_column: str | int | None = None,
    drop_columns: Sequence[str | int] = (),
) -> Dataset:
    """Read a comma-separated numeric table.

    ``label_column`` (name or 0-based index) is removed from the features and
    encoded as integer labels 0..m-1 in sorted order of its distinct values.
    Columns in ``drop_columns`` are discarded.
    """
    text = Path(path).read_text(encoding="utf-8-sig")
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path}: file is empty")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise ParseError(f"{path}: row {i + 1} has {len(r)} fields, expected {width}")
    if has_header:
        header = [c.strip() for c in rows[0]]
        if all(_is_number(c) for c in header):
            raise ParseError(f"{path}: expected a header row but the first row is numeric")
        rows = rows[1:]
    else:
        header = [f"x{h + 1}" for h in range(width)]
        if not all(_is_number(c) for c in rows[0]) and label_column is None:
            raise ParseError(f"{path}: first row is not numeric; does the file have a header?")
    if not rows:
        raise ParseError(f"{path}: no data rows")

    def index_of(col) -> int:
        if isinstance(col, int) or (isinstance(col, str) and col.isdigit() and col not in header):
            idx = int(col)
            if not 0 <= idx < width:
                raise ParseError(f"column index {idx} out of range")
            return idx
        if col not in header:
            raise ParseError(f"{path}: no column named {col!r}")
        return header.index(col)

    skip = {index_of(c) for c in drop_columns}
    label_idx = index_of(label_column) if label_column is not None else None
    feature_idx = [h for h in range(width) if h not in skip and h != label_idx]
    if not feature_idx:
        raise ParseError(f"{path}: no feature columns left")
    x = np.empty((len(rows), len(feature_idx)))
    for i, r in enumerate(rows):
        for out_h, h in enumerate(feature_idx):
            try:
                x[i, out_h] = float(r[h])
            except ValueError:
                raise ParseError(
                    f"{path}: non-numeric value {r[h]!r} in row {i + 1}, column {header[h]!r}"
                ) from None
    labels = names = None
    if label_idx is not None:
        raw = [r[label_idx].strip() for r in rows]
        if all(_is_number(c) for c in raw):
            keyed = sorted(set(raw), key=float)
        else:
            keyed = sorted(set(raw))
        code = {v: i for i, v in enumerate(keyed)}
        labels = np.array([code[v] for v in raw], dtype=int)
        names = tuple(keyed)
    return Dataset(x, labels, None, tuple(header[h] for h in feature_idx), label_names=names)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_text_atomic(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def save_csv(ds: Dataset, path: str | os.PathLike, label_column: str | None = "label") -> None:
    """Write features (and labels as a trailing integer column) with a header row."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    with_labels = label_column is not None and ds.true_labels is not None
    w.writerow(list(ds.names()) + ([label_column] if with_labels else []))
    for i in range(ds.n):
        row = [_fmt(v) for v in ds.x[i]]
        if with_labels:
            row.append(str(int(ds.true_labels[i])))
        w.writerow(row)
    write_text_atomic(path, buf.getvalue())


def save_matrix_csv(matrix, header: Sequence[str], path: str | os.PathLike) -> None:
    """Write an integer or boolean matrix (e.g. bad-cell flags as 0/1) with a header."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header))
    for row in np.atleast_2d(np.asarray(matrix)):
        w.writerow([str(int(v)) for v in row])
    write_text_atomic(path, buf.getvalue())


def load_int_matrix(path: str | os.PathLike) -> tuple[NDArray, list[str]]:
    ds = load_csv(path, has_header=True)
    return ds.x.astype(int), list(ds.names())


def load_labels(path: str | os.PathLike, column: str | int | None = None) -> NDArray:
    """Integer labels from a CSV file: the named column, or the only/last one."""
    text = Path(path).read_text(encoding="utf-8-sig")
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows:
        raise ParseError(f"{path}: file is empty")
    header = rows[0]
    body = rows[1:] if not all(_is_number(c) for c in header) else rows
    if column is None:
        idx = len(header) - 1
    elif isinstance(column, int):
        idx = column
    elif column in header:
        idx = header.index(column)
    else:
        raise ParseError(f"{path}: no column named {column!r}")
    try:
        return np.array([int(float(r[idx])) for r in body], dtype=int)
    except (ValueError, IndexError) as exc:
        raise ParseError(f"{path}: bad label value ({exc})") from None


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------


def standardize(ds: Dataset) -> Dataset:
    """Centre each column and scale it to unit sample standard deviation (divisor n - 1)."""
    if ds.n < 2:
        raise ValueError("need at least two rows to standardize")
    mean = ds.x.mean(axis=0)
    sd = ds.x.std(axis=0, ddof=1)
    if np.any(sd == 0):
        cols = [ds.names()[h] for h in np.flatnonzero(sd == 0)]
        raise ValueError(f"zero-variance column(s): {', '.join(cols)}")
    x = (ds.x - mean) / sd
    if ds.standardization is not None:
        # compose with an earlier transform so inversion reaches the raw scale
        m0, s0 = ds.standardization
        mean, sd = m0 + s0 * mean, s0 * sd
    return replace(ds, x=x, standardization=(mean, sd))


def unstandardize(ds: Dataset) -> Dataset:
    if ds.standardization is None:
        return ds
    mean, sd = ds.standardization
    return replace(ds, x=ds.x * sd + mean, standardization=None)
