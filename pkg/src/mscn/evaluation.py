"""Agreement between partitions and outlier-detection confusion counts."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import linear_sum_assignment

EXHAUSTIVE_MAX_K = 10


@dataclass(frozen=True)
class AgreementScores:
    er: float
    ari: float
    # predicted label -> true label mapping that attains ``er``
    permutation: dict[int, int]

    def to_dict(self) -> dict:
        return {
            "er": self.er,
            "ari": self.ari,
            "permutation": {str(k): v for k, v in sorted(self.permutation.items())},
        }


def _pair(labels_a: ArrayLike, labels_b: ArrayLike) -> tuple[NDArray, NDArray]:
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.size != b.size:
        raise ValueError(f"label vectors differ in length ({a.size} vs {b.size})")
    return a, b


def contingency(labels_a, labels_b) -> tuple[NDArray, NDArray, NDArray]:
    """Contingency table plus the sorted distinct labels of each side."""
    a, b = _pair(labels_a, labels_b)
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ua.size, ub.size), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table, ua, ub


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1) / 2


def adjusted_rand(labels_a, labels_b) -> float:
    """Adjusted Rand index (Hubert and Arabie) from pair counts."""
    a, _ = _pair(labels_a, labels_b)
    if a.size < 2:
        raise ValueError("need at least two observations")
    table, _, _ = contingency(labels_a, labels_b)
    sum_cells = _comb2(table).sum()
    sum_rows = _comb2(table.sum(axis=1)).sum()
    sum_cols = _comb2(table.sum(axis=0)).sum()
    total = _comb2(a.size)
    expected = sum_rows * sum_cols / total
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        # both partitions trivial (all one class, or all singletons)
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


def error_rate(true_labels, pred_labels) -> tuple[float, dict[int, int]]:
    """Smallest misclassification rate over matchings of predicted to true labels.

    Exhaustive over permutations when there are at most ten labels,
    otherwise a linear assignment on the contingency table.
    """
    table, ut, up = contingency(true_labels, pred_labels)
    n = table.sum()
    size = max(table.shape)
    square = np.zeros((size, size), dtype=np.int64)
    square[: table.shape[0], : table.shape[1]] = table
    if size <= EXHAUSTIVE_MAX_K:
        best, best_perm = -1, None
        for perm in itertools.permutations(range(size)):
            # perm[c] = true row matched to predicted column c
            hits = sum(square[perm[c], c] for c in range(size))
            if hits > best:
                best, best_perm = hits, perm
        cols = np.arange(size)
        rows = np.array(best_perm)
    else:
        rows, cols = linear_sum_assignment(-square)
        best = int(square[rows, cols].sum())
    mapping = {}
    for r, c in zip(rows, cols):
        if c < up.size and r < ut.size:
            mapping[int(up[c])] = int(ut[r])
    return float(1.0 - best / n), mapping


def agreement(true_labels, pred_labels) -> AgreementScores:
    er, perm = error_rate(true_labels, pred_labels)
    return AgreementScores(er, adjusted_rand(true_labels, pred_labels), perm)


@dataclass(frozen=True)
class OutlierConfusion:
    tp: NDArray  # per dimension
    fp: NDArray
    fn: NDArray
    tn: NDArray

    @property
    def totals(self) -> dict[str, int]:
        return {name: int(getattr(self, name).sum()) for name in ("tp", "fp", "fn", "tn")}

    @property
    def false_positive_points(self) -> int:
        return int(self.totals["fp"])

    def to_dict(self) -> dict:
        out = dict(self.totals)
        out["per_dimension"] = {
            name: getattr(self, name).astype(int).tolist() for name in ("tp", "fp", "fn", "tn")
        }
        return out


def outlier_confusion(true_bad, flagged) -> OutlierConfusion:
    """Cell-wise confusion of flagged-bad cells against the truth."""
    t = np.asarray(true_bad, dtype=bool)
    f = np.asarray(flagged, dtype=bool)
    if t.shape != f.shape:
        raise ValueError(f"shape mismatch: {t.shape} vs {f.shape}")
    t = t.reshape(t.shape[0], -1)
    f = f.reshape(f.shape[0], -1)
    return OutlierConfusion(
        tp=np.sum(t & f, axis=0),
        fp=np.sum(~t & f, axis=0),
        fn=np.sum(t & ~f, axis=0),
        tn=np.sum(~t & ~f, axis=0),
    )
