"""Finite mixtures of MSCN components: likelihood, posteriors, MAP classification.

The Gaussian mixture baseline lives in the same :class:`MixtureModel`
type with every ``alpha`` and ``eta`` pinned at 1. Cluster labels are
0-based throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from .distributions import MscnParams, axis_log_terms, rotated_residuals

MSCNM = "MSCNM"
MNM = "MNM"
FAMILIES = (MSCNM, MNM)


@dataclass(frozen=True)
class MixtureModel:
    weights: NDArray
    components: tuple[MscnParams, ...]
    family: str = MSCNM
    # per-column (mean, sd) applied to raw data before evaluation, if any
    standardization: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        comps = tuple(self.components)
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if w.size != len(comps) or w.size == 0:
            raise ValueError("need one weight per component")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        if len({c.d for c in comps}) != 1:
            raise ValueError("components must share the same dimension")
        if self.family == MNM and any(
            np.any(c.alpha != 1.0) or np.any(c.eta != 1.0) for c in comps
        ):
            raise ValueError("MNM components must have alpha = eta = 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def d(self) -> int:
        return self.components[0].d

    def transform(self, x: ArrayLike) -> NDArray:
        """Apply the stored standardization (identity when there is none)."""
        x = np.asarray(x, dtype=float)
        if self.standardization is None:
            return x
        mean, sd = (np.asarray(a) for a in self.standardization)
        return (x - mean) / sd

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        out = {
            "family": self.family,
            "k": self.k,
            "d": self.d,
            "weights": [float(w) for w in self.weights],
            "components": [
                {
                    "mu": c.mu.tolist(),
                    "gamma": c.gamma.tolist(),
                    "lambda": c.lam.tolist(),
                    "alpha": c.alpha.tolist(),
                    "eta": c.eta.tolist(),
                }
                for c in self.components
            ],
        }
        if self.standardization is not None:
            mean, sd = self.standardization
            out["standardization"] = {"mean": list(mean), "sd": list(sd)}
        return out

    def to_json(self) -> str:
        # float repr is the shortest string that round-trips exactly
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "MixtureModel":
        comps = tuple(
            MscnParams(c["mu"], c["gamma"], c["lambda"], c["alpha"], c["eta"])
            for c in doc["components"]
        )
        if len(comps) != doc["k"] or comps[0].d != doc["d"]:
            raise ValueError("model document k/d do not match its components")
        std = doc.get("standardization")
        if std is not None:
            std = (tuple(std["mean"]), tuple(std["sd"]))
        return cls(doc["weights"], comps, doc["family"], std)

    @classmethod
    def from_json(cls, text: str) -> "MixtureModel":
        return cls.from_dict(json.loads(text))


def _rows(x: ArrayLike, d: int) -> tuple[NDArray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    pts = x.reshape(-1, d)
    if not np.all(np.isfinite(pts)):
        raise ValueError("data contain non-finite values")
    return pts, single


def component_logpdfs(x: ArrayLike, m: MixtureModel) -> NDArray:
    """``(n, k)`` matrix of ``log pi_j + log f_MSCN(x_i; component j)``."""
    pts, _ = _rows(x, m.d)
    out = np.empty((pts.shape[0], m.k))
    for j, (w, c) in enumerate(zip(m.weights, m.components)):
        good, bad = axis_log_terms(rotated_residuals(pts, c), c)
        out[:, j] = math.log(w) + np.sum(np.logaddexp(good, bad), axis=1)
    return out


def mixture_logpdf(x: ArrayLike, m: MixtureModel):
    x = np.asarray(x, dtype=float)
    out = logsumexp(component_logpdfs(x, m), axis=1)
    return float(out[0]) if x.ndim <= 1 else out


def observed_loglik(data: ArrayLike, m: MixtureModel) -> float:
    return float(np.sum(mixture_logpdf(np.atleast_2d(data), m)))


def posterior_z(x: ArrayLike, m: MixtureModel) -> NDArray:
    """Posterior component memberships; rows sum to one."""
    x = np.asarray(x, dtype=float)
    lp = component_logpdfs(x, m)
    z = np.exp(lp - logsumexp(lp, axis=1, keepdims=True))
    z /= z.sum(axis=1, keepdims=True)
    return z[0] if x.ndim <= 1 else z


def posterior_v(x: ArrayLike, c: MscnParams) -> NDArray:
    """Per-axis posterior probability of being good under component ``c``."""
    x = np.asarray(x, dtype=float)
    good, bad = axis_log_terms(rotated_residuals(x, c), c)
    v = np.exp(good - np.logaddexp(good, bad))
    return v[0] if x.ndim <= 1 else v


def posterior_v_all(x: ArrayLike, m: MixtureModel) -> NDArray:
    """``(n, d, k)`` array of good-posteriors for every component."""
    pts, _ = _rows(x, m.d)
    return np.stack([posterior_v(pts, c) for c in m.components], axis=2)


@dataclass(frozen=True)
class ClassificationReport:
    labels: NDArray  # (n,) MAP component, ties to the lowest index
    good_flags: NDArray  # (n, d) bool, True = good in that rotated axis
    z_hat: NDArray = field(repr=False)
    v_hat: NDArray = field(repr=False)

    @property
    def bad_flags(self) -> NDArray:
        return ~self.good_flags

    @property
    def outlier_counts(self) -> NDArray:
        """Number of cells flagged bad per dimension."""
        return np.sum(~self.good_flags, axis=0)

    @property
    def n_outlier_cells(self) -> int:
        return int(np.sum(~self.good_flags))


def map_labels(z: NDArray) -> NDArray:
    # argmax returns the first maximal index, which is the tie rule we want
    return np.argmax(z, axis=1)


def classify(data: ArrayLike, m: MixtureModel) -> ClassificationReport:
    """Two-step classification: MAP cluster, then per-axis good/bad in that cluster.

    A cell is bad only when its good-posterior is strictly below 0.5
    under the assigned component; exactly 0.5 counts as good.
    """
    pts, _ = _rows(data, m.d)
    z = posterior_z(pts, m)
    v = posterior_v_all(pts, m)
    labels = map_labels(z)
    v_assigned = v[np.arange(pts.shape[0]), :, labels]
    return ClassificationReport(labels, v_assigned >= 0.5, z, v)


# ---------------------------------------------------------------------------
# Down-weighting of rotated coordinates
# ---------------------------------------------------------------------------


def _check_weight_args(delta, alpha, eta):
    delta = np.asarray(delta, dtype=float)
    if np.any(delta < 0):
        raise ValueError("delta must be non-negative")
    if np.any((np.asarray(alpha) <= 0) | (np.asarray(alpha) >= 1)):
        raise ValueError("alpha must lie in (0, 1)")
    if np.any(np.asarray(eta) <= 1):
        raise ValueError("eta must exceed 1")
    return delta


def downweight(delta, alpha, eta):
    """Weight a coordinate receives in the mean update, given its squared distance.

    Numerator and denominator of the closed form are divided by
    ``exp(delta / 2)`` so large distances do not overflow.
    """
    delta = _check_weight_args(delta, alpha, eta)
    e = np.exp(delta / (2 * eta) - delta / 2)
    return 1.0 + (1 - alpha) * (eta - 1) / ((alpha - 1) * eta - alpha * eta**1.5 * e)


def downweight_derivative(delta, alpha, eta):
    """Derivative of :func:`downweight` with respect to ``delta`` (always negative)."""
    delta = _check_weight_args(delta, alpha, eta)
    e = np.exp(delta / (2 * eta) - delta / 2)
    den = 2 * eta**1.5 * ((alpha - 1) - alpha * np.sqrt(eta) * e) ** 2
    return -alpha * (1 - alpha) * (eta - 1) ** 2 * e / den


def gaussian_component(mu: Sequence[float], sigma: ArrayLike) -> MscnParams:
    d = len(mu)
    return MscnParams.from_sigma(mu, sigma, np.ones(d), np.ones(d))
