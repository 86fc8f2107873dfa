"""Normal, contaminated normal and multiple scaled contaminated normal laws.

The multiple scaled contaminated normal (MSCN) law is parametrized by a
mean ``mu``, an orthogonal orientation matrix ``gamma`` (columns are
principal axes), axis variances ``lam``, and per-axis proportions of good
points ``alpha`` and degrees of contamination ``eta``. Along each rotated
axis ``h`` the coordinate ``[gamma.T (x - mu)]_h`` follows a univariate
contaminated normal; the axes are independent. All density work is done
on the log scale.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import linear_sum_assignment

from .numerics import LinAlgError, cholesky, sym_eigen

LOG_2PI = math.log(2.0 * math.pi)
ORTHO_TOL = 1e-8


def _vec(a: ArrayLike, name: str) -> NDArray:
    out = np.array(a, dtype=float).ravel()
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} has non-finite entries")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class MscnParams:
    """One MSCN component. Arrays are copied and made read-only."""

    mu: NDArray
    gamma: NDArray
    lam: NDArray
    alpha: NDArray
    eta: NDArray

    def __post_init__(self):
        mu = _vec(self.mu, "mu")
        d = mu.size
        gamma = np.array(self.gamma, dtype=float).reshape(d, d)
        gamma.setflags(write=False)
        lam, alpha, eta = (_vec(getattr(self, k), k) for k in ("lam", "alpha", "eta"))
        for name, arr in (("lam", lam), ("alpha", alpha), ("eta", eta)):
            if arr.size != d:
                raise ValueError(f"{name} must have length {d}, got {arr.size}")
        if np.max(np.abs(gamma.T @ gamma - np.eye(d))) > ORTHO_TOL:
            raise ValueError("gamma is not orthogonal")
        if np.any(lam <= 0):
            raise ValueError("lam entries must be positive")
        # alpha = 1, eta = 1 is the Gaussian special case
        if np.any((alpha <= 0) | (alpha > 1)):
            raise ValueError("alpha entries must lie in (0, 1]")
        if np.any(eta < 1):
            raise ValueError("eta entries must be at least 1")
        for k, v in (("mu", mu), ("gamma", gamma), ("lam", lam), ("alpha", alpha), ("eta", eta)):
            object.__setattr__(self, k, v)

    @property
    def d(self) -> int:
        return self.mu.size

    @property
    def sigma(self) -> NDArray:
        return (self.gamma * self.lam) @ self.gamma.T

    @classmethod
    def from_sigma(cls, mu, sigma, alpha, eta) -> "MscnParams":
        eig = sym_eigen(sigma)
        return cls(mu, eig.vectors, eig.values, alpha, eta)

    def replace(self, **changes) -> "MscnParams":
        fields = {k: getattr(self, k) for k in ("mu", "gamma", "lam", "alpha", "eta")}
        fields.update(changes)
        return MscnParams(**fields)

    def permute_axes(self, order) -> "MscnParams":
        """Same distribution with rotated axis ``order[h]`` moved to position ``h``."""
        order = np.asarray(order, dtype=int)
        return self.replace(
            gamma=self.gamma[:, order],
            lam=self.lam[order],
            alpha=self.alpha[order],
            eta=self.eta[order],
        )


def align_axes(p: MscnParams) -> MscnParams:
    """Order the rotated axes so that axis ``h`` loads most on variable ``h``.

    The density does not depend on the order of the axes. Matching each
    axis to the original variable it is closest to (a linear assignment on
    ``|gamma|``) makes per-axis quantities comparable with per-variable
    ones, e.g. when scoring outlier flags against known bad cells.
    """
    rows, cols = linear_sum_assignment(-np.abs(p.gamma))
    order = cols[np.argsort(rows)]
    return p.permute_axes(order)


@dataclass(frozen=True)
class McnParams:
    mu: NDArray
    sigma: NDArray
    alpha: float
    eta: float

    def __post_init__(self):
        mu = _vec(self.mu, "mu")
        sigma = np.array(self.sigma, dtype=float).reshape(mu.size, mu.size)
        cholesky(sigma)
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.eta > 1:
            raise ValueError("eta must exceed 1")
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)


@dataclass(frozen=True)
class ContaminationPattern:
    """Good (1) / bad (0) indicator per rotated axis."""

    v: tuple[int, ...]

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.v):
            raise ValueError("pattern entries must be 0 or 1")

    def inverse_weights(self, eta: ArrayLike) -> NDArray:
        """Diagonal of the inverse-weight matrix: 1 on good axes, eta on bad ones."""
        v = np.array(self.v, dtype=float)
        return 1.0 / (v + (1.0 - v) / np.asarray(eta, dtype=float))

    def log_prob(self, alpha: ArrayLike) -> float:
        v = np.array(self.v, dtype=float)
        a = np.asarray(alpha, dtype=float)
        with np.errstate(divide="ignore"):
            log_bad = np.log1p(-a)
        return float(np.sum(np.where(v == 1, np.log(a), log_bad)))


def all_patterns(d: int):
    for bits in itertools.product((1, 0), repeat=d):
        yield ContaminationPattern(bits)


# ---------------------------------------------------------------------------
# Normal and contaminated normal
# ---------------------------------------------------------------------------


def norm_logpdf(x, var):
    """Centred univariate normal log-density, broadcasting over arrays."""
    x = np.asarray(x, dtype=float)
    return -0.5 * (LOG_2PI + np.log(var) + x * x / var)


def mn_logpdf(x: ArrayLike, mu: ArrayLike, sigma: ArrayLike) -> float | NDArray:
    """Multivariate normal log-density.

    ``x`` may be a single point or an ``(n, d)`` array of points.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    d = mu.size
    omega = cholesky(np.asarray(sigma, dtype=float).reshape(d, d))
    x = np.asarray(x, dtype=float)
    pts = np.atleast_2d(x) if x.ndim <= 1 else x
    pts = pts.reshape(-1, d)
    # solve omega.T y = (x - mu)
    resid = pts - mu
    y = np.linalg.solve(omega.T, resid.T).T
    logdet = 2.0 * np.sum(np.log(np.diag(omega)))
    out = -0.5 * (d * LOG_2PI + logdet + np.sum(y * y, axis=1))
    return float(out[0]) if x.ndim <= 1 else out


def mcn_logpdf(x: ArrayLike, p: McnParams) -> float | NDArray:
    good = math.log(p.alpha) + mn_logpdf(x, p.mu, p.sigma)
    bad = math.log1p(-p.alpha) + mn_logpdf(x, p.mu, p.eta * p.sigma)
    return np.logaddexp(good, bad)


def mcn_pdf(x: ArrayLike, p: McnParams) -> float | NDArray:
    return np.exp(mcn_logpdf(x, p))


def mcn_posterior_good(x: ArrayLike, p: McnParams) -> float | NDArray:
    """Posterior probability that ``x`` was generated by the good component.

    A point is called good when this exceeds 1/2.
    """
    good = math.log(p.alpha) + mn_logpdf(x, p.mu, p.sigma)
    return np.exp(good - mcn_logpdf(x, p))


def cn_logpdf(r, var, alpha, eta):
    """Univariate contaminated normal centred at 0, broadcasting."""
    good = np.log(alpha) + norm_logpdf(r, var)
    bad = np.log1p(-np.asarray(alpha, dtype=float)) + norm_logpdf(r, np.asarray(eta) * var)
    return np.logaddexp(good, bad)


# ---------------------------------------------------------------------------
# MSCN
# ---------------------------------------------------------------------------


def rotated_residuals(x: ArrayLike, p: MscnParams) -> NDArray:
    """Coordinates ``gamma.T (x - mu)`` for each row of ``x``."""
    pts = np.asarray(x, dtype=float).reshape(-1, p.d)
    return (pts - p.mu) @ p.gamma


def axis_log_terms(r: NDArray, p: MscnParams) -> tuple[NDArray, NDArray]:
    """Log of the good and bad joint terms for every rotated coordinate."""
    good = np.log(p.alpha) + norm_logpdf(r, p.lam)
    with np.errstate(divide="ignore"):
        bad = np.log1p(-p.alpha) + norm_logpdf(r, p.eta * p.lam)
    return good, bad


def mscn_logpdf(x: ArrayLike, p: MscnParams) -> float | NDArray:
    """MSCN log-density of a point or of each row of an ``(n, d)`` array."""
    x = np.asarray(x, dtype=float)
    good, bad = axis_log_terms(rotated_residuals(x, p), p)
    out = np.sum(np.logaddexp(good, bad), axis=1)
    return float(out[0]) if x.ndim <= 1 else out


def mscn_logpdf_enumerated(x: ArrayLike, p: MscnParams) -> float:
    """Log-density by explicit summation over all 2**d contamination patterns.

    Each pattern contributes a multivariate normal with covariance
    ``gamma W lam gamma.T`` weighted by the pattern probability. Slow, and
    kept only as a cross-check of :func:`mscn_logpdf`.
    """
    terms = []
    for pat in all_patterns(p.d):
        cov = (p.gamma * (pat.inverse_weights(p.eta) * p.lam)) @ p.gamma.T
        cov = 0.5 * (cov + cov.T)
        terms.append(pat.log_prob(p.alpha) + mn_logpdf(x, p.mu, cov))
    terms = np.array(terms)
    top = terms.max()
    return float(top + math.log(np.sum(np.exp(terms - top))))


def mscn_posterior_good(x: ArrayLike, p: MscnParams) -> NDArray:
    """Per-axis posterior probability of being good, shape ``(n, d)`` or ``(d,)``."""
    x = np.asarray(x, dtype=float)
    good, bad = axis_log_terms(rotated_residuals(x, p), p)
    v = np.exp(good - np.logaddexp(good, bad))
    return v[0] if x.ndim <= 1 else v


def mscn_covariance(p: MscnParams) -> NDArray:
    """Covariance of the law: inflate each axis variance by ``alpha + (1 - alpha) eta``."""
    return (p.gamma * (p.lam * (p.alpha + (1 - p.alpha) * p.eta))) @ p.gamma.T


def mscn_sample(p: MscnParams, n: int, seed: int | np.random.Generator) -> NDArray:
    """Draw ``n`` points as ``mu + gamma lam^(1/2) W^(1/2) y`` with ``y`` standard normal.

    The contamination indicators are drawn first (one uniform per axis),
    then the standard normal block, both from the same generator.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    good = rng.random((n, p.d)) < p.alpha
    y = rng.standard_normal((n, p.d))
    scale = np.sqrt(p.lam * np.where(good, 1.0, p.eta))
    return p.mu + (y * scale) @ p.gamma.T


def rotation_matrix(theta: float) -> NDArray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class DensityGrid:
    xs: NDArray
    ys: NDArray
    logpdf: NDArray = field(repr=False)  # logpdf[i, j] at (xs[j], ys[i])

    def rows(self):
        for i, y in enumerate(self.ys):
            for j, x in enumerate(self.xs):
                yield float(x), float(y), float(self.logpdf[i, j])


def grid_logpdf(logpdf, xlim, ylim, resolution: int) -> DensityGrid:
    """Evaluate a bivariate ``logpdf`` (rows of points in, values out) on a regular grid."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    if not (xlim[0] < xlim[1] and ylim[0] < ylim[1]):
        raise ValueError("grid limits must be increasing")
    xs = np.linspace(xlim[0], xlim[1], resolution)
    ys = np.linspace(ylim[0], ylim[1], resolution)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return DensityGrid(xs, ys, np.asarray(logpdf(pts)).reshape(resolution, resolution))


def mscn_density_grid(p: MscnParams, xlim, ylim, resolution: int) -> DensityGrid:
    """Log-density on a regular ``resolution x resolution`` grid (bivariate only)."""
    if p.d != 2:
        raise ValueError(f"density grids need d = 2, got d = {p.d}")
    return grid_logpdf(lambda pts: mscn_logpdf(pts, p), xlim, ylim, resolution)


__all__ = [
    "ContaminationPattern",
    "DensityGrid",
    "align_axes",
    "grid_logpdf",
    "LinAlgError",
    "McnParams",
    "MscnParams",
    "all_patterns",
    "cn_logpdf",
    "mcn_logpdf",
    "mcn_pdf",
    "mcn_posterior_good",
    "mn_logpdf",
    "mscn_covariance",
    "mscn_density_grid",
    "mscn_logpdf",
    "mscn_logpdf_enumerated",
    "mscn_posterior_good",
    "mscn_sample",
    "norm_logpdf",
    "rotated_residuals",
    "rotation_matrix",
]
