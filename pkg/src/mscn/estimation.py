"""Maximum likelihood fitting of MSCN mixtures and of the Gaussian baseline.

The MSCN mixture is fitted with an AECM algorithm. Each iteration runs:

1. an E-step computing memberships ``z`` (n x k) and per-axis good
   posteriors ``v`` (n x d x k);
2. a first CM-step giving closed-form updates of the weights, ``alpha``,
   ``mu`` and ``eta`` with the orientation and axis variances held fixed;
3. a refresh of ``z`` at the partially updated parameters, followed by a
   second CM-step that maximizes the ``z``-weighted MSCN log-likelihood of
   each component over its orientation and axis variances.

Iterations stop on Aitken's acceleration criterion or after ``max_iter``.
The rotated axes of each fitted component are then put in the order that
best matches the original variables (see
:func:`~mscn.distributions.align_axes`).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .distributions import MscnParams, align_axes, axis_log_terms, norm_logpdf, rotated_residuals
from .mixtures import (
    MNM,
    MSCNM,
    MixtureModel,
    gaussian_component,
    observed_loglik,
    posterior_v_all,
    posterior_z,
)
from .numerics import (
    LinAlgError,
    MaximizeOptions,
    canonical_signs,
    cayley,
    chol_to_params,
    cholesky,
    maximize,
    nearest_orthogonal,
    params_to_chol,
    sym_eigen,
)

logger = logging.getLogger(__name__)


SCALE_PARAMETRIZATIONS = ("rotation", "cholesky")


class DegenerateComponentError(RuntimeError):
    """A component lost (almost) all of its members during fitting."""


class DegenerateDataError(ValueError):
    pass


@dataclass(frozen=True)
class FitConfig:
    k: int = 1
    epsilon: float = 1e-3
    max_iter: int = 200
    eta_floor: float = 1.001
    alpha_floor: float = 0.5
    alpha_ceiling: float = 0.999
    v_init: float = 0.99
    alpha_init: float = 0.99
    eta_init: float = 1.01
    optimizer: MaximizeOptions = field(default_factory=MaximizeOptions)
    scale_param: str = "rotation"
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.eta_floor > 1:
            raise ValueError("eta_floor must exceed 1")
        if not 0 <= self.alpha_floor < self.alpha_ceiling < 1:
            raise ValueError("need 0 <= alpha_floor < alpha_ceiling < 1")
        for name in ("v_init", "alpha_init"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not self.eta_init > 1:
            raise ValueError("eta_init must exceed 1")
        if self.scale_param not in SCALE_PARAMETRIZATIONS:
            raise ValueError(f"scale_param must be one of {SCALE_PARAMETRIZATIONS}")


@dataclass
class FitState:
    z: NDArray
    v: NDArray
    loglik_trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    reason: str = ""
    # iterations where the scale-matrix step kept its previous value
    fallback_iterations: list[int] = field(default_factory=list)

    @property
    def loglik(self) -> float:
        return self.loglik_trace[-1] if self.loglik_trace else float("nan")

    @property
    def labels(self) -> NDArray:
        return np.argmax(self.z, axis=1)


IterationCallback = Callable[[dict], None]


def _check_data(data: ArrayLike) -> NDArray:
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("data must be a non-empty (n, d) matrix")
    if not np.all(np.isfinite(x)):
        raise ValueError("data contain non-finite values")
    if np.all(x == x[0]):
        raise DegenerateDataError("all observations are identical")
    return x


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


def init_kmedoids(data: ArrayLike, k: int) -> NDArray:
    """Partition around medoids (BUILD then SWAP) with Euclidean distances.

    Fully deterministic: ties go to the lowest index. Clusters are numbered
    by the row index of their medoid.
    """
    x = _check_data(data)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if np.unique(x, axis=0).shape[0] < k:
        raise ValueError("fewer distinct observations than clusters")
    sq = np.sum(x * x, axis=1)
    dist = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2 * x @ x.T, 0.0))
    np.fill_diagonal(dist, 0.0)

    medoids = [int(np.argmin(dist.sum(axis=0)))]
    nearest = dist[:, medoids[0]].copy()
    while len(medoids) < k:
        gain = np.maximum(nearest[:, None] - dist, 0.0).sum(axis=0)
        gain[medoids] = -np.inf
        best = int(np.argmax(gain))
        medoids.append(best)
        nearest = np.minimum(nearest, dist[:, best])

    cost = nearest.sum()
    while True:
        med = np.array(medoids)
        dm = dist[:, med]
        order = np.argsort(dm, axis=1, kind="stable")
        d1 = dm[np.arange(n), order[:, 0]]
        d2 = dm[np.arange(n), order[:, 1]] if k > 1 else np.full(n, np.inf)
        best_cost, best_swap = cost, None
        for i in range(k):
            # distance of each point to its closest medoid once medoid i is removed
            base = np.where(order[:, 0] == i, d2, d1)
            new_cost = np.minimum(base[:, None], dist).sum(axis=0)
            new_cost[med] = np.inf
            o = int(np.argmin(new_cost))
            if new_cost[o] < best_cost - 1e-10 * max(1.0, abs(best_cost)):
                best_cost, best_swap = new_cost[o], (i, o)
        if best_swap is None:
            break
        medoids[best_swap[0]] = best_swap[1]
        cost = best_cost

    med = np.array(sorted(medoids))
    return np.argmin(dist[:, med], axis=1)


def _cluster_cov(x: NDArray, weights: NDArray, d: int, fallback_trace: float) -> NDArray:
    nj = weights.sum()
    mu = weights @ x / nj
    r = x - mu
    denom = nj - 1 if nj > 1 else 1.0
    cov = (r * weights[:, None]).T @ r / denom
    cov = 0.5 * (cov + cov.T)
    try:
        ok = nj >= d + 1 and np.min(sym_eigen(cov).values) > 0
    except LinAlgError:
        ok = False
    if not ok:
        tr = np.trace(cov)
        ridge = 1e-6 * (tr if tr > 0 else fallback_trace) / d
        warnings.warn("singular cluster covariance; adding a ridge", RuntimeWarning, stacklevel=3)
        cov = cov + ridge * np.eye(d)
    return cov


def init_state(data: ArrayLike, labels: ArrayLike, cfg: FitConfig) -> tuple[MixtureModel, FitState]:
    """Starting model and state from a hard partition.

    ``z`` is the label indicator matrix, every ``v`` equals ``cfg.v_init``,
    and each component takes the mean, eigen-decomposed covariance and
    share of its cluster.
    """
    x = _check_data(data)
    labels = np.asarray(labels, dtype=int)
    n, d = x.shape
    k = cfg.k
    if labels.shape != (n,) or labels.min() < 0 or labels.max() >= k:
        raise ValueError("labels must be n integers in [0, k)")
    z = np.zeros((n, k))
    z[np.arange(n), labels] = 1.0
    counts = z.sum(axis=0)
    if np.any(counts == 0):
        raise DegenerateComponentError("an initial cluster is empty")
    total_trace = float(np.trace(np.atleast_2d(np.cov(x, rowvar=False))))
    comps = []
    for j in range(k):
        w = z[:, j]
        mu = w @ x / counts[j]
        cov = _cluster_cov(x, w, d, total_trace)
        comps.append(
            MscnParams.from_sigma(mu, cov, np.full(d, cfg.alpha_init), np.full(d, cfg.eta_init))
        )
    model = MixtureModel(counts / n, tuple(comps), MSCNM)
    v = np.full((n, d, k), cfg.v_init)
    return model, FitState(z=z, v=v)


# ---------------------------------------------------------------------------
# AECM steps
# ---------------------------------------------------------------------------


def e_step(data: ArrayLike, m: MixtureModel) -> tuple[NDArray, NDArray]:
    x = _check_data(data)
    return posterior_z(x, m), posterior_v_all(x, m)


def _normalized_weights(nj: NDArray) -> NDArray:
    w = nj / nj.sum()
    return w / w.sum()


def cm_step1(data: ArrayLike, m: MixtureModel, z: NDArray, v: NDArray, cfg: FitConfig) -> MixtureModel:
    """Closed-form updates of weights, ``alpha``, ``mu`` and ``eta``.

    The orientation ``gamma`` and variances ``lam`` stay fixed. The mean is
    the weighted average of the rotated coordinates, each weighted by
    ``z * (v + (1 - v) / eta)``, mapped back through ``gamma``. The new
    ``eta`` uses the new mean and the old orientation and variances.
    """
    x = _check_data(data)
    n, d = x.shape
    nj = z.sum(axis=0)
    if np.any(nj < d + 1):
        j = int(np.argmin(nj))
        raise DegenerateComponentError(
            f"component {j} has effective size {nj[j]:.3g} < d + 1 = {d + 1}"
        )
    comps = []
    for j, c in enumerate(m.components):
        zj = z[:, j]
        vj = v[:, :, j]
        alpha = np.clip(zj @ vj / nj[j], cfg.alpha_floor, cfg.alpha_ceiling)
        w = zj[:, None] * (vj + (1.0 - vj) / c.eta)
        y = x @ c.gamma
        centre = np.sum(w * y, axis=0) / np.sum(w, axis=0)
        mu = c.gamma @ centre
        r = (x - mu) @ c.gamma
        bad = zj[:, None] * (1.0 - vj)
        bad_mass = bad.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            eta = np.sum(bad * r * r, axis=0) / (c.lam * bad_mass)
        eta = np.where(bad_mass > 0, eta, cfg.eta_floor)
        eta = np.maximum(cfg.eta_floor, eta)
        comps.append(c.replace(mu=mu, alpha=alpha, eta=eta))
    return MixtureModel(_normalized_weights(nj), tuple(comps), m.family)


def _weighted_loglik(x: NDArray, zj: NDArray, c: MscnParams) -> float:
    good, bad = axis_log_terms(rotated_residuals(x, c), c)
    return float(zj @ np.sum(np.logaddexp(good, bad), axis=1))


def cm_step2_component(
    x: NDArray,
    zj: NDArray,
    c: MscnParams,
    opts: MaximizeOptions,
    scale_param: str = "rotation",
) -> tuple[MscnParams, bool]:
    """Maximize the ``zj``-weighted log-likelihood of one component over its scale.

    Two unconstrained parametrizations are available:

    ``"cholesky"``
        the upper Cholesky factor of the scale matrix (log diagonal); each
        trial matrix is split into orientation and variances by a sorted
        eigen-decomposition.
    ``"rotation"``
        ``gamma = gamma_old @ cayley(K)`` with ``K`` skew-symmetric, plus
        log variances. Axes keep their identity (and hence their ``alpha``
        and ``eta``) even when their variances change order.

    The objective is divided by ``sum(zj)`` so the gradient tolerance does
    not depend on the sample size. Returns the component and whether it
    improved on the incoming value; otherwise the incoming component is
    returned unchanged.
    """
    d = c.d
    nj = float(zj.sum())

    if scale_param == "cholesky":
        def split(theta: NDArray):
            omega = params_to_chol(theta, d)
            eig = sym_eigen(omega.T @ omega)
            return eig.vectors, eig.values

        theta0 = chol_to_params(cholesky(0.5 * (c.sigma + c.sigma.T)))
    elif scale_param == "rotation":
        n_rot = d * (d - 1) // 2

        def split(theta: NDArray):
            return c.gamma @ cayley(theta[:n_rot], d), np.exp(theta[n_rot:])

        theta0 = np.concatenate([np.zeros(n_rot), np.log(c.lam)])
    else:
        raise ValueError(f"unknown scale parametrization {scale_param!r}")

    resid = x - c.mu
    log_good = np.log(c.alpha)
    with np.errstate(divide="ignore"):
        log_bad = np.log1p(-c.alpha)

    def objective(theta: NDArray) -> float:
        gamma, lam = split(theta)
        if not np.all(lam > 0):
            return -np.inf
        r = resid @ gamma
        good = log_good + norm_logpdf(r, lam)
        bad = log_bad + norm_logpdf(r, c.eta * lam)
        return float(zj @ np.sum(np.logaddexp(good, bad), axis=1)) / nj

    before = _weighted_loglik(x, zj, c) / nj
    try:
        res = maximize(objective, theta0, opts)
    except ValueError:
        return c, False
    if not res.value > before:
        return c, False
    gamma, lam = split(res.x)
    try:
        new = c.replace(gamma=canonical_signs(nearest_orthogonal(gamma)), lam=lam)
    except ValueError:
        return c, False
    # guard against the back-transformation changing the value
    if _weighted_loglik(x, zj, new) / nj < before:
        return c, False
    return new, True


def cm_step2(data: ArrayLike, m: MixtureModel, z: NDArray, cfg: FitConfig) -> tuple[MixtureModel, bool]:
    """Update every component's orientation and axis variances.

    Returns the new model and ``True`` when any component had to keep its
    previous scale matrix.
    """
    x = _check_data(data)
    comps, fell_back = [], False
    for j, c in enumerate(m.components):
        new, improved = cm_step2_component(x, z[:, j], c, cfg.optimizer, cfg.scale_param)
        comps.append(new)
        fell_back |= not improved
    return MixtureModel(m.weights, tuple(comps), m.family), fell_back


def aitken_converged(loglik_trace, epsilon: float) -> bool:
    """Aitken-acceleration stopping rule on the last three log-likelihoods.

    With ``a = (l_new - l_r) / (l_r - l_prev)`` the asymptotic estimate is
    ``l_A = l_r + (l_new - l_r) / (1 - a)``; the run has converged when
    ``0 < l_A - l_r < epsilon``. A step that leaves the log-likelihood
    unchanged also counts as converged; ``a = 1`` (steady linear growth)
    does not.
    """
    if len(loglik_trace) < 3:
        return False
    l_prev, l_r, l_new = (float(v) for v in loglik_trace[-3:])
    if l_r == l_prev or l_new == l_r:
        return True
    a = (l_new - l_r) / (l_r - l_prev)
    if a == 1.0:
        return False
    gap = (l_new - l_r) / (1.0 - a)
    return 0.0 < gap < epsilon


def _aitken_gap(trace: list[float]) -> float | None:
    if len(trace) < 3:
        return None
    l_prev, l_r, l_new = trace[-3:]
    if l_r == l_prev:
        return 0.0
    a = (l_new - l_r) / (l_r - l_prev)
    return None if a == 1.0 else (l_new - l_r) / (1.0 - a)


def _record(callback, iteration, loglik, trace, **extra):
    if callback is None:
        return
    rec = {"iteration": iteration, "loglik": loglik, "aitken_gap": _aitken_gap(trace)}
    rec.update(extra)
    callback(rec)


def fit(
    data: ArrayLike,
    cfg: FitConfig,
    labels: ArrayLike | None = None,
    callback: IterationCallback | None = None,
) -> tuple[MixtureModel, FitState]:
    """Fit a ``cfg.k``-component MSCN mixture.

    Starts from the k-medoids partition unless ``labels`` are given. The
    first iteration begins at the first CM-step using the initial ``z`` and
    ``v``; later iterations begin with a full E-step. On exit the state
    holds ``z`` and ``v`` evaluated at the returned model.
    """
    x = _check_data(data)
    if labels is None:
        labels = init_kmedoids(x, cfg.k)
    model, state = init_state(x, labels, cfg)
    z, v = state.z, state.v
    trace = state.loglik_trace
    for r in range(1, cfg.max_iter + 1):
        if r > 1:
            z, v = e_step(x, model)
        model = cm_step1(x, model, z, v, cfg)
        z_mid = posterior_z(x, model)
        model, fell_back = cm_step2(x, model, z_mid, cfg)
        if fell_back:
            state.fallback_iterations.append(r)
        trace.append(observed_loglik(x, model))
        state.iterations = r
        _record(callback, r, trace[-1], trace)
        if aitken_converged(trace, cfg.epsilon):
            state.converged, state.reason = True, "aitken"
            break
    else:
        state.reason = "max_iter"
    model = MixtureModel(model.weights, tuple(align_axes(c) for c in model.components), model.family)
    state.z, state.v = e_step(x, model)
    return model, state


# ---------------------------------------------------------------------------
# Gaussian mixture baseline
# ---------------------------------------------------------------------------


def _gaussian_m_step(x: NDArray, z: NDArray) -> MixtureModel:
    n, d = x.shape
    nj = z.sum(axis=0)
    if np.any(nj < d + 1):
        j = int(np.argmin(nj))
        raise DegenerateComponentError(
            f"component {j} has effective size {nj[j]:.3g} < d + 1 = {d + 1}"
        )
    comps = []
    for j in range(z.shape[1]):
        mu = z[:, j] @ x / nj[j]
        r = x - mu
        cov = (r * z[:, j, None]).T @ r / nj[j]
        cov = 0.5 * (cov + cov.T)
        try:
            cholesky(cov)
        except LinAlgError:
            warnings.warn("singular component covariance; adding a ridge", RuntimeWarning, stacklevel=3)
            cov = cov + 1e-6 * np.trace(cov) / d * np.eye(d)
        comps.append(gaussian_component(mu, cov))
    return MixtureModel(_normalized_weights(nj), tuple(comps), MNM)


def fit_gaussian_baseline(
    data: ArrayLike,
    cfg: FitConfig,
    labels: ArrayLike | None = None,
    callback: IterationCallback | None = None,
) -> tuple[MixtureModel, FitState]:
    """EM for a mixture of unrestricted Gaussians, same start and stopping rule."""
    x = _check_data(data)
    n, d = x.shape
    if labels is None:
        labels = init_kmedoids(x, cfg.k)
    labels = np.asarray(labels, dtype=int)
    z = np.zeros((n, cfg.k))
    z[np.arange(n), labels] = 1.0
    state = FitState(z=z, v=np.ones((n, d, cfg.k)))
    trace = state.loglik_trace
    for r in range(1, cfg.max_iter + 1):
        model = _gaussian_m_step(x, z)
        trace.append(observed_loglik(x, model))
        state.iterations = r
        _record(callback, r, trace[-1], trace)
        z = posterior_z(x, model)
        if aitken_converged(trace, cfg.epsilon):
            state.converged, state.reason = True, "aitken"
            break
    else:
        state.reason = "max_iter"
    state.z = z
    return model, state


def fit_family(data, family: str, cfg: FitConfig, labels=None, callback=None):
    family = family.upper()
    if family == MSCNM:
        return fit(data, cfg, labels, callback)
    if family == MNM:
        return fit_gaussian_baseline(data, cfg, labels, callback)
    raise ValueError(f"unknown family {family!r}")


__all__ = [
    "DegenerateComponentError",
    "DegenerateDataError",
    "FitConfig",
    "FitState",
    "aitken_converged",
    "cm_step1",
    "cm_step2",
    "cm_step2_component",
    "e_step",
    "fit",
    "fit_family",
    "fit_gaussian_baseline",
    "init_kmedoids",
    "init_state",
]
