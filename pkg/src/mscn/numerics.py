"""Dense linear algebra and unconstrained maximization helpers.

Everything here is a pure function of its inputs. Matrices are small
(d up to a few dozen), so clarity wins over blocking or vectorization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

SYMMETRY_TOL = 1e-12


class LinAlgError(ValueError):
    """Raised for inputs a factorization cannot handle."""


class SymEigen(NamedTuple):
    """Eigen-decomposition ``m = vectors @ diag(values) @ vectors.T``.

    ``values`` are sorted in descending order and every column of
    ``vectors`` has its largest-magnitude entry non-negative.
    """

    values: NDArray
    vectors: NDArray

    def reconstruct(self) -> NDArray:
        return (self.vectors * self.values) @ self.vectors.T


def _as_square(m: ArrayLike) -> NDArray:
    a = np.array(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise LinAlgError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise LinAlgError("matrix has non-finite entries")
    return a


def _check_symmetric(a: NDArray) -> None:
    if np.max(np.abs(a - a.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(a))):
        raise LinAlgError("matrix is not symmetric")


def canonical_signs(vectors: NDArray) -> NDArray:
    """Flip columns so each one's largest-magnitude entry is non-negative."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def canonicalize(values: NDArray, vectors: NDArray) -> SymEigen:
    """Sort eigenpairs descending and fix each eigenvector's sign."""
    order = np.argsort(-values, kind="stable")
    return SymEigen(values[order], canonical_signs(vectors[:, order]))


def sym_eigen(m: ArrayLike) -> SymEigen:
    """Eigen-decomposition of a symmetric matrix.

    Backed by LAPACK's symmetric solver; :func:`jacobi_eigen` computes the
    same canonical decomposition with cyclic Jacobi rotations.
    """
    a = _as_square(m)
    _check_symmetric(a)
    a = 0.5 * (a + a.T)
    values, vectors = np.linalg.eigh(a)
    return canonicalize(values, vectors)


def jacobi_eigen(m: ArrayLike, tol: float = 1e-15, max_sweeps: int = 100) -> SymEigen:
    """Cyclic Jacobi eigen-solver for symmetric matrices.

    Each sweep annihilates every off-diagonal pair once; iteration stops
    when the off-diagonal Frobenius norm falls below ``tol`` times the
    full norm.
    """
    a = _as_square(m)
    _check_symmetric(a)
    a = 0.5 * (a + a.T)
    d = a.shape[0]
    v = np.eye(d)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return canonicalize(np.zeros(d), v)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(d)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                a[p, q] = a[q, p] = 0.0
                v = v @ rot
    return canonicalize(np.diag(a).copy(), v)


def cholesky(m: ArrayLike) -> NDArray:
    """Upper-triangular ``omega`` with positive diagonal and ``omega.T @ omega = m``.

    Raises :class:`LinAlgError` when a leading minor is not positive.
    """
    a = _as_square(m)
    _check_symmetric(a)
    d = a.shape[0]
    omega = np.zeros_like(a)
    for j in range(d):
        pivot = a[j, j] - omega[:j, j] @ omega[:j, j]
        if not pivot > 0.0:
            raise LinAlgError(f"matrix is not positive definite (leading minor {j + 1})")
        omega[j, j] = np.sqrt(pivot)
        for i in range(j + 1, d):
            omega[j, i] = (a[j, i] - omega[:j, j] @ omega[:j, i]) / omega[j, j]
    return omega


def chol_to_params(omega: NDArray) -> NDArray:
    """Flatten an upper Cholesky factor into unconstrained parameters.

    The diagonal is stored on the log scale so that any real vector maps
    back to a positive definite matrix.
    """
    d = omega.shape[0]
    rows, cols = np.triu_indices(d)
    out = omega[rows, cols].copy()
    diag = rows == cols
    out[diag] = np.log(out[diag])
    return out


def params_to_chol(theta: NDArray, d: int) -> NDArray:
    rows, cols = np.triu_indices(d)
    vals = np.array(theta, dtype=float)
    diag = rows == cols
    vals[diag] = np.exp(vals[diag])
    omega = np.zeros((d, d))
    omega[rows, cols] = vals
    return omega


def cayley(theta: ArrayLike, d: int) -> NDArray:
    """Rotation ``(I - K)^-1 (I + K)`` for the skew-symmetric ``K`` whose
    strict upper triangle is ``theta`` (row-major). ``theta = 0`` gives the
    identity."""
    k = np.zeros((d, d))
    k[np.triu_indices(d, 1)] = theta
    k = k - k.T
    eye = np.eye(d)
    return np.linalg.solve(eye - k, eye + k)


def nearest_orthogonal(m: ArrayLike) -> NDArray:
    """Orthogonal polar factor of ``m``; removes rounding drift from products of rotations."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    return u @ vt


# ---------------------------------------------------------------------------
# Quasi-Newton maximization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MaximizeOptions:
    grad_tol: float = 1e-6
    max_evals: int = 200
    armijo: float = 1e-4
    backtrack: float = 0.5
    min_step: float = 1e-12


@dataclass(frozen=True)
class MaximizeResult:
    x: NDArray
    value: float
    grad_norm: float
    n_evals: int
    converged: bool
    reason: str

    def __iter__(self):
        # unpacks as (argmax, value)
        yield self.x
        yield self.value


def fd_step(x: NDArray) -> NDArray:
    return np.maximum(1e-6, 1e-6 * np.abs(x))


def fd_gradient(f: Callable[[NDArray], float], x: NDArray) -> NDArray:
    """Central finite-difference gradient with step ``max(1e-6, 1e-6 |x_i|)``."""
    h = fd_step(x)
    g = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        g[i] = (f(xp) - f(xm)) / (2.0 * h[i])
    return g


def maximize(
    f: Callable[[NDArray], float],
    x0: ArrayLike,
    opts: MaximizeOptions | None = None,
) -> MaximizeResult:
    """Maximize ``f`` with BFGS, Armijo backtracking and numerical gradients.

    The returned value is never below ``f(x0)``: every accepted step must
    satisfy the sufficient-increase condition. If the inverse-Hessian
    approximation stops producing ascent directions it is reset to a
    scaled identity, i.e. the next step is steepest ascent.
    """
    opts = opts or MaximizeOptions()
    x = np.array(x0, dtype=float).ravel()
    n_evals = 0

    def F(z: NDArray) -> float:
        nonlocal n_evals
        n_evals += 1
        val = float(f(z))
        return val if np.isfinite(val) else -np.inf

    fx = F(x)
    if not np.isfinite(fx):
        raise ValueError("objective is not finite at the starting point")
    p = x.size
    g = fd_gradient(F, x)
    H = np.eye(p)
    first = True

    while True:
        gnorm = float(np.linalg.norm(g))
        if gnorm <= opts.grad_tol:
            return MaximizeResult(x, fx, gnorm, n_evals, True, "gradient tolerance reached")
        if n_evals >= opts.max_evals:
            return MaximizeResult(x, fx, gnorm, n_evals, False, "evaluation budget exhausted")

        direction = H @ g
        slope = float(g @ direction)
        if not slope > 0.0:
            H = np.eye(p)
            direction = g.copy()
            slope = float(g @ g)
        if first:
            # keep the very first trial step at unit length
            step = min(1.0, 1.0 / np.linalg.norm(direction))
        else:
            step = 1.0

        accepted = False
        while step >= opts.min_step and n_evals < opts.max_evals:
            x_new = x + step * direction
            f_new = F(x_new)
            if f_new >= fx + opts.armijo * step * slope:
                accepted = True
                break
            step *= opts.backtrack
        if not accepted:
            reason = "line search failed" if step < opts.min_step else "evaluation budget exhausted"
            return MaximizeResult(x, fx, gnorm, n_evals, False, reason)

        g_new = fd_gradient(F, x_new)
        s = x_new - x
        # ascent form: y is the change in the negated gradient
        y = g - g_new
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if first:
                H = np.eye(p) * (sy / float(y @ y))
            rho = 1.0 / sy
            Hy = H @ y
            H = H + (1.0 + rho * float(y @ Hy)) * rho * np.outer(s, s) - rho * (
                np.outer(Hy, s) + np.outer(s, Hy)
            )
        else:
            H = np.eye(p)
        first = False
        x, fx, g = x_new, f_new, g_new
