"""Truncated eigensolvers, SVD, spectral norms and eigenvector correlation.

All solvers work on matrix-free operators: anything accepted by
:func:`as_operator` (a callable ``x -> M @ x``, a dense array, a scipy
sparse matrix or a ``LinearOperator``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "ORDER_MODES",
    "ConvergenceError",
    "EigenPairs",
    "SVDTriplet",
    "NormEstimate",
    "as_operator",
    "lanczos_eig",
    "truncated_svd",
    "symmetric_svd",
    "spectral_norm",
    "estimate_norm",
    "prefix_correlation",
    "fix_signs",
]

ORDER_MODES = ("descending-algebraic", "descending-magnitude", "ascending-magnitude")


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver runs out of restarts.

    ``residuals`` holds the last residual norms and ``best`` the last Ritz
    approximation, so callers can still use it.
    """

    def __init__(self, message, residuals=None, best=None):
        super().__init__(message)
        self.residuals = residuals
        self.best = best


@dataclass(frozen=True)
class EigenPairs:
    values: np.ndarray
    vectors: np.ndarray
    order_mode: str
    residuals: np.ndarray | None = None

    @property
    def d(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class SVDTriplet:
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    @property
    def d(self) -> int:
        return len(self.sigma)


class NormEstimate(NamedTuple):
    value: float
    error: float
    converged: bool


def as_operator(M) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(M, (np.ndarray, spla.LinearOperator)) or sp.issparse(M):
        return lambda x: M @ x
    return M


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive."""
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    s = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    s[s == 0] = 1.0
    return vectors * s


def _ordering(theta: np.ndarray, mode: str) -> np.ndarray:
    if mode == "descending-algebraic":
        return np.lexsort((np.arange(len(theta)), -theta))
    if mode == "descending-magnitude":
        return np.lexsort((-theta, -np.abs(theta)))
    if mode == "ascending-magnitude":
        return np.lexsort((theta, np.abs(theta)))
    raise ValueError(f"unknown order mode {mode!r}; expected one of {ORDER_MODES}")


def _orthogonalize(v: np.ndarray, Q: np.ndarray) -> np.ndarray:
    # classical Gram-Schmidt, applied twice
    for _ in range(2):
        v = v - Q @ (Q.T @ v)
    return v


def lanczos_eig(apply_M, n: int, d: int, order_mode: str = "descending-algebraic",
                tol: float = 1e-8, max_iter: int | None = None, seed: int = 0,
                ncv: int | None = None) -> EigenPairs:
    """Leading ``d`` eigenpairs of a symmetric operator.

    Thick-restart Lanczos with full reorthogonalization.  A pair counts as
    converged once ``||M v - lam v|| <= tol * max(1, |lam_1|)`` where
    ``lam_1`` is the first retained value.  When the Krylov space becomes
    invariant, the iteration restarts from a fresh random direction, so
    repeated eigenvalues are found with their full multiplicity.

    Parameters
    ----------
    apply_M : operator
        Symmetric operator on R^n.
    d : int
        Number of pairs.
    order_mode : str
        One of ``ORDER_MODES``; decides which end of the spectrum is wanted
        and the order of the result.
    max_iter : int, optional
        Restart cycles; defaults to ``10 * d``.
    ncv : int, optional
        Krylov basis size, default ``min(n, max(2d + 1, d + 32))``.

    Raises
    ------
    ConvergenceError
        If the pairs have not converged after ``max_iter`` cycles.
    """
    if order_mode not in ORDER_MODES:
        raise ValueError(f"unknown order mode {order_mode!r}")
    if d > n:
        raise ValueError(f"d={d} exceeds dimension n={n}")
    if d <= 0:
        return EigenPairs(np.zeros(0), np.zeros((n, 0)), order_mode, np.zeros(0))
    op = as_operator(apply_M)
    rng = np.random.default_rng(seed)
    max_iter = max_iter if max_iter is not None else max(10 * d, 10)
    k = min(n, ncv if ncv is not None else max(2 * d + 1, d + 32))
    k = max(k, min(n, d + 1))
    keep = min(k - 1, d + max(1, (k - d) // 2))

    Q = np.empty((n, k))
    W = np.empty((n, k))
    q = rng.standard_normal(n)
    Q[:, 0] = q / np.linalg.norm(q)
    W[:, 0] = op(Q[:, 0])
    j = 1
    scale = max(1.0, float(np.linalg.norm(W[:, 0])))
    residuals = None
    for _cycle in range(max_iter):
        while j < k:
            v = _orthogonalize(W[:, j - 1], Q[:, :j])
            beta = np.linalg.norm(v)
            if beta <= 1e-12 * scale:
                # invariant subspace reached: continue from a random direction
                v = _orthogonalize(rng.standard_normal(n), Q[:, :j])
                beta = np.linalg.norm(v)
            Q[:, j] = v / beta
            W[:, j] = op(Q[:, j])
            j += 1
        H = Q[:, :j].T @ W[:, :j]
        H = 0.5 * (H + H.T)
        theta, Y = np.linalg.eigh(H)
        idx = _ordering(theta, order_mode)
        sel = idx[:d]
        X = Q[:, :j] @ Y[:, sel]
        R = W[:, :j] @ Y[:, sel] - X * theta[sel]
        residuals = np.linalg.norm(R, axis=0)
        scale = max(1.0, float(np.max(np.abs(theta))))
        lam1 = abs(theta[sel[0]])
        if np.all(residuals <= tol * max(1.0, lam1)) or j == n:
            return EigenPairs(theta[sel].copy(), fix_signs(X), order_mode, residuals)
        f = _orthogonalize(W[:, j - 1], Q[:, :j])
        fn = np.linalg.norm(f)
        if fn <= 1e-12 * scale:
            f = _orthogonalize(rng.standard_normal(n), Q[:, :j])
            fn = np.linalg.norm(f)
        kept = idx[:keep]
        Qk = Q[:, :j] @ Y[:, kept]
        Wk = W[:, :j] @ Y[:, kept]
        Q[:, :keep] = Qk
        W[:, :keep] = Wk
        f = _orthogonalize(f / fn, Q[:, :keep])
        Q[:, keep] = f / np.linalg.norm(f)
        W[:, keep] = op(Q[:, keep])
        j = keep + 1
    best = EigenPairs(theta[sel].copy(), fix_signs(X), order_mode, residuals)
    raise ConvergenceError(
        f"lanczos_eig: {np.count_nonzero(residuals > tol * max(1.0, lam1))} of {d} pairs unconverged "
        f"after {max_iter} restarts (max residual {residuals.max():.3e})",
        residuals, best)


def _gram_side(apply_M, apply_Mt, n: int, m: int):
    """Operator for the smaller Gram matrix and a flag telling which side it is."""
    op, opt = as_operator(apply_M), as_operator(apply_Mt)
    if m <= n:
        return (lambda x: opt(op(x))), m, False
    return (lambda x: op(opt(x))), n, True


def truncated_svd(apply_M, apply_Mt, n: int, m: int, d: int, tol: float = 1e-8,
                  seed: int = 0, max_iter: int | None = None) -> SVDTriplet:
    """Top ``d`` singular triplets of an ``n x m`` operator.

    Lanczos on the smaller Gram operator gives the dominant right (or left)
    subspace; a small dense SVD of the projected block then yields
    orthonormal factors and accurate singular values.
    """
    if d > min(n, m):
        raise ValueError(f"d={d} exceeds min(n, m)={min(n, m)}")
    op, opt = as_operator(apply_M), as_operator(apply_Mt)
    if d <= 0:
        return SVDTriplet(np.zeros((n, 0)), np.zeros(0), np.zeros((m, 0)))
    gram, dim, left = _gram_side(apply_M, apply_Mt, n, m)
    # the Gram spectrum is squared, so converge it one notch tighter
    eig = lanczos_eig(gram, dim, d, "descending-algebraic", tol=tol * 1e-2, seed=seed, max_iter=max_iter)
    basis = eig.vectors
    if not left:
        B = _apply_cols(op, basis)                      # n x d, = M V
        Ub, s, Wt = np.linalg.svd(B, full_matrices=False)
        U, V = Ub, basis @ Wt.T
    else:
        B = _apply_cols(opt, basis)                     # m x d, = M^T U
        Vb, s, Wt = np.linalg.svd(B, full_matrices=False)
        V, U = Vb, basis @ Wt.T
    U, V = _align_signs(U, V)
    return SVDTriplet(U, s, V)


def _apply_cols(op, X: np.ndarray) -> np.ndarray:
    try:
        out = op(X)
        if out.shape[1] == X.shape[1]:
            return np.asarray(out)
    except (ValueError, IndexError):
        pass
    return np.column_stack([op(X[:, i]) for i in range(X.shape[1])])


def _align_signs(U: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if U.size == 0:
        return U, V
    idx = np.argmax(np.abs(U), axis=0)
    s = np.sign(U[idx, np.arange(U.shape[1])])
    s[s == 0] = 1.0
    return U * s, V * s


def symmetric_svd(apply_M, n: int, d: int, tol: float = 1e-8, seed: int = 0,
                  max_iter: int | None = None) -> SVDTriplet:
    """SVD of a symmetric operator through its eigendecomposition.

    Singular values are ``|lam|`` ordered by magnitude; the sign of each
    eigenvalue is carried by the right factor.
    """
    eig = lanczos_eig(apply_M, n, d, "descending-magnitude", tol=tol, seed=seed, max_iter=max_iter)
    sign = np.where(eig.values < 0, -1.0, 1.0)
    return SVDTriplet(eig.vectors, np.abs(eig.values), eig.vectors * sign)


def estimate_norm(apply_M, apply_Mt=None, n: int | None = None, m: int | None = None,
                  tol: float = 1e-6, max_iter: int = 200, seed: int = 0) -> NormEstimate:
    """Largest singular value with an a-posteriori error bound.

    Runs Krylov-accelerated power iteration (Lanczos, one wanted pair) on
    the smaller Gram operator.  If the Gram residual is ``r`` at Ritz value
    ``theta``, the returned ``error`` is ``sqrt(theta + r) - sqrt(theta)``.
    """
    if sp.issparse(apply_M) or isinstance(apply_M, np.ndarray):
        n, m = apply_M.shape
        apply_Mt = apply_M.T if apply_Mt is None else apply_Mt
    if n == 0 or m == 0:
        return NormEstimate(0.0, 0.0, True)
    gram, dim, _ = _gram_side(apply_M, apply_Mt, n, m)
    gtol = max(tol * 1e-6, 1e-14)
    converged = True
    try:
        eig = lanczos_eig(gram, dim, 1, "descending-algebraic", tol=gtol, max_iter=max_iter, seed=seed)
    except ConvergenceError as exc:
        eig = exc.best
        converged = False
    theta = max(float(eig.values[0]), 0.0)
    r = float(eig.residuals[0]) if eig.residuals is not None else 0.0
    value = float(np.sqrt(theta))
    err = float(np.sqrt(theta + r) - value)
    if value > 0 and err > tol * value:
        converged = False
    return NormEstimate(value, err, converged)


def spectral_norm(apply_M, apply_Mt=None, n: int | None = None, m: int | None = None,
                  tol: float = 1e-6, max_iter: int = 200, seed: int = 0) -> float:
    """Largest singular value; warns (and returns the best estimate) if unconverged."""
    est = estimate_norm(apply_M, apply_Mt, n, m, tol=tol, max_iter=max_iter, seed=seed)
    if not est.converged:
        warnings.warn(f"spectral_norm did not reach tol={tol}: {est.value} +/- {est.error}",
                      RuntimeWarning, stacklevel=2)
    return est.value


def prefix_correlation(E_old: np.ndarray, E_new: np.ndarray,
                       return_flags: bool = False):
    """Per-column |Pearson r| between ``E_old`` and the first rows of ``E_new``.

    Columns that are constant on either side get correlation 0 and are
    flagged.
    """
    E_old = np.asarray(E_old, dtype=np.float64)
    E_new = np.asarray(E_new, dtype=np.float64)
    n = E_old.shape[0]
    if n < 2:
        raise ValueError("need at least two rows to correlate")
    if E_old.shape[1] != E_new.shape[1] or E_new.shape[0] < n:
        raise ValueError(f"shape mismatch: {E_old.shape} vs {E_new.shape}")
    a = E_old - E_old.mean(axis=0)
    b = E_new[:n] - E_new[:n].mean(axis=0)
    na = np.linalg.norm(a, axis=0)
    nb = np.linalg.norm(b, axis=0)
    flat = (na <= 1e-14 * (1 + np.abs(E_old).max(axis=0))) | (nb <= 1e-14 * (1 + np.abs(E_new[:n]).max(axis=0)))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.abs(np.einsum("ij,ij->j", a, b)) / (na * nb)
    r = np.where(flat, 0.0, np.minimum(r, 1.0))
    return (r, flat) if return_flags else r
