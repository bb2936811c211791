"""Target matrices factorized by the four embedding methods.

Each builder returns a :class:`TargetMatrix`: a matvec for the eigensolvers,
a row extractor for projecting new nodes, and a way to materialize the
whole matrix for perturbation analysis and tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .graph import Graph
from .spectral import lanczos_eig

__all__ = [
    "METHODS",
    "TargetSpec",
    "TargetMatrix",
    "NetMFTarget",
    "adjacency_target",
    "normalized_laplacian",
    "arope_polynomial",
    "transition_matrix",
    "grarep_plp",
    "grarep_plp_all",
    "grarep_rows",
    "netmf_log_matrix",
    "netmf_filter",
    "method_target",
    "drift_target",
]

METHODS = ("le", "arope", "grarep", "netmf")


@dataclass(frozen=True)
class TargetSpec:
    """Method and hyper-parameters.

    ``weights`` are the AROPE polynomial coefficients, ``order``/``beta``
    the GraRep maximum step and log shift (``None`` means ``1/n``), and
    ``rank``/``window``/``negative`` the NetMF eigen-rank ``h``, window
    ``T`` and negative-sample count ``b``.
    """

    method: str
    d: int = 128
    weights: tuple[float, ...] = (1.0, 0.01, 0.0001)
    order: int = 4
    beta: float | None = None
    rank: int = 256
    window: int = 10
    negative: float = 1.0
    le_clamp: float = 0.1
    tol: float = 1e-8
    seed: int = 42

    def __post_init__(self):
        object.__setattr__(self, "method", self.method.lower())
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if len(self.weights) < 1 or not all(np.isfinite(self.weights)):
            raise ValueError("AROPE needs at least one finite weight")
        if self.order < 1:
            raise ValueError("GraRep order must be >= 1")
        if self.beta is not None and not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.window < 1 or self.negative < 1:
            raise ValueError("window and negative must be >= 1")
        if self.method == "netmf" and self.rank < self.d:
            raise ValueError(f"NetMF rank h={self.rank} must be >= d={self.d}")
        if self.method == "grarep" and self.d % self.order:
            raise ValueError(f"GraRep needs d divisible by order (d={self.d}, k={self.order})")

    @property
    def drift_matrix(self) -> str:
        """Which matrix the drift judge watches."""
        return "adjacency" if self.method == "le" else "target"

    def params(self) -> dict:
        return {
            "method": self.method, "d": self.d, "weights": list(self.weights), "order": self.order,
            "beta": self.beta, "rank": self.rank, "window": self.window, "negative": self.negative,
            "le_clamp": self.le_clamp, "tol": self.tol, "seed": self.seed,
        }

    @classmethod
    def from_params(cls, p: dict) -> "TargetSpec":
        p = dict(p)
        p["weights"] = tuple(p.get("weights", (1.0, 0.01, 0.0001)))
        return cls(**p)


@dataclass
class TargetMatrix:
    """A square target matrix in whatever form is cheapest to keep."""

    n: int
    matvec: Callable[[np.ndarray], np.ndarray]
    rmatvec: Callable[[np.ndarray], np.ndarray]
    row_fn: Callable[[np.ndarray], np.ndarray]
    materialize_fn: Callable[[], object]
    symmetric: bool = True
    _explicit: object = field(default=None, repr=False)

    @classmethod
    def explicit(cls, M, symmetric: bool = True) -> "TargetMatrix":
        if sp.issparse(M):
            M = sp.csr_matrix(M)
            rows = lambda idx: M[np.asarray(idx)].toarray()
        else:
            M = np.asarray(M, dtype=np.float64)
            rows = lambda idx: M[np.asarray(idx)]
        t = cls(M.shape[0], lambda x: M @ x, lambda x: M.T @ x, rows, lambda: M, symmetric)
        t._explicit = M
        return t

    def rows(self, idx, cols: slice | None = None) -> np.ndarray:
        """Dense rows ``idx`` (optionally restricted to ``cols``)."""
        out = self.row_fn(np.atleast_1d(np.asarray(idx, dtype=np.int64)))
        return out if cols is None else out[:, cols]

    def materialize(self):
        """Explicit matrix (scipy sparse or ndarray); cached."""
        if self._explicit is None:
            self._explicit = self.materialize_fn()
        return self._explicit

    def to_dense(self) -> np.ndarray:
        M = self.materialize()
        return M.toarray() if sp.issparse(M) else np.array(M)


def _require_degrees(g: Graph) -> np.ndarray:
    deg = g.degrees()
    if g.n and np.any(deg <= 0):
        raise ValueError(f"zero-degree node(s): {np.flatnonzero(deg <= 0)[:10].tolist()}")
    return deg


def adjacency_target(g: Graph) -> TargetMatrix:
    return TargetMatrix.explicit(g.adjacency)


def normalized_laplacian(g: Graph) -> TargetMatrix:
    """``I - D^-1/2 A D^-1/2`` as a sparse explicit target."""
    deg = _require_degrees(g)
    s = sp.diags(1.0 / np.sqrt(deg))
    L = sp.identity(g.n, format="csr") - s @ g.adjacency @ s
    return TargetMatrix.explicit(sp.csr_matrix(L))


def arope_polynomial(g: Graph, weights) -> TargetMatrix:
    """``S = sum_i w_i A^i`` applied by chained sparse products, never formed."""
    A = g.adjacency
    w = [float(x) for x in weights]

    def apply(x):
        out = np.zeros_like(x, dtype=np.float64)
        y = x
        for wi in w:
            y = A @ y
            out += wi * y
        return out

    def rows(idx):
        # rows of S are columns of S (symmetric): S e_r
        E = np.zeros((g.n, len(idx)))
        E[idx, np.arange(len(idx))] = 1.0
        return apply(E).T

    def materialize():
        out = sp.csr_matrix((g.n, g.n))
        P = sp.identity(g.n, format="csr")
        for wi in w:
            P = P @ A
            out = out + wi * P
        return sp.csr_matrix(out)

    return TargetMatrix(g.n, apply, apply, rows, materialize, True)


def transition_matrix(g: Graph) -> sp.csr_matrix:
    deg = _require_degrees(g)
    return sp.csr_matrix(sp.diags(1.0 / deg) @ g.adjacency)


def _plp(S: np.ndarray, tau: np.ndarray, beta: float) -> np.ndarray:
    """Positive log probabilities; zero transition entries skip the log."""
    X = np.zeros_like(S)
    pos = S > 0
    ratio = S / tau
    X[pos] = np.log(ratio[pos]) - np.log(beta)
    np.maximum(X, 0.0, out=X)
    return X


def _compact(X: np.ndarray):
    return sp.csr_matrix(X) if np.count_nonzero(X) < 0.25 * X.size else X


def grarep_plp_all(g: Graph, order: int, beta: float | None = None) -> list[TargetMatrix]:
    """``X^1 .. X^order``, sharing the transition powers."""
    if order < 1:
        raise ValueError("order must be >= 1")
    beta = 1.0 / g.n if beta is None else beta
    P = transition_matrix(g)
    S = P.toarray()
    out = []
    for i in range(order):
        if i:
            S = np.asarray(P @ S)
        tau = S.sum(axis=0)
        if np.any(tau <= 0):
            raise ValueError("zero column sum in transition power")
        out.append(TargetMatrix.explicit(_compact(_plp(S, tau, beta)), symmetric=False))
    return out


def grarep_plp(g: Graph, order: int, beta: float | None = None) -> TargetMatrix:
    """``X^i`` from ``S^i = (D^-1 A)^i`` with ``tau_j`` the column sums of ``S^i``.

    Entries with ``log(S_pj / tau_j) - log(beta) < 0`` are set to zero.
    """
    return grarep_plp_all(g, order, beta)[-1]


def grarep_rows(g: Graph, rows, order: int, beta: float, ncols: int | None = None) -> list[np.ndarray]:
    """Rows ``rows`` of ``X^1 .. X^order`` without forming any transition power.

    Cost is ``O(order * (nnz + n) * len(rows))``.
    """
    rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
    P = transition_matrix(g)
    PT = sp.csr_matrix(P.T)
    ncols = g.n if ncols is None else ncols
    R = np.zeros((len(rows), g.n))
    R[np.arange(len(rows)), rows] = 1.0
    tau = np.ones(g.n)
    out = []
    for _ in range(order):
        R = np.asarray(PT @ R.T).T          # rows of S^i
        tau = PT @ tau                      # 1^T S^i
        if np.any(tau[:ncols] <= 0):
            raise ValueError("zero column sum in transition power")
        out.append(_plp(R[:, :ncols], tau[:ncols], beta))
    return out


def netmf_filter(lam: np.ndarray, window: int) -> np.ndarray:
    """``(1/T) sum_{r=1..T} lam^r``."""
    acc = np.zeros_like(lam)
    p = np.ones_like(lam)
    for _ in range(window):
        p = p * lam
        acc += p
    return acc / window


def netmf_projection_filter(lam: np.ndarray, window: int) -> np.ndarray:
    """``(1/T) sum_{r=1..T} lam^(r-1)``, i.e. ``lam^-1`` times the NetMF filter."""
    acc = np.zeros_like(lam)
    p = np.ones_like(lam)
    for _ in range(window):
        acc += p
        p = p * lam
    return acc / window


@dataclass
class NetMFTarget:
    """``log max(M_hat, 1)`` plus the pieces needed to project new nodes."""

    matrix: np.ndarray
    U_h: np.ndarray
    lam_h: np.ndarray
    vol: float
    degrees: np.ndarray
    window: int
    negative: float

    def target(self) -> TargetMatrix:
        return TargetMatrix.explicit(self.matrix)


def netmf_log_matrix(g: Graph, h: int, T: int = 10, b: float = 1.0, tol: float = 1e-8,
                     seed: int = 0) -> NetMFTarget:
    if h > g.n:
        raise ValueError(f"rank h={h} exceeds n={g.n}")
    deg = _require_degrees(g)
    s = 1.0 / np.sqrt(deg)
    H = sp.csr_matrix(sp.diags(s) @ g.adjacency @ sp.diags(s))
    eig = lanczos_eig(H, g.n, h, "descending-algebraic", tol=tol, seed=seed)
    vol = float(deg.sum())
    F = s[:, None] * eig.vectors
    M = (vol / b) * (F * netmf_filter(eig.values, T)) @ F.T
    M = 0.5 * (M + M.T)
    logM = np.log(np.maximum(M, 1.0))
    return NetMFTarget(logM, eig.vectors, eig.values, vol, deg, T, b)


def method_target(g: Graph, spec: TargetSpec, order: int | None = None) -> TargetMatrix:
    """The matrix a method factorizes (GraRep: the ``order``-th, default k-th)."""
    if spec.method == "le":
        return normalized_laplacian(g)
    if spec.method == "arope":
        return arope_polynomial(g, spec.weights)
    if spec.method == "grarep":
        return grarep_plp(g, order or spec.order, spec.beta)
    return netmf_log_matrix(g, min(spec.rank, g.n), spec.window, spec.negative,
                            tol=spec.tol, seed=spec.seed).target()


def drift_target(g: Graph, spec: TargetSpec) -> TargetMatrix:
    """Matrix fed to the drift judge: adjacency for LE, the method's target otherwise."""
    if spec.drift_matrix == "adjacency":
        return adjacency_target(g)
    return method_target(g, spec)
