"""Fit the four factorization embeddings and project arriving nodes onto them.

A fitted method keeps right factors ``V`` and a per-column scale ``s`` such
that an existing node's embedding row is ``M[i, :] @ V * s``.  A new node's
row of the grown target, restricted to the old columns, is projected the
same way.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .drift import DriftVerdict, drift_check, drift_spectrum, split_perturbation
from .graph import Graph
from .spectral import lanczos_eig, symmetric_svd, truncated_svd
from .targets import (
    TargetSpec,
    adjacency_target,
    arope_polynomial,
    drift_target,
    grarep_plp_all,
    grarep_rows,
    netmf_log_matrix,
    netmf_projection_filter,
    normalized_laplacian,
)

__all__ = [
    "Embedding",
    "MethodBasis",
    "Fit",
    "Generated",
    "fit",
    "generate",
    "project_row",
    "target_rows",
]


@dataclass(frozen=True)
class Embedding:
    data: np.ndarray
    method: str

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


def _inv_sqrt(sigma: np.ndarray) -> np.ndarray:
    # rank-deficient directions have zero embedding columns; keep them at zero
    cut = 1e-12 * max(float(np.max(sigma, initial=0.0)), 1e-300)
    out = np.zeros_like(sigma)
    pos = sigma > cut
    out[pos] = 1.0 / np.sqrt(sigma[pos])
    return out


@dataclass(frozen=True)
class MethodBasis:
    """Immutable projection state of a fitted method.

    ``arrays`` holds the named factor matrices (see :meth:`factors`);
    ``scalars`` holds everything else the projection needs.
    """

    method: str
    n: int
    d: int
    arrays: dict = field(default_factory=dict)
    scalars: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "arrays", {k: _frozen(v) for k, v in self.arrays.items()})

    def factors(self, order: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """``(V, s)`` with embedding row = ``target_row @ V * s``."""
        a = self.arrays
        if self.method == "le":
            return a["U_d"], 1.0 / a["sigma_clamped"]
        if self.method in ("arope", "netmf"):
            return a["V_d"], _inv_sqrt(a["sigma_d"])
        if self.method == "grarep":
            if order is None:
                raise ValueError("GraRep factors are per order")
            return a[f"V_{order}"], _inv_sqrt(a[f"sigma_{order}"])
        raise ValueError(self.method)

    @property
    def orders(self) -> int:
        return int(self.scalars.get("order", 1))

    def array_order(self) -> list[str]:
        """Stable array order used by the state file."""
        return list(self.arrays)


class Fit(NamedTuple):
    embedding: Embedding
    basis: MethodBasis
    sigma: tuple[float, float]


class Generated(NamedTuple):
    embedding: Embedding
    verdict: DriftVerdict | None
    retrained: bool
    basis: MethodBasis
    sigma: tuple[float, float]


def project_row(m_row: np.ndarray, factors: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    """``m_row @ V * s`` for one row (1-D) or a block of rows (2-D)."""
    m_row = np.asarray(m_row, dtype=np.float64)
    if not np.all(np.isfinite(m_row)):
        raise ValueError("target row has non-finite entries")
    V, s = factors
    return (m_row @ V) * s


def _resolved(spec: TargetSpec, g: Graph) -> TargetSpec:
    if spec.method == "grarep" and spec.beta is None:
        return replace(spec, beta=1.0 / g.n)
    if spec.method == "netmf" and spec.rank > g.n:
        raise ValueError(f"NetMF rank h={spec.rank} exceeds n={g.n}")
    return spec


def fit(g: Graph, spec: TargetSpec) -> Fit:
    """Static embedding of ``g`` plus the basis for later projection.

    Also returns the two leading eigenvalues (singular values for GraRep)
    of the drift matrix.
    """
    spec = _resolved(spec, g)
    n, d, tol, seed = g.n, spec.d, spec.tol, spec.seed
    if d > n:
        raise ValueError(f"d={d} exceeds n={n}")
    if spec.method == "le":
        L = normalized_laplacian(g)
        eig = lanczos_eig(L.matvec, n, d, "ascending-magnitude", tol=tol, seed=seed)
        clamped = np.where(eig.values < spec.le_clamp, 1.0, eig.values)
        emb = eig.vectors
        basis = MethodBasis("le", n, d, {"U_d": eig.vectors, "sigma": eig.values, "sigma_clamped": clamped},
                            {"le_clamp": spec.le_clamp})
        drift = adjacency_target(g)
    elif spec.method == "arope":
        S = arope_polynomial(g, spec.weights)
        svd = symmetric_svd(S.matvec, n, d, tol=tol, seed=seed)
        emb = svd.U * np.sqrt(svd.sigma)
        basis = MethodBasis("arope", n, d, {"V_d": svd.V, "sigma_d": svd.sigma},
                            {"weights": list(spec.weights)})
        drift = S
    elif spec.method == "grarep":
        k = spec.order
        dk = d // k
        blocks, arrays = [], {}
        Xs = grarep_plp_all(g, k, spec.beta)
        for i, X in enumerate(Xs, start=1):
            svd = truncated_svd(X.matvec, X.rmatvec, n, n, dk, tol=tol, seed=seed)
            blocks.append(svd.U * np.sqrt(svd.sigma))
            arrays[f"V_{i}"] = svd.V
            arrays[f"sigma_{i}"] = svd.sigma
        emb = np.hstack(blocks)
        basis = MethodBasis("grarep", n, d, arrays, {"order": k, "beta": spec.beta})
        drift = Xs[-1]
    else:
        nt = netmf_log_matrix(g, spec.rank, spec.window, spec.negative, tol=tol, seed=seed)
        svd = symmetric_svd(nt.matrix, n, d, tol=tol, seed=seed)
        emb = svd.U * np.sqrt(svd.sigma)
        basis = MethodBasis(
            "netmf", n, d,
            {"U_h": nt.U_h, "lam_h": nt.lam_h, "V_d": svd.V, "sigma_d": svd.sigma, "degrees_0": nt.degrees},
            {"vol": nt.vol, "window": spec.window, "negative": spec.negative})
        drift = nt.target()
    sigma = drift_spectrum(drift, tol=tol, seed=seed)
    basis = replace(basis, scalars={**basis.scalars, "drift_sigma": [sigma[0], sigma[1]]})
    if not np.all(np.isfinite(emb)):
        raise FloatingPointError("non-finite embedding")
    return Fit(Embedding(np.ascontiguousarray(emb), spec.method), basis, sigma)


def target_rows(basis: MethodBasis, g1: Graph, rows, n: int | None = None) -> list[np.ndarray]:
    """Rows of the grown target for nodes ``rows``, restricted to the first ``n`` columns.

    Returns one block per projection basis (``order`` blocks for GraRep).
    """
    n = basis.n if n is None else n
    rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
    if basis.method == "le":
        return [normalized_laplacian(g1).rows(rows, slice(0, n))]
    if basis.method == "arope":
        return [arope_polynomial(g1, basis.scalars["weights"]).rows(rows, slice(0, n))]
    if basis.method == "grarep":
        return grarep_rows(g1, rows, basis.orders, basis.scalars["beta"], ncols=n)
    return [_netmf_rows(basis, g1.adjacency[rows][:, :n].toarray())]


def _netmf_rows(basis: MethodBasis, a_new: np.ndarray) -> np.ndarray:
    """NetMF target rows of new nodes from their edges into the old nodes.

    The new node's spectral coordinates are ``beta U_h / lam_h`` with
    ``beta = d^-1/2 a D0^-1/2``; nodes without old neighbours get a zero row.
    """
    a = basis.arrays
    sc = basis.scalars
    s0 = 1.0 / np.sqrt(a["degrees_0"])
    deg = a_new.sum(axis=1)
    inv = np.zeros_like(deg)
    inv[deg > 0] = 1.0 / deg[deg > 0]
    F = s0[:, None] * a["U_h"]                                   # D0^-1/2 U_h
    G = netmf_projection_filter(a["lam_h"], int(sc["window"]))   # lam^-1 * filter
    M = (sc["vol"] / sc["negative"]) * (inv[:, None] * ((a_new @ F) * G)) @ F.T
    return np.log(np.maximum(M, 1.0))


def generate(basis: MethodBasis, spec: TargetSpec, g1: Graph, n: int, m: int,
             check: bool = False, sigma: tuple[float, float] | None = None,
             g0: Graph | None = None) -> Generated:
    """Embeddings for nodes ``n .. n+m-1`` of ``g1``.

    With ``check`` on, the restart inequality is evaluated first against the
    initial graph ``g0`` (default: the first ``n`` nodes of ``g1``); if it
    fails, the method is refitted on ``g1`` and the new basis returned.
    """
    if basis.n != n:
        raise ValueError(f"basis was fitted on {basis.n} nodes, not {n}")
    if g1.n != n + m:
        raise ValueError(f"g1 has {g1.n} nodes, expected {n + m}")
    if basis.method != spec.method:
        raise ValueError(f"basis is {basis.method}, spec is {spec.method}")
    sigma = sigma if sigma is not None else tuple(basis.scalars.get("drift_sigma", (0.0, 0.0)))
    verdict = None
    if check:
        g0 = g1.prefix(n) if g0 is None else g0
        dspec = spec if spec.method != "grarep" else replace(spec, beta=basis.scalars["beta"])
        M0 = drift_target(g0, dspec)
        M1 = drift_target(g1, dspec)
        verdict = drift_check(split_perturbation(M0, M1, n, m), *sigma, seed=spec.seed)
        if not verdict.ok and m > 0:
            refit = fit(g1, spec)
            tail = refit.embedding.data[n:]
            return Generated(Embedding(tail, spec.method), verdict, True, refit.basis, refit.sigma)
    if m == 0:
        return Generated(Embedding(np.zeros((0, basis.d)), spec.method), verdict, False, basis, sigma)
    new = np.arange(n, n + m)
    blocks = target_rows(basis, g1, new, n)
    if basis.method == "grarep":
        out = np.hstack([project_row(X, basis.factors(i)) for i, X in enumerate(blocks, start=1)])
    else:
        out = project_row(blocks[0], basis.factors())
    return Generated(Embedding(out, spec.method), verdict, False, basis, sigma)


def timed_generate(*args, **kwargs) -> tuple[Generated, float]:
    t = time.perf_counter()
    res = generate(*args, **kwargs)
    return res, time.perf_counter() - t
