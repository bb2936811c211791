"""Perturbation split of a grown target matrix and the restart judgement.

After ``m`` arrivals the grown target ``M1`` is compared with the
zero-padded ``M0``: the change on old nodes ``dM``, the new-old block
``E1`` and the new-new block ``E2``.  The embedding subspace is taken as
stable while ``rho(dM) + 2 rho(E1) + rho(E2) < sigma_1 - sigma_2``, with
``sigma_1 >= sigma_2`` the two largest eigenvalues of ``M0``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .graph import StreamScenario
from .spectral import estimate_norm, lanczos_eig, truncated_svd
from .targets import TargetMatrix, TargetSpec, drift_target

__all__ = [
    "PerturbationSplit",
    "DriftVerdict",
    "ThresholdScan",
    "split_perturbation",
    "drift_check",
    "drift_spectrum",
    "p_bound",
    "scan_threshold",
    "restart_threshold",
]


def _as_sparse(M) -> sp.csr_matrix:
    return sp.csr_matrix(M)


@dataclass
class PerturbationSplit:
    """``dM`` (n x n), ``E1`` (n x m) and ``E2`` (m x m).

    ``E1_lower`` is the (m x n) new-old block; it is ``None`` when the
    target is symmetric and the block is simply ``E1.T``.
    """

    delta_M: sp.csr_matrix
    E1: sp.csr_matrix
    E2: sp.csr_matrix
    E1_lower: sp.csr_matrix | None = None

    @property
    def n(self) -> int:
        return self.delta_M.shape[0]

    @property
    def m(self) -> int:
        return self.E2.shape[0]

    def assemble(self, M0) -> np.ndarray:
        """Dense ``pad(M0) + E``; equals the grown matrix by construction."""
        n, m = self.n, self.m
        out = np.zeros((n + m, n + m))
        out[:n, :n] = (M0.toarray() if sp.issparse(M0) else M0) + self.delta_M.toarray()
        out[:n, n:] = self.E1.toarray()
        lower = self.E1.T if self.E1_lower is None else self.E1_lower
        out[n:, :n] = lower.toarray()
        out[n:, n:] = self.E2.toarray()
        return out


def split_perturbation(M0, M1, n: int, m: int) -> PerturbationSplit:
    """Split grown target ``M1`` against ``M0``.

    ``M0``/``M1`` may be :class:`TargetMatrix` objects, dense arrays or
    sparse matrices.
    """
    A0 = M0.materialize() if isinstance(M0, TargetMatrix) else M0
    A1 = M1.materialize() if isinstance(M1, TargetMatrix) else M1
    if A0.shape != (n, n) or A1.shape != (n + m, n + m):
        raise ValueError(f"dimension mismatch: M0 {A0.shape}, M1 {A1.shape}, n={n}, m={m}")
    A1 = _as_sparse(A1)
    dM = _as_sparse(A1[:n, :n] - _as_sparse(A0))
    dM.eliminate_zeros()
    E1 = _as_sparse(A1[:n, n:])
    E2 = _as_sparse(A1[n:, n:])
    lower = _as_sparse(A1[n:, :n])
    symmetric = (lower != E1.T).nnz == 0
    return PerturbationSplit(dM, E1, E2, None if symmetric else lower)


@dataclass
class DriftVerdict:
    rho_dm: float
    rho_e1: float
    rho_e2: float
    lhs: float
    sigma1: float
    sigma2: float
    gap: float
    ok: bool
    gamma: float
    delta: float
    p_bound: float | None
    ok_conservative: bool
    error_bound: float = 0.0
    rho_e1_lower: float | None = None

    def to_json_dict(self) -> dict:
        """Finite reals as decimal strings, undefined values as ``null``."""
        out = {}
        for k, v in self.__dict__.items():
            if isinstance(v, bool) or v is None:
                out[k] = v
            elif isinstance(v, float) and math.isfinite(v):
                out[k] = repr(v)
            else:
                out[k] = str(v)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


def _norm(M, seed: int, tol: float):
    if M.shape[0] == 0 or M.shape[1] == 0 or M.nnz == 0:
        return 0.0, 0.0
    est = estimate_norm(M, M.T, M.shape[0], M.shape[1], tol=tol, seed=seed)
    return est.value, est.error


def drift_check(split: PerturbationSplit, sigma1: float, sigma2: float,
                tol: float = 1e-6, seed: int = 0) -> DriftVerdict:
    """Evaluate the restart inequality for one split.

    For a non-symmetric target the two off-diagonal norms enter as
    ``2 sqrt(rho(E1) rho(E1_lower))``, which reduces to ``2 rho(E1)`` in the
    symmetric case.
    """
    if sigma1 < sigma2:
        raise ValueError("sigma1 must be >= sigma2")
    rho_dm, e_dm = _norm(split.delta_M, seed, tol)
    rho_e1, e_e1 = _norm(split.E1, seed, tol)
    rho_e2, e_e2 = _norm(split.E2, seed, tol)
    rho_low = None
    if split.E1_lower is not None:
        rho_low, e_low = _norm(split.E1_lower, seed, tol)
        cross = 2.0 * math.sqrt(rho_e1 * rho_low)
        e_cross = 2.0 * math.sqrt((rho_e1 + e_e1) * (rho_low + e_low)) - cross
        gamma = rho_low
    else:
        cross = 2.0 * rho_e1
        e_cross = 2.0 * e_e1
        gamma = rho_e1
    lhs = rho_dm + cross + rho_e2
    err = e_dm + e_cross + e_e2
    gap = float(sigma1 - sigma2)
    delta = gap - rho_dm - rho_e2
    ok = lhs < gap
    verdict = DriftVerdict(
        rho_dm=rho_dm, rho_e1=rho_e1, rho_e2=rho_e2, lhs=lhs,
        sigma1=float(sigma1), sigma2=float(sigma2), gap=gap, ok=ok,
        gamma=gamma, delta=delta, p_bound=None,
        ok_conservative=(lhs + err) < gap, error_bound=err, rho_e1_lower=rho_low,
    )
    verdict.p_bound = p_bound(verdict)
    return verdict


def p_bound(verdict: DriftVerdict) -> float | None:
    """Upper bound ``2 gamma / delta`` on the tangent of the largest canonical angle.

    Only defined when ``delta > 2 gamma`` (which also forces ``delta > 0``).
    """
    if verdict.delta > 0 and verdict.delta > 2.0 * verdict.gamma:
        return 2.0 * verdict.gamma / verdict.delta
    return None


def drift_spectrum(M0: TargetMatrix, tol: float = 1e-8, seed: int = 0) -> tuple[float, float]:
    """Two largest eigenvalues of a symmetric ``M0``; singular values otherwise."""
    n = M0.n
    if n == 0:
        return 0.0, 0.0
    if n == 1:
        v = float(M0.rows([0])[0, 0])
        return (v, v) if M0.symmetric else (abs(v), abs(v))
    if M0.symmetric:
        eig = lanczos_eig(M0.matvec, n, 2, "descending-algebraic", tol=tol, seed=seed)
        return float(eig.values[0]), float(eig.values[1])
    svd = truncated_svd(M0.matvec, M0.rmatvec, n, n, 2, tol=tol, seed=seed)
    return float(svd.sigma[0]), float(svd.sigma[1])


@dataclass
class ThresholdScan:
    m0: int
    sigma: tuple[float, float]
    trace: list[DriftVerdict] = field(default_factory=list)
    capped: bool = False

    def to_json_dict(self) -> dict:
        return {
            "m0": self.m0,
            "capped": self.capped,
            "sigma1": repr(self.sigma[0]),
            "sigma2": repr(self.sigma[1]),
            "trace": [dict(m=i + 1, **v.to_json_dict()) for i, v in enumerate(self.trace)],
        }


def _fixed_spec(spec: TargetSpec, n: int) -> TargetSpec:
    # a size-dependent GraRep shift would register as drift on every entry
    if spec.method == "grarep" and spec.beta is None:
        return replace(spec, beta=1.0 / n)
    return spec


def scan_threshold(scenario: StreamScenario, spec: TargetSpec, n: int | None = None,
                   m_max: int | None = None, tol: float = 1e-6, seed: int = 0) -> ThresholdScan:
    """Walk arrivals one node at a time until the restart inequality first fails.

    ``m0`` is the last ``m`` before the first failure (first-failure
    semantics), capped at ``m_max`` and at the stream length.
    """
    n = scenario.n if n is None else n
    if n != scenario.n:
        raise ValueError(f"scenario starts with {scenario.n} nodes, not {n}")
    total = scenario.total_arrivals
    if total == 0:
        raise ValueError("empty stream")
    limit = total if m_max is None else min(m_max, total)
    spec = _fixed_spec(spec, n)
    M0 = drift_target(scenario.initial, spec)
    s1, s2 = drift_spectrum(M0, tol=min(spec.tol, 1e-8), seed=seed)
    scan = ThresholdScan(0, (s1, s2))
    for m in range(1, limit + 1):
        M1 = drift_target(scenario.graph_after(m), spec)
        v = drift_check(split_perturbation(M0, M1, n, m), s1, s2, tol=tol, seed=seed)
        scan.trace.append(v)
        if not v.ok:
            return scan
        scan.m0 = m
    scan.capped = True
    return scan


def restart_threshold(scenario: StreamScenario, spec: TargetSpec, n: int | None = None,
                      m_max: int | None = None, tol: float = 1e-6, seed: int = 0) -> int:
    return scan_threshold(scenario, spec, n, m_max, tol, seed).m0
