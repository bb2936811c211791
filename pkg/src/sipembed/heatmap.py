"""Eigenvector drift of the target matrix as nodes arrive.

For each ``m`` in a grid the drift matrix of the first ``n + m`` nodes is
decomposed again and its leading vectors, restricted to the first ``n``
entries, are correlated with those of the initial matrix.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .drift import _fixed_spec, scan_threshold
from .graph import StreamScenario
from .spectral import ConvergenceError, lanczos_eig, prefix_correlation, truncated_svd
from .targets import TargetMatrix, TargetSpec, drift_target

__all__ = ["HeatmapResult", "leading_vectors", "drift_heatmap", "heatmap_to_csv", "parse_heatmap_csv"]

log = logging.getLogger(__name__)


def leading_vectors(M: TargetMatrix, d: int, tol: float = 1e-8, seed: int = 0) -> np.ndarray:
    """Top-``d`` eigenvectors (descending algebraic) or left singular vectors if non-symmetric."""
    d = min(d, M.n)
    if M.symmetric:
        return lanczos_eig(M.matvec, M.n, d, "descending-algebraic", tol=tol, seed=seed).vectors
    return truncated_svd(M.matvec, M.rmatvec, M.n, M.n, d, tol=tol, seed=seed).U


@dataclass
class HeatmapResult:
    grid: list[int]
    d: int
    m0: int
    corr: dict[int, np.ndarray] = field(default_factory=dict)
    failed: dict[int, str] = field(default_factory=dict)

    def mean(self, m: int) -> float:
        return float(np.mean(self.corr[m])) if m in self.corr else math.nan


def drift_heatmap(scenario: StreamScenario, spec: TargetSpec, grid=None, d: int = 128,
                  m_max: int | None = None, tol: float = 1e-8, seed: int = 0) -> HeatmapResult:
    """Correlations for each ``m`` in ``grid``; default grid is ``{0, m0, 5 m0}``.

    A refit that fails to converge is recorded in ``failed`` and skipped.
    """
    n = scenario.n
    spec = _fixed_spec(spec, n)
    m0 = scan_threshold(scenario, spec, n, m_max=m_max, seed=seed).m0
    total = scenario.total_arrivals
    if grid is None:
        grid = sorted({0, m0, 5 * m0})
    grid = [int(m) for m in grid]
    bad = [m for m in grid if not 0 <= m <= total]
    if bad:
        raise ValueError(f"grid values outside 0..{total}: {bad}")
    d = min(d, n)
    out = HeatmapResult(grid, d, m0)
    base = leading_vectors(drift_target(scenario.initial, spec), d, tol, seed)
    for m in grid:
        if m == 0:
            out.corr[m] = prefix_correlation(base, base)
            continue
        try:
            V = leading_vectors(drift_target(scenario.graph_after(m), spec), d, tol, seed)
        except (ConvergenceError, ValueError, FloatingPointError) as exc:
            log.warning("refit failed at m=%d: %s", m, exc)
            out.failed[m] = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
            continue
        out.corr[m] = prefix_correlation(base, V)
    return out


def heatmap_to_csv(res: HeatmapResult) -> str:
    """Columns ``m, eig_index, abs_correlation, flag``; the last row marks ``m0``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["m", "eig_index", "abs_correlation", "flag"])
    for m in res.grid:
        if m in res.failed:
            w.writerow([m, "", "", "failed"])
            continue
        for i, r in enumerate(res.corr[m]):
            w.writerow([m, i, repr(float(r)), ""])
    w.writerow([res.m0, "", "", "m0"])
    return buf.getvalue()


def parse_heatmap_csv(text: str) -> tuple[dict[int, np.ndarray], int | None]:
    rows = list(csv.DictReader(io.StringIO(text)))
    corr: dict[int, list[float]] = {}
    m0 = None
    for r in rows:
        if r["flag"] == "m0":
            m0 = int(r["m"])
        elif r["flag"] == "":
            corr.setdefault(int(r["m"]), []).append(float(r["abs_correlation"]))
    return {m: np.array(v) for m, v in corr.items()}, m0
