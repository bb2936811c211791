"""Benchmark graphs: a local copy of the PPI network and synthetic stand-ins.

The PPI network (Homo sapiens protein interactions with biological-state
labels) is not shipped.  Point ``SIP_PPI_DIR`` at a directory holding either
``Homo_sapiens.mat`` (``network``/``group`` sparse matrices) or a pair of
text files ``ppi.edgelist`` / ``ppi.labels``.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import Graph, LabelTable, giant_component, load_edge_list, load_labels

__all__ = ["PPI_ENV", "DatasetUnavailable", "ppi_path", "load_ppi", "planted_partition", "sparse_random_graph"]

PPI_ENV = "SIP_PPI_DIR"


class DatasetUnavailable(FileNotFoundError):
    pass


def ppi_path() -> Path | None:
    root = os.environ.get(PPI_ENV)
    if not root:
        return None
    p = Path(root)
    if (p / "Homo_sapiens.mat").is_file() or (p / "ppi.edgelist").is_file():
        return p
    return None


def load_ppi(giant: bool = True) -> tuple[Graph, LabelTable]:
    """PPI graph (giant component by default) and its multi-label table."""
    p = ppi_path()
    if p is None:
        raise DatasetUnavailable(f"PPI data not found; set {PPI_ENV} to a directory with "
                                 "Homo_sapiens.mat or ppi.edgelist + ppi.labels")
    if (p / "Homo_sapiens.mat").is_file():
        from scipy.io import loadmat

        mat = loadmat(p / "Homo_sapiens.mat")
        A = sp.csr_matrix(mat["network"], dtype=np.float64)
        A = ((A + A.T) > 0).astype(np.float64)
        A.setdiag(0)
        A.eliminate_zeros()
        g = Graph.from_scipy(A)
        Gm = sp.csr_matrix(mat["group"])
        assign = {i: frozenset(int(c) for c in Gm[i].indices) for i in range(Gm.shape[0])}
        labels = LabelTable({k: v for k, v in assign.items() if v}, Gm.shape[1])
    else:
        g, tokens = load_edge_list(p / "ppi.edgelist")
        labels, _ = load_labels(p / "ppi.labels", tokens)
    if giant:
        g, keep = giant_component(g)
        labels = labels.relabel({int(old): new for new, old in enumerate(keep)})
    return g, labels


def planted_partition(n: int, blocks: int = 8, p_in: float = 0.05, p_out: float = 0.005,
                      multi: float = 0.1, hub_exponent: float | None = None,
                      seed: int = 0) -> tuple[Graph, LabelTable]:
    """Stochastic block model with community labels (plus a few secondary labels).

    A fraction ``multi`` of nodes also carries the label of a random other
    block.  With ``hub_exponent`` set, edge probabilities are scaled by
    Pareto node weights (degree-corrected model), which gives a few hubs and
    a dominant leading eigenvalue, closer to real interaction networks.
    """
    rng = np.random.default_rng(seed)
    z = rng.integers(0, blocks, size=n)
    iu, ju = np.triu_indices(n, k=1)
    p = np.where(z[iu] == z[ju], p_in, p_out)
    if hub_exponent is not None:
        theta = rng.pareto(hub_exponent, size=n) + 1.0
        theta /= theta.mean()
        p = np.minimum(p * theta[iu] * theta[ju], 1.0)
    keep = rng.random(len(p)) < p
    edges = [(int(i), int(j), 1.0) for i, j in zip(iu[keep], ju[keep])]
    g = Graph.from_edges(n, edges)
    assign = {}
    extra = rng.random(n) < multi
    other = rng.integers(0, blocks, size=n)
    for v in range(n):
        labs = {int(z[v])}
        if extra[v]:
            labs.add(int(other[v]))
        assign[v] = frozenset(labs)
    g, keepers = giant_component(g)
    labels = LabelTable(assign, blocks).relabel({int(old): new for new, old in enumerate(keepers)})
    return g, labels


def sparse_random_graph(n: int, mean_degree: float = 10.0, seed: int = 0) -> Graph:
    """Connected sparse graph: a random spanning path plus uniform random edges."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    src = [perm[:-1]]
    dst = [perm[1:]]
    extra = max(int(round(n * mean_degree / 2)) - (n - 1), 0)
    src.append(rng.integers(0, n, size=extra))
    dst.append(rng.integers(0, n, size=extra))
    r = np.concatenate(src)
    c = np.concatenate(dst)
    ok = r != c
    A = sp.coo_matrix((np.ones(ok.sum()), (r[ok], c[ok])), shape=(n, n)).tocsr()
    A = ((A + A.T) > 0).astype(np.float64)
    return Graph.from_scipy(A)
