"""Undirected weighted graphs in CSR layout, labels, and node-arrival streams."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

__all__ = [
    "Graph",
    "GraphFormatError",
    "LabelTable",
    "StreamBatch",
    "StreamScenario",
    "load_edge_list",
    "parse_edge_list",
    "parse_labels",
    "dump_edge_list",
    "load_labels",
    "giant_component",
    "make_scenario",
    "apply_batch",
]


class GraphFormatError(ValueError):
    """Malformed edge-list or label input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class Graph:
    """Symmetric adjacency stored as CSR arrays.

    Every undirected edge ``{i, j}`` is stored twice, as ``(i, j, w)`` and
    ``(j, i, w)``.  Column indices are sorted within each row.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    weights: np.ndarray
    allow_self_loops: bool = False

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", np.ascontiguousarray(self.row_offsets, dtype=np.int64))
        object.__setattr__(self, "col_indices", np.ascontiguousarray(self.col_indices, dtype=np.int64))
        object.__setattr__(self, "weights", np.ascontiguousarray(self.weights, dtype=np.float64))
        for arr in (self.row_offsets, self.col_indices, self.weights):
            arr.flags.writeable = False

    @classmethod
    def from_scipy(cls, matrix, allow_self_loops: bool = False) -> "Graph":
        a = sp.csr_matrix(matrix, dtype=np.float64)
        a.sum_duplicates()
        a.eliminate_zeros()
        a.sort_indices()
        if not allow_self_loops and a.diagonal().any():
            a = a.tolil()
            a.setdiag(0.0)
            a = a.tocsr()
            a.eliminate_zeros()
            a.sort_indices()
        return cls(a.shape[0], a.indptr, a.indices, a.data, allow_self_loops)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int, float]],
                   allow_self_loops: bool = False) -> "Graph":
        """Build from undirected ``(i, j, w)`` triples; repeated pairs are summed."""
        edges = list(edges)
        if not edges:
            return cls.empty(n)
        e = np.asarray(edges, dtype=np.float64).reshape(-1, 3)
        i = e[:, 0].astype(np.int64)
        j = e[:, 1].astype(np.int64)
        w = e[:, 2]
        if len(i) and (i.min() < 0 or j.min() < 0 or i.max() >= n or j.max() >= n):
            raise IndexError("edge endpoint out of range")
        off = i != j
        rows = np.concatenate([i, j[off]])
        cols = np.concatenate([j, i[off]])
        vals = np.concatenate([w, w[off]])
        return cls.from_scipy(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)), allow_self_loops)

    @classmethod
    def empty(cls, n: int = 0) -> "Graph":
        return cls(n, np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0))

    @property
    def adjacency(self) -> sp.csr_matrix:
        """A read-only CSR view (shares the graph's arrays)."""
        return sp.csr_matrix((self.weights, self.col_indices, self.row_offsets), shape=(self.n, self.n))

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        loops = int(np.count_nonzero(self.col_indices == np.repeat(np.arange(self.n), np.diff(self.row_offsets))))
        return (len(self.col_indices) - loops) // 2 + loops

    def degrees(self) -> np.ndarray:
        rows = np.repeat(np.arange(self.n), np.diff(self.row_offsets))
        return np.bincount(rows, weights=self.weights, minlength=self.n).astype(np.float64)

    def edges(self) -> list[tuple[int, int, float]]:
        """Undirected edges as ``(i, j, w)`` with ``i <= j``, sorted."""
        rows = np.repeat(np.arange(self.n), np.diff(self.row_offsets))
        keep = rows <= self.col_indices
        return [(int(a), int(b), float(c)) for a, b, c in
                zip(rows[keep], self.col_indices[keep], self.weights[keep])]

    def subgraph(self, nodes: Sequence[int]) -> "Graph":
        """Induced subgraph; node ``nodes[k]`` becomes ``k``."""
        nodes = np.asarray(nodes, dtype=np.int64)
        a = self.adjacency[nodes][:, nodes]
        return Graph.from_scipy(a, self.allow_self_loops)

    def prefix(self, k: int) -> "Graph":
        return self.subgraph(np.arange(k))

    def validate(self) -> None:
        """Raise ``ValueError`` if any structural invariant is violated."""
        if len(self.row_offsets) != self.n + 1 or self.row_offsets[0] != 0:
            raise ValueError("row_offsets has wrong length or start")
        if np.any(np.diff(self.row_offsets) < 0):
            raise ValueError("row_offsets not monotone")
        if self.row_offsets[-1] != len(self.col_indices) or len(self.weights) != len(self.col_indices):
            raise ValueError("array lengths disagree")
        if len(self.col_indices) and (self.col_indices.min() < 0 or self.col_indices.max() >= self.n):
            raise ValueError("column index out of range")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite and non-negative")
        rows = np.repeat(np.arange(self.n), np.diff(self.row_offsets))
        keys = rows * max(self.n, 1) + self.col_indices
        if len(np.unique(keys)) != len(keys):
            raise ValueError("duplicate entries")
        if not self.allow_self_loops and np.any(rows == self.col_indices):
            raise ValueError("self-loop present")
        a = self.adjacency
        if (a != a.T).nnz:
            raise ValueError("adjacency is not symmetric")

    def same_arrays(self, other: "Graph") -> bool:
        return (self.n == other.n
                and np.array_equal(self.row_offsets, other.row_offsets)
                and np.array_equal(self.col_indices, other.col_indices)
                and np.array_equal(self.weights, other.weights))

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(np.int64(self.n).tobytes())
        for arr in (self.row_offsets, self.col_indices):
            h.update(arr.astype("<i8").tobytes())
        h.update(self.weights.astype("<f8").tobytes())
        return h.hexdigest()


def _read_text(source) -> str:
    if hasattr(source, "read"):
        return source.read()
    with open(source, encoding="utf-8") as fh:
        return fh.read()


def load_edge_list(source, weighted: bool = False, allow_self_loops: bool = False,
                   tokens: dict[str, int] | None = None) -> tuple[Graph, dict[str, int]]:
    """Read an edge list from a path or open text file; see :func:`parse_edge_list`."""
    return parse_edge_list(_read_text(source), weighted, allow_self_loops, tokens)


def parse_edge_list(text: str, weighted: bool = False, allow_self_loops: bool = False,
                    tokens: dict[str, int] | None = None) -> tuple[Graph, dict[str, int]]:
    """Parse a whitespace-separated edge list.

    Lines are ``src dst [weight]``; ``#`` starts a comment.  A line holding a
    single token declares a node without edges, which pins its id.  Tokens
    are remapped to ``0..n-1`` in first-appearance order, continuing from
    ``tokens`` when given.  Repeated pairs are summed when ``weighted``;
    otherwise a weight column is still validated but every edge gets 1.0.
    """
    token_map: dict[str, int] = dict(tokens) if tokens else {}
    acc: dict[tuple[int, int], float] = {}

    def node(tok: str) -> int:
        if tok not in token_map:
            token_map[tok] = len(token_map)
        return token_map[tok]

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) == 1:
            node(parts[0])
            continue
        if len(parts) > 3:
            raise GraphFormatError(f"expected 'src dst [weight]', got {raw!r}", lineno)
        w = 1.0
        if len(parts) == 3:
            try:
                w = float(parts[2])
            except ValueError:
                raise GraphFormatError(f"bad weight {parts[2]!r}", lineno) from None
            if not np.isfinite(w):
                raise GraphFormatError(f"non-finite weight {parts[2]!r}", lineno)
            if w < 0:
                raise GraphFormatError(f"negative weight {w}", lineno)
        u, v = node(parts[0]), node(parts[1])
        if u == v and not allow_self_loops:
            continue
        key = (min(u, v), max(u, v))
        acc[key] = acc.get(key, 0.0) + w if weighted else 1.0

    n = len(token_map)
    edges = [(i, j, w) for (i, j), w in acc.items() if w > 0]
    return Graph.from_edges(n, edges, allow_self_loops), token_map


def dump_edge_list(g: Graph, tokens: Sequence[str] | None = None) -> str:
    """Inverse of :func:`load_edge_list` with ``weighted=True``.

    Node declarations come first so ids survive the round trip.
    """
    names = list(tokens) if tokens is not None else [str(i) for i in range(g.n)]
    out = [names[i] for i in range(g.n)]
    out += [f"{names[i]}\t{names[j]}\t{w!r}" for i, j, w in g.edges()]
    return "\n".join(out) + ("\n" if out else "")


@dataclass
class LabelTable:
    """Node id -> set of label ids, labels dense in ``[0, label_count)``."""

    assignments: dict[int, frozenset[int]]
    label_count: int

    def indicator(self, nodes: Sequence[int]) -> np.ndarray:
        y = np.zeros((len(nodes), self.label_count), dtype=bool)
        for r, v in enumerate(nodes):
            for lab in self.assignments.get(int(v), ()):
                y[r, lab] = True
        return y

    def labeled(self, nodes: Iterable[int] | None = None) -> np.ndarray:
        """Nodes (from ``nodes``, default all) that carry at least one label, ascending."""
        nodes = sorted(self.assignments) if nodes is None else nodes
        return np.array([v for v in nodes if self.assignments.get(int(v))], dtype=np.int64)

    def relabel(self, new_of_old: dict[int, int]) -> "LabelTable":
        return LabelTable({new_of_old[v]: s for v, s in self.assignments.items() if v in new_of_old},
                          self.label_count)

    def validate(self, n: int | None = None) -> None:
        for v, labs in self.assignments.items():
            if n is not None and not 0 <= v < n:
                raise ValueError(f"labeled node {v} out of range")
            if any(not 0 <= lab < self.label_count for lab in labs):
                raise ValueError(f"label id out of range at node {v}")


def load_labels(source, tokens: dict[str, int]) -> tuple[LabelTable, dict[str, int]]:
    """Read ``node label`` lines from a path or file; unknown nodes are ignored."""
    return parse_labels(_read_text(source), tokens)


def parse_labels(text: str, tokens: dict[str, int]) -> tuple[LabelTable, dict[str, int]]:
    label_ids: dict[str, int] = {}
    assign: dict[int, set[int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphFormatError(f"expected 'node label', got {raw!r}", lineno)
        lab = label_ids.setdefault(parts[1], len(label_ids))
        if parts[0] in tokens:
            assign.setdefault(tokens[parts[0]], set()).add(lab)
    return LabelTable({v: frozenset(s) for v, s in assign.items()}, len(label_ids)), label_ids


def giant_component(g: Graph) -> tuple[Graph, np.ndarray]:
    """Largest connected component, ties going to the one with the lowest node id.

    Returns the induced subgraph and ``remap`` with ``remap[new] = old``.
    """
    if g.n == 0:
        return g, np.zeros(0, dtype=np.int64)
    ncomp, comp = connected_components(g.adjacency, directed=False)
    sizes = np.bincount(comp, minlength=ncomp)
    # component labels are assigned in order of lowest member id
    best = int(np.flatnonzero(sizes == sizes.max())[0])
    keep = np.flatnonzero(comp == best)
    return g.subgraph(keep), keep


@dataclass(frozen=True)
class StreamBatch:
    """Nodes ``base_n .. base_n + m - 1`` arriving together.

    ``cross_edges`` hold ``(new_local, old, w)``; ``intra_edges`` hold
    ``(new_local_a, new_local_b, w)`` with ``a < b``; ``delta_old_edges`` hold
    signed weight changes ``(old_a, old_b, dw)`` among existing nodes.
    """

    base_n: int
    m: int
    cross_edges: tuple = ()
    intra_edges: tuple = ()
    delta_old_edges: tuple = ()

    def validate(self) -> None:
        for r, old, w in self.cross_edges:
            if not (0 <= r < self.m and 0 <= old < self.base_n) or w < 0:
                raise IndexError(f"cross edge {(r, old, w)} out of range")
        for a, b, w in self.intra_edges:
            if not (0 <= a < self.m and 0 <= b < self.m) or w < 0:
                raise IndexError(f"intra edge {(a, b, w)} out of range")
        for a, b, _ in self.delta_old_edges:
            if not (0 <= a < self.base_n and 0 <= b < self.base_n):
                raise IndexError(f"delta edge {(a, b)} out of range")

    def head(self, r: int) -> "StreamBatch":
        """The first ``r`` arrivals of this batch (old-node deltas included)."""
        return StreamBatch(
            self.base_n, r,
            tuple(e for e in self.cross_edges if e[0] < r),
            tuple(e for e in self.intra_edges if e[0] < r and e[1] < r),
            self.delta_old_edges,
        )


def apply_batch(g: Graph, b: StreamBatch) -> Graph:
    """Grow ``g`` by the batch; negative deltas remove weight, clamping at zero."""
    if b.base_n != g.n:
        raise ValueError(f"batch expects {b.base_n} nodes, graph has {g.n}")
    b.validate()
    n1 = g.n + b.m
    a = g.adjacency
    if b.delta_old_edges:
        a = a.tolil(copy=True)
        for i, j, dw in b.delta_old_edges:
            cur = a[i, j]
            if dw < 0 and cur == 0:
                raise KeyError(f"cannot remove nonexistent edge ({i}, {j})")
            new = max(cur + dw, 0.0)
            a[i, j] = new
            a[j, i] = new
        a = a.tocsr()
    edges = [(g.n + r, old, w) for r, old, w in b.cross_edges]
    edges += [(g.n + x, g.n + y, w) for x, y, w in b.intra_edges]
    grow = Graph.from_edges(n1, edges, g.allow_self_loops).adjacency
    base = sp.csr_matrix(a, shape=(g.n, g.n))
    base.resize((n1, n1))
    return Graph.from_scipy(base + grow, g.allow_self_loops)


@dataclass
class StreamScenario:
    """An initial graph followed by an ordered stream of arrival batches.

    ``order[k]`` is the source node id of stream position ``k``.
    """

    initial: Graph
    batches: list[StreamBatch]
    labels: LabelTable | None = None
    order: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.initial.n

    @property
    def total_arrivals(self) -> int:
        return sum(b.m for b in self.batches)

    def graph_after(self, m: int) -> Graph:
        """Graph once the first ``m`` streamed nodes have arrived."""
        if m < 0 or m > self.total_arrivals:
            raise ValueError(f"m={m} outside 0..{self.total_arrivals}")
        if not any(b.delta_old_edges for b in self.batches):
            return self.full_graph().prefix(self.n + m)
        g, pos = self.initial, 0
        for b in self.batches:
            if pos >= m:
                break
            take = min(b.m, m - pos)
            g = apply_batch(g, b if take == b.m else b.head(take))
            pos += b.m
        return g

    def full_graph(self) -> Graph:
        if "full" not in self._cache:
            if any(b.delta_old_edges for b in self.batches):
                g = self.initial
                for b in self.batches:
                    g = apply_batch(g, b)
            else:
                # pure arrivals: assemble once instead of replaying
                edges = self.initial.edges()
                for b in self.batches:
                    b.validate()
                    edges += [(b.base_n + r, old, w) for r, old, w in b.cross_edges]
                    edges += [(b.base_n + x, b.base_n + y, w) for x, y, w in b.intra_edges]
                g = Graph.from_edges(self.n + self.total_arrivals, edges, self.initial.allow_self_loops)
            self._cache["full"] = g
        return self._cache["full"]


def _bfs_order(g: Graph, root: int) -> np.ndarray:
    from scipy.sparse.csgraph import breadth_first_order

    seen = np.zeros(g.n, dtype=bool)
    parts = []
    for r in [root, *range(g.n)]:
        if seen[r]:
            continue
        nodes = breadth_first_order(g.adjacency, r, directed=False, return_predecessors=False)
        seen[nodes] = True
        parts.append(nodes)
    return np.concatenate(parts).astype(np.int64) if parts else np.zeros(0, dtype=np.int64)


def make_scenario(g: Graph, n: int, order: str | Sequence[int] = "file", batch_size: int = 1,
                  seed: int = 42, labels: LabelTable | None = None) -> StreamScenario:
    """Split ``g`` into ``n`` initial nodes and a stream of arrival batches.

    ``order`` is ``"file"`` (ids ascending), ``"shuffle"`` (seeded
    permutation), ``"bfs"`` (breadth-first from a seeded random root, so
    every prefix of a connected graph is connected) or an explicit
    permutation of node ids.  Nodes are renumbered
    by stream position.  An edge joins the stream with whichever endpoint
    arrives last.
    """
    if n > g.n or n < 0:
        raise ValueError(f"n={n} exceeds graph size {g.n}")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if isinstance(order, str):
        if order == "file":
            perm = np.arange(g.n)
        elif order == "shuffle":
            perm = np.random.default_rng(seed).permutation(g.n)
        elif order == "bfs":
            perm = _bfs_order(g, int(np.random.default_rng(seed).integers(g.n)) if g.n else 0)
        else:
            raise ValueError(f"unknown order {order!r}")
    else:
        perm = np.asarray(order, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(g.n)):
            raise ValueError("order is not a permutation of the node ids")
    h = g.subgraph(perm)
    initial = h.prefix(n)
    a = h.adjacency.tocoo()
    upper = a.row <= a.col
    rows, cols, vals = a.row[upper], a.col[upper], a.data[upper]

    batches = []
    for start in range(n, g.n, batch_size):
        stop = min(start + batch_size, g.n)
        # later endpoint lies in this batch
        in_batch = (cols >= start) & (cols < stop)
        cross = tuple((int(c - start), int(r), float(w))
                      for r, c, w in zip(rows[in_batch], cols[in_batch], vals[in_batch]) if r < start)
        intra = tuple((int(r - start), int(c - start), float(w))
                      for r, c, w in zip(rows[in_batch], cols[in_batch], vals[in_batch]) if r >= start)
        cross = tuple(sorted(cross))
        intra = tuple(sorted(intra))
        batches.append(StreamBatch(start, stop - start, cross, intra))
    new_labels = None
    if labels is not None:
        new_labels = labels.relabel({int(old): k for k, old in enumerate(perm)})
    return StreamScenario(initial, batches, new_labels, perm)
