import json
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from sipembed.drift import (
    DriftVerdict,
    PerturbationSplit,
    drift_check,
    drift_spectrum,
    p_bound,
    restart_threshold,
    scan_threshold,
    split_perturbation,
)
from sipembed.graph import Graph, make_scenario, parse_edge_list
from sipembed.targets import TargetMatrix, TargetSpec, drift_target

import oracles
from oracles import random_connected


def k2_star(arrivals: int, w: float) -> Graph:
    """K2 followed by ``arrivals`` nodes that each attach to node 0 with weight ``w``."""
    return Graph.from_edges(2 + arrivals, [(0, 1, 1.0)] + [(0, j, w) for j in range(2, 2 + arrivals)])


def empty_split(n, m):
    z = lambda r, c: sp.csr_matrix((r, c))
    return PerturbationSplit(z(n, n), z(n, m), z(m, m))


def test_split_of_padded_matrix_is_zero():
    M0 = np.array([[0.0, 1.0], [1.0, 0.0]])
    M1 = np.zeros((4, 4))
    M1[:2, :2] = M0
    s = split_perturbation(M0, M1, 2, 2)
    assert s.delta_M.nnz == 0 and s.E1.nnz == 0 and s.E2.nnz == 0 and s.E1_lower is None


def test_split_k2_plus_node():
    w = 0.3
    M0 = k2_star(0, w).adjacency
    M1 = k2_star(1, w).adjacency
    s = split_perturbation(M0, M1, 2, 1)
    assert s.delta_M.nnz == 0
    np.testing.assert_array_equal(s.E1.toarray(), [[w], [0.0]])
    assert s.E2.nnz == 0


@given(st.integers(0, 10_000), st.integers(3, 25), st.integers(1, 6))
def test_split_reassembles(seed, n, m):
    rng = np.random.default_rng(seed)
    A = random_connected(n + m, 1.0, rng)
    g1 = Graph.from_scipy(A)
    spec = TargetSpec("arope", d=1)
    M0 = drift_target(g1.prefix(n), spec)
    M1 = drift_target(g1, spec)
    s = split_perturbation(M0, M1, n, m)
    np.testing.assert_allclose(s.assemble(M0.materialize()), M1.to_dense(), atol=1e-14)


def test_split_dimension_mismatch():
    with pytest.raises(ValueError):
        split_perturbation(np.zeros((2, 2)), np.zeros((3, 3)), 2, 2)


def test_empty_split_ok():
    v = drift_check(empty_split(2, 0), 1.0, -1.0)
    assert v.lhs == 0.0 and v.gap == 2.0 and v.ok
    assert p_bound(v) == 0.0


@pytest.mark.parametrize("w", [0.2, 0.4, 0.99, 1.0, 1.5])
def test_k2_single_arrival(w):
    g0, g1 = k2_star(0, w), k2_star(1, w)
    s = split_perturbation(g0.adjacency, g1.adjacency, 2, 1)
    v = drift_check(s, 1.0, -1.0)
    assert v.lhs == pytest.approx(2 * w, rel=1e-12)
    assert v.gap == 2.0
    assert v.ok == (w < 1)


def test_k2_bound_value():
    g0, g1 = k2_star(0, 0.4), k2_star(1, 0.4)
    v = drift_check(split_perturbation(g0.adjacency, g1.adjacency, 2, 1), 1.0, -1.0)
    assert v.gamma == pytest.approx(0.4) and v.delta == pytest.approx(2.0)
    assert v.p_bound == pytest.approx(0.4)


def test_bound_absent_when_condition_fails():
    v = DriftVerdict(0, 1.0, 0, 2.0, 1.0, 0.0, 1.0, False, 1.0, 1.0, None, False)
    assert p_bound(v) is None
    v = DriftVerdict(0, 0.1, 3.0, 3.2, 1.0, 0.0, 1.0, False, 0.1, -2.0, None, False)
    assert p_bound(v) is None


def test_zero_gap_never_ok():
    s = split_perturbation(k2_star(0, 0.4).adjacency, k2_star(1, 0.4).adjacency, 2, 1)
    assert not drift_check(s, 1.0, 1.0).ok
    with pytest.raises(ValueError):
        drift_check(s, 0.0, 1.0)


def test_k2_threshold_is_six():
    sc = make_scenario(k2_star(12, 0.4), 2)
    scan = scan_threshold(sc, TargetSpec("le", d=1))
    assert scan.m0 == 6
    for m, v in enumerate(scan.trace, start=1):
        assert v.rho_e1 == pytest.approx(0.4 * math.sqrt(m), rel=1e-9)
        assert v.lhs == pytest.approx(0.8 * math.sqrt(m), rel=1e-9)
    assert not scan.trace[-1].ok and len(scan.trace) == 7
    assert restart_threshold(sc, TargetSpec("le", d=1)) == 6


def test_disconnected_stream_hits_cap():
    # arrivals carry no edges at all, so every block stays zero
    g = Graph.from_edges(10, [(0, 1, 1.0), (1, 2, 1.0)])
    sc = make_scenario(g, 3)
    scan = scan_threshold(sc, TargetSpec("le", d=1), m_max=4)
    assert scan.m0 == 4 and scan.capped


def test_threshold_is_zero_on_immediate_failure():
    sc = make_scenario(k2_star(3, 5.0), 2)
    assert restart_threshold(sc, TargetSpec("le", d=1)) == 0


def test_empty_stream_raises():
    sc = make_scenario(k2_star(0, 1.0), 2)
    with pytest.raises(ValueError, match="empty"):
        restart_threshold(sc, TargetSpec("le", d=1))


def test_verdict_json():
    s = split_perturbation(k2_star(0, 0.4).adjacency, k2_star(1, 0.4).adjacency, 2, 1)
    d = drift_check(s, 1.0, -1.0).to_json_dict()
    assert d["ok"] is True and d["lhs"] == "0.8" and d["rho_e1_lower"] is None
    json.loads(json.dumps(d))


@given(st.integers(0, 10_000), st.integers(5, 40), st.integers(1, 5),
       st.sampled_from(["le", "arope", "grarep"]))
def test_lhs_matches_dense_oracle(seed, n, m, method):
    rng = np.random.default_rng(seed)
    g1 = Graph.from_scipy(random_connected(n + m, 1.5, rng))
    g0 = g1.prefix(n)
    spec = TargetSpec(method, d=2, order=2, beta=1.0 / n)
    try:
        M0, M1 = drift_target(g0, spec), drift_target(g1, spec)
    except ValueError:
        return  # prefix with an isolated node; not a valid initial graph
    s1, s2 = drift_spectrum(M0)
    v = drift_check(split_perturbation(M0, M1, n, m), s1, s2)
    ref = oracles.drift_lhs(M0.to_dense(), M1.to_dense(), n)
    assert v.lhs == pytest.approx(ref["lhs"], rel=1e-6, abs=1e-12)
    assert v.gap == pytest.approx(ref["gap"], rel=1e-6, abs=1e-12)
    if abs(ref["lhs"] - ref["gap"]) > 1e-6 * max(1, ref["gap"]):
        assert v.ok == ref["ok"]


@given(st.integers(0, 10_000), st.floats(0.1, 100.0))
def test_scale_equivariance(seed, c):
    rng = np.random.default_rng(seed)
    A = random_connected(14, 1.0, rng)
    M0, M1 = A[:10, :10], A
    s1, s2 = np.sort(np.linalg.eigvalsh(M0))[::-1][:2]
    v = drift_check(split_perturbation(M0, M1, 10, 4), s1, s2)
    w = drift_check(split_perturbation(c * M0, c * M1, 10, 4), c * s1, c * s2)
    assert w.lhs == pytest.approx(c * v.lhs, rel=1e-8)
    assert w.gap == pytest.approx(c * v.gap, rel=1e-12)
    assert w.ok == v.ok or abs(v.lhs - v.gap) < 1e-8 * v.gap


@given(st.integers(0, 10_000), st.integers(2, 8))
def test_e1_norm_monotone_in_columns(seed, m):
    rng = np.random.default_rng(seed)
    A = random_connected(12 + m, 1.5, rng)
    prev = 0.0
    for k in range(1, m + 1):
        M1 = A[:12 + k, :12 + k]
        v = drift_check(split_perturbation(A[:12, :12], M1, 12, k), 10.0, 0.0)
        assert v.rho_e1 >= prev * (1 - 1e-9)
        prev = v.rho_e1


@given(st.integers(0, 10_000))
def test_first_failure_consistency(seed):
    rng = np.random.default_rng(seed)
    g = Graph.from_scipy(random_connected(40, 1.0, rng))
    sc = make_scenario(g, 25, order="bfs", seed=seed)
    spec = TargetSpec("le", d=2)
    scan = scan_threshold(sc, spec)
    assert all(v.ok for v in scan.trace[:scan.m0])
    M0 = drift_target(sc.initial, spec)
    s1, s2 = drift_spectrum(M0)
    for m in range(1, scan.m0 + 1):
        v = drift_check(split_perturbation(M0, drift_target(sc.graph_after(m), spec), 25, m), s1, s2)
        assert v.ok


def test_nonsymmetric_cross_term():
    M0 = np.array([[1.0, 0.0], [0.0, 0.0]])
    M1 = np.array([[1.0, 0.0, 0.3], [0.0, 0.0, 0.0], [0.5, 0.0, 0.0]])
    v = drift_check(split_perturbation(M0, M1, 2, 1), 1.0, 0.0)
    assert v.rho_e1 == pytest.approx(0.3) and v.rho_e1_lower == pytest.approx(0.5)
    assert v.lhs == pytest.approx(2 * math.sqrt(0.15))


def test_drift_spectrum_small_cases():
    assert drift_spectrum(TargetMatrix.explicit(np.zeros((0, 0)))) == (0.0, 0.0)
    assert drift_spectrum(TargetMatrix.explicit(np.array([[2.0]]))) == (2.0, 2.0)
    s = drift_spectrum(TargetMatrix.explicit(np.array([[0.0, 1.0], [1.0, 0.0]])))
    assert s == pytest.approx((1.0, -1.0))
