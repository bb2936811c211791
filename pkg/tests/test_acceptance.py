"""Acceptance criteria 1-7.

Each test prints one ``ACCEPTANCE C<k> PASS|FAIL`` line (visible with or
without ``-s``) and then asserts.  Criteria 4 and 5 need the PPI network
(see ``SIP_PPI_DIR``); when it is absent they fail with that reason.
"""

import time
from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp

from sipembed.cli import main as cli_main
from sipembed.datasets import DatasetUnavailable, load_ppi, planted_partition, sparse_random_graph
from sipembed.drift import drift_check, drift_spectrum, restart_threshold, split_perturbation
from sipembed.evaluation import aggregate, run_modes
from sipembed.graph import Graph, dump_edge_list, make_scenario
from sipembed.heatmap import drift_heatmap
from sipembed.projection import fit, generate, project_row, target_rows
from sipembed.spectral import lanczos_eig, spectral_norm, truncated_svd
from sipembed.state import dumps, load, loads
from sipembed.targets import TargetSpec, drift_target, grarep_plp_all, method_target

import oracles
from oracles import max_angle, random_connected


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE C{k} {'PASS' if ok else 'FAIL'}: {detail}")
    return emit


def _ppi_or_fail(report, k):
    try:
        return load_ppi()
    except DatasetUnavailable as exc:
        report(k, False, f"PPI network unavailable ({exc})")
        pytest.fail(f"criterion {k} needs the PPI network: {exc}")


# ---------------------------------------------------------------- C1

def _reproduction_error(g, spec):
    f = fit(g, spec)
    b = f.basis
    E = f.embedding.data
    if spec.method == "grarep":
        Xs = grarep_plp_all(g, spec.order, b.scalars["beta"])
        rep = np.hstack([project_row(X.to_dense(), b.factors(i)) for i, X in enumerate(Xs, start=1)])
    elif spec.method == "netmf":
        rep = project_row(target_rows(b, g, np.arange(g.n))[0], b.factors())
    else:
        rep = project_row(method_target(g, spec).to_dense(), b.factors())
    if spec.method == "le":
        keep = b.arrays["sigma"] >= b.scalars["le_clamp"]
        if not keep.any():
            return None
        rep, E = rep[:, keep], E[:, keep]
    scale = np.linalg.norm(E, axis=1)
    # rows whose embedding is numerically zero are compared on an absolute scale
    floor = 1e-6 * scale.max()
    return float(np.max(np.linalg.norm(rep - E, axis=1) / np.maximum(scale, floor)))


def test_c1_row_reproduction(report):
    # The identity is exact up to the eigensolver residual, so the fits use a
    # tight solver tolerance; the default-tolerance figure is reported alongside.
    t0 = time.perf_counter()
    worst, worst_default = {}, {}
    graphs = 0
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(40, 301))
        d = int(rng.integers(1, 17)) * 2  # even, so GraRep splits evenly over two orders
        g = Graph.from_scipy(random_connected(n, float(rng.uniform(1.0, 4.0)), rng, weighted=bool(seed % 2)))
        graphs += 1
        specs = [
            TargetSpec("le", d=d, tol=1e-12),
            TargetSpec("arope", d=d, tol=1e-12),
            TargetSpec("grarep", d=d, order=2, tol=1e-12),
            TargetSpec("netmf", d=d, rank=min(n, max(2 * d, 64)), window=int(rng.integers(1, 11)), tol=1e-12),
        ]
        for spec in specs:
            err = _reproduction_error(g, spec)
            if err is not None:
                worst[spec.method] = max(worst.get(spec.method, 0.0), err)
            err = _reproduction_error(g, replace(spec, tol=1e-8))
            if err is not None:
                worst_default[spec.method] = max(worst_default.get(spec.method, 0.0), err)
    elapsed = time.perf_counter() - t0
    ok = all(v <= 1e-8 for v in worst.values()) and len(worst) == 4 and elapsed < 60
    detail = ", ".join(f"{k} max rel err {v:.2e}" for k, v in worst.items())
    dflt = ", ".join(f"{k} {v:.2e}" for k, v in worst_default.items())
    report(1, ok, f"{graphs} graphs; solver tol 1e-12: {detail}; (solver tol 1e-8: {dflt}); {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- C2

def _rel_gap_ok(vals, d):
    # subspace comparison is only meaningful when the d-th value is separated from the next
    return d >= len(vals) or abs(vals[d - 1] - vals[d]) > 1e-6 * max(1.0, abs(vals[0]))


def test_c2_oracle_equivalence(report):
    t0 = time.perf_counter()
    val_err, ang, cases = 0.0, 0.0, 0
    for seed in range(12):
        rng = np.random.default_rng(2000 + seed)
        n = int(rng.integers(50, 301))
        d = int(rng.integers(2, 25))
        A = random_connected(n, 2.0, rng, weighted=True)
        S = oracles.arope(A, (1.0, 0.01, 1e-4))
        for M in (sp.csr_matrix(A), S):
            Md = M.toarray() if sp.issparse(M) else M
            w, U = np.linalg.eigh(Md)
            order = np.argsort(-w, kind="stable")
            w, U = w[order], U[:, order]
            eig = lanczos_eig(M, n, d, seed=seed)
            val_err = max(val_err, np.abs(eig.values - w[:d]).max() / max(1.0, abs(w[0])))
            if _rel_gap_ok(w, d):
                ang = max(ang, max_angle(eig.vectors, U[:, :d]))
            cases += 1
        # rectangular, non-symmetric SVD
        m = int(rng.integers(30, 301))
        R = sp.random(n, m, density=0.05, random_state=rng, data_rvs=lambda k: rng.standard_normal(k)).tocsr()
        Rd = R.toarray()
        Uf, Sf, Vt = np.linalg.svd(Rd)
        k = min(d, n, m)
        s = truncated_svd(R, R.T, n, m, k, seed=seed)
        val_err = max(val_err, np.abs(s.sigma - Sf[:k]).max() / max(1.0, Sf[0]))
        if _rel_gap_ok(Sf, k):
            ang = max(ang, max_angle(s.U, Uf[:, :k]), max_angle(s.V, Vt[:k].T))
        # spectral norm of the blocks a drift check sees
        for B in (Rd, Rd[:, : m // 2], S[: n // 2, n // 2:]):
            ref = np.linalg.norm(B, 2)
            val_err = max(val_err, abs(spectral_norm(B) - ref) / max(1.0, ref))
        cases += 2
    elapsed = time.perf_counter() - t0
    ok = val_err <= 1e-8 and ang < 1e-6 and elapsed < 120
    report(2, ok, f"{cases} decompositions; max value err {val_err:.2e}, max angle {ang:.2e}; {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- C3

def _dense_target(A, method, n_fixed):
    if method == "le":
        return A
    if method == "arope":
        return oracles.arope(A, (1.0, 0.01, 1e-4))
    return oracles.grarep(A, 2, 1.0 / n_fixed)


def _grown(n, m, rng):
    """Connected n-node graph plus m arrivals, each linked to earlier nodes with scaled weights."""
    weighted = bool(rng.integers(2))
    A = np.zeros((n + m, n + m))
    A[:n, :n] = random_connected(n, float(rng.uniform(1.0, 3.0)), rng, weighted=weighted)
    c = float(rng.choice([0.02, 0.1, 0.3, 1.0]))
    for v in range(n, n + m):
        k = int(rng.integers(1, 4))
        for u in rng.choice(v, size=min(k, v), replace=False):
            A[u, v] = A[v, u] = c * (rng.uniform(0.5, 2.0) if weighted else 1.0)
    return A


def _close(a, b):
    return abs(a - b) <= 1e-6 * max(abs(a), abs(b), 1e-12)


def test_c3_restart_test_brute_force(report):
    t0 = time.perf_counter()
    pairs = mismatches = near = 0
    methods = ["le", "arope", "grarep"]
    for seed in range(120):
        rng = np.random.default_rng(3000 + seed)
        method = methods[seed % 3]
        n = int(rng.integers(10, 201))
        m = int(rng.integers(1, 11))
        A = _grown(n, m, rng)
        g1 = Graph.from_scipy(A)
        spec = TargetSpec(method, d=2, order=2, beta=1.0 / n)
        M0 = _dense_target(A[:n, :n], method, n)
        M1 = _dense_target(A, method, n)
        # the judge runs on the package's own targets; the oracle on dense formulas
        T0, T1 = drift_target(g1.prefix(n), spec), drift_target(g1, spec)
        s1, s2 = drift_spectrum(T0)
        v = drift_check(split_perturbation(T0, T1, n, m), s1, s2)
        ref = oracles.drift_lhs(M0, M1, n)
        pairs += 1
        if not (_close(v.lhs, ref["lhs"]) and _close(v.gap, ref["gap"])):
            mismatches += 1
        elif v.ok != ref["ok"]:
            if _close(ref["lhs"], ref["gap"]):
                near += 1
            else:
                mismatches += 1
    # exhaustive first-failure scans
    scans = scan_bad = 0
    for seed in range(30):
        rng = np.random.default_rng(4000 + seed)
        method = methods[seed % 3]
        n = int(rng.integers(10, 121))
        m_tot = int(rng.integers(3, 16))
        A = _grown(n, m_tot, rng)
        g1 = Graph.from_scipy(A)
        sc = make_scenario(g1, n)
        spec = TargetSpec(method, d=2, order=2)
        got = restart_threshold(sc, spec)
        M0 = _dense_target(A[:n, :n], method, n)
        grown = [_dense_target(A[: n + k, : n + k], method, n) for k in range(1, m_tot + 1)]
        want = oracles.first_failure_m0(M0, grown)
        scans += 1
        if got != want:
            # accept only when the deciding comparison sits on the tolerance boundary
            k = min(got, want) + 1
            r = oracles.drift_lhs(M0, grown[k - 1], n)
            if not _close(r["lhs"], r["gap"]):
                scan_bad += 1
    elapsed = time.perf_counter() - t0
    ok = pairs >= 100 and mismatches == 0 and scan_bad == 0 and elapsed < 300
    report(3, ok, f"{pairs} pairs ({mismatches} mismatches, {near} boundary ties); "
                  f"{scans} exhaustive scans ({scan_bad} mismatches); {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- C4

def test_c4_ppi_heatmap_drop(report):
    g, labels = _ppi_or_fail(report, 4)
    t0 = time.perf_counter()
    sc = make_scenario(g, 1000, order="bfs", seed=42, labels=labels)
    drops = {}
    for spec in (TargetSpec("arope", d=128), TargetSpec("grarep", d=128)):
        res = drift_heatmap(sc, spec, d=128)
        m0 = res.m0
        drops[spec.method] = (m0, res.mean(m0) - res.mean(5 * m0) if m0 > 0 else 0.0)
    elapsed = time.perf_counter() - t0
    ok = all(dv >= 0.1 for _, dv in drops.values()) and elapsed < 1800
    report(4, ok, "; ".join(f"{k}: m0={m0}, drop={dv:.3f}" for k, (m0, dv) in drops.items()) + f"; {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------- C5

def test_c5_ppi_ratio_bands(report):
    g, labels = _ppi_or_fail(report, 5)
    t0 = time.perf_counter()
    bands = {"arope": (0.85, range(500, 2501, 100)), "grarep": (0.70, range(500, 2501, 100)),
             "netmf": (0.70, range(1000, 2501, 100))}
    results = {}
    for method, (floor, ns) in bands.items():
        spec = TargetSpec(method, d=128)
        runs = [run_modes(make_scenario(g, n, order="bfs", seed=42, labels=labels), spec, n) for n in ns]
        s = aggregate(runs)
        results[method] = (s["ratio_micro_f1"], s["ratio_embed_time_s"], floor)
    elapsed = time.perf_counter() - t0
    ok = all(r >= floor for r, _, floor in results.values())
    ok = ok and all(results[k][1] <= 0.25 for k in ("arope", "netmf")) and elapsed < 7200
    report(5, ok, "; ".join(f"{k}: ratio {r:.4f} (>= {f}), time {t:.3f}" for k, (r, t, f) in results.items()))
    assert ok


# ---------------------------------------------------------------- C6

def test_c6_linear_generate_time(report):
    t0 = time.perf_counter()
    spec = TargetSpec("arope", d=16)
    ns = [2 ** k for k in range(10, 16)]
    times = []
    for n in ns:
        g = sparse_random_graph(n + 1, mean_degree=10, seed=n)
        sc = make_scenario(g, n)
        f = fit(sc.initial, spec)
        g1 = sc.graph_after(1)
        generate(f.basis, spec, g1, n, 1)  # warm-up
        reps = []
        for _ in range(21):
            t = time.perf_counter()
            generate(f.basis, spec, g1, n, 1)
            reps.append(time.perf_counter() - t)
        times.append(float(np.median(reps)))
    slope = float(np.polyfit(np.log(ns), np.log(times), 1)[0])
    elapsed = time.perf_counter() - t0
    ok = 0.8 <= slope <= 1.3 and elapsed < 600
    report(6, ok, f"log-log slope {slope:.3f} over n=2^10..2^15 "
                  f"(median times {', '.join(f'{t * 1e3:.2f}ms' for t in times)}); {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------- C7

def test_c7_determinism_and_round_trip(report, tmp_path):
    g, labels = planted_partition(500, p_in=0.04, p_out=0.003, hub_exponent=1.8, seed=7)
    edges = tmp_path / "g.txt"
    edges.write_text(dump_edge_list(g))
    lab = tmp_path / "l.txt"
    lab.write_text("".join(f"{v} {c}\n" for v in sorted(labels.assignments) for c in sorted(labels.assignments[v])))
    common = ["--input", str(edges), "--n", "300", "--order", "bfs", "--seed", "42"]
    outputs = []
    for rep in range(2):
        d = tmp_path / f"run{rep}"
        d.mkdir()
        codes = []
        for method, extra in (("le", []), ("arope", []), ("grarep", ["--order-k", "2"]),
                              ("netmf", ["--rank", "64", "--window", "5"])):
            st = d / f"{method}.state"
            codes.append(cli_main(["fit", *common, "--method", method, "--dim", "16", *extra,
                                   "--state", str(st), "--out", str(d / f"{method}.csv")]))
            codes.append(cli_main(["generate", "--input", str(edges), "--state", str(st), "--m", "10",
                                   "--check", "--out", str(d / f"{method}.gen.csv")]))
        codes.append(cli_main(["threshold", *common, "--method", "arope", "--dim", "16",
                               "--out", str(d / "t.json")]))
        codes.append(cli_main(["heatmap", *common, "--method", "arope", "--dim", "16", "--grid", "0,5,25",
                               "--out", str(d / "h.csv")]))
        codes.append(cli_main(["bench", *common[:2], "--labels", str(lab), "--method", "arope", "--dim", "16",
                               "--n-range", "250:300:50", "--order", "bfs", "--m-max", "40",
                               "--out", str(d / "b.csv")]))
        assert codes == [0] * len(codes)
        files = sorted(p.name for p in d.iterdir() if not p.name.endswith(".timing.csv") and p.suffix != ".json"
                       or p.name.endswith(".verdict.json") or p.name == "t.json")
        outputs.append({name: (d / name).read_bytes() for name in files})
    same = outputs[0] == outputs[1]
    states = [n for n in outputs[0] if n.endswith(".state")]
    exact = True
    for name in states:
        blob = outputs[0][name]
        st = load(tmp_path / "run0" / name)
        exact &= dumps(st) == blob and dumps(loads(blob)) == blob
        for k, a in st.basis.arrays.items():
            exact &= loads(blob).basis.arrays[k].tobytes() == a.tobytes()
    ok = same and exact and len(states) == 4
    report(7, ok, f"{len(outputs[0])} output files byte-identical across runs: {same}; "
                  f"{len(states)} state files round-trip bit-exact: {exact}")
    assert ok
