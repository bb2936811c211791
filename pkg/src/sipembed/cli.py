"""Command-line interface.

Subcommands::

    fit        fit a method on the first n nodes and save its state
    generate   embed arriving nodes from a saved state
    threshold  restart threshold m0 with the per-m trace
    heatmap    eigenvector prefix correlations over a grid of m
    bench      three-mode node-classification sweep

Errors go to stderr as a single line ``SIPERR <CODE>: <message>`` and the
process exits nonzero.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import DatasetUnavailable
from .drift import scan_threshold
from .evaluation import aggregate, reports_to_csv, run_modes, summary_to_csv, summary_to_json
from .graph import (
    Graph,
    GraphFormatError,
    StreamBatch,
    apply_batch,
    giant_component,
    load_edge_list,
    load_labels,
    make_scenario,
)
from .heatmap import drift_heatmap, heatmap_to_csv
from .projection import fit, generate
from .spectral import ConvergenceError
from .state import SavedState, StateError, load, save
from .targets import METHODS, TargetSpec

log = logging.getLogger("sipembed")

EXIT = {"INTERNAL": 1, "USAGE": 2, "INPUT": 3, "INVALID": 4, "STATE": 5, "DATA": 6, "NUMERIC": 7}


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("USAGE", message)


# ---------------------------------------------------------------- helpers

def _spec(args, method: str | None = None) -> TargetSpec:
    method = method or args.method
    if method is None:
        raise CliError("USAGE", "--method is required")
    kw = dict(method=method, d=args.dim, seed=args.seed)
    if args.order_k is not None:
        kw["order"] = args.order_k
    if args.rank is not None:
        kw["rank"] = args.rank
    if args.window is not None:
        kw["window"] = args.window
    if args.negative is not None:
        kw["negative"] = args.negative
    if args.weights is not None:
        kw["weights"] = tuple(float(x) for x in args.weights.split(","))
    return TargetSpec(**kw)


def _load_graph(args):
    if not args.input:
        raise CliError("USAGE", "--input is required")
    g, tok = load_edge_list(args.input, weighted=args.weighted)
    names = [None] * g.n
    for t, i in tok.items():
        names[i] = t
    g, keep = giant_component(g)
    names = [names[i] for i in keep]
    labels = None
    if getattr(args, "labels", None):
        labels, _ = load_labels(args.labels, {t: i for i, t in enumerate(names)})
    return g, names, labels


def _scenario(args, n: int, g, names, labels):
    if n is None:
        raise CliError("USAGE", "--n is required")
    if not 1 <= n <= g.n:
        raise CliError("INVALID", f"--n {n} outside 1..{g.n} (giant component size)")
    sc = make_scenario(g, n, order=args.order, batch_size=args.batch, seed=args.seed, labels=labels)
    return sc, [names[int(i)] for i in sc.order]


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _embedding_csv(E: np.ndarray, ids) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node_id"] + [f"e_{j + 1}" for j in range(E.shape[1])])
    for name, row in zip(ids, E):
        w.writerow([name] + [repr(float(x)) for x in row])
    return buf.getvalue()


def _sibling(path, suffix: str) -> str | None:
    if path in (None, "-"):
        return None
    p = Path(path)
    return str(p.with_name(p.stem + suffix))


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _parse_range(text: str) -> list[int]:
    try:
        a, b, s = (int(x) for x in text.split(":"))
    except ValueError:
        raise CliError("USAGE", f"--n-range expects start:stop:step, got {text!r}") from None
    if s <= 0 or a < 1 or b < a:
        raise CliError("INVALID", f"bad sweep bounds {text!r}")
    return list(range(a, b + 1, s))


# ---------------------------------------------------------------- commands

def cmd_fit(args) -> int:
    g, names, labels = _load_graph(args)
    sc, ids = _scenario(args, args.n, g, names, labels)
    spec = _spec(args)
    res = fit(sc.initial, spec)
    meta = {
        "order": args.order, "seed": args.seed, "batch": args.batch, "weighted": bool(args.weighted),
        "tokens": ids[:args.n], "graph_fingerprint": sc.initial.fingerprint(),
    }
    if args.state:
        save(SavedState(res.basis, spec, res.sigma, meta), args.state)
    _write(args.out, _embedding_csv(res.embedding.data, ids[:args.n]))
    return 0


def _batch_from_file(path, g0: Graph, tokens: list[str], weighted: bool):
    """Edges of a batch file: new tokens become nodes ``n, n+1, ...`` in first-appearance order."""
    index = {t: i for i, t in enumerate(tokens)}
    new: dict[str, int] = {}
    cross, intra, delta = {}, {}, {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) == 1:
            if parts[0] not in index:
                new.setdefault(parts[0], len(new))
            continue
        if len(parts) not in (2, 3):
            raise GraphFormatError(f"malformed batch line {raw!r}", lineno)
        try:
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise GraphFormatError(f"bad weight {parts[2]!r}", lineno) from None
        if not np.isfinite(w) or w < 0:
            raise GraphFormatError(f"bad weight {parts[2]!r}", lineno)
        a, b = parts[0], parts[1]
        if a == b:
            continue
        for t in (a, b):
            if t not in index:
                new.setdefault(t, len(new))
        if a in index and b in index:
            i, j = sorted((index[a], index[b]))
            delta[(i, j)] = delta.get((i, j), 0.0) + w
        elif a in index or b in index:
            old, nw = (a, b) if a in index else (b, a)
            key = (new[nw], index[old])
            cross[key] = cross.get(key, 0.0) + w
        else:
            i, j = sorted((new[a], new[b]))
            intra[(i, j)] = intra.get((i, j), 0.0) + w
    if not weighted:
        cross = {k: 1.0 for k in cross}
        intra = {k: 1.0 for k in intra}
        A = g0.adjacency
        delta = {k: 1.0 for k in delta if A[k[0], k[1]] == 0}
    b = StreamBatch(g0.n, len(new), tuple((r, o, w) for (r, o), w in sorted(cross.items())),
                    tuple((i, j, w) for (i, j), w in sorted(intra.items())),
                    tuple((i, j, w) for (i, j), w in sorted(delta.items())))
    return b, sorted(new, key=new.get)


def cmd_generate(args) -> int:
    if not args.state:
        raise CliError("USAGE", "--state is required")
    st = load(args.state)
    spec = st.spec
    if args.method and args.method != spec.method:
        raise CliError("STATE", f"state holds {spec.method}, not {args.method}")
    meta = st.meta
    n = st.basis.n
    if args.n is not None and args.n != n:
        raise CliError("STATE", f"stale state: fitted on n={n}, --n {args.n}")
    args.order, args.seed, args.batch = meta["order"], meta["seed"], meta["batch"]
    args.weighted = meta.get("weighted", False)
    g, names, _ = _load_graph(args)
    if n > g.n:
        raise CliError("STATE", f"stale state: fitted on n={n} but the input has {g.n} nodes")
    sc, ids = _scenario(args, n, g, names, None)
    g0 = sc.initial
    if g0.fingerprint() != meta["graph_fingerprint"] or ids[:n] != meta["tokens"]:
        raise CliError("STATE", "stale state: initial graph differs from the one the state was fitted on")
    if args.batch_file:
        batch, new_ids = _batch_from_file(args.batch_file, g0, ids[:n], args.weighted)
        g1 = apply_batch(g0, batch)
        m = batch.m
    else:
        m = args.m if args.m is not None else args.batch
        if not 0 <= m <= sc.total_arrivals:
            raise CliError("INVALID", f"--m {m} outside 0..{sc.total_arrivals}")
        g1 = sc.graph_after(m)
        new_ids = ids[n:n + m]
    res = generate(st.basis, spec, g1, n, m, check=args.check, sigma=st.sigma, g0=g0)
    _write(args.out, _embedding_csv(res.embedding.data, new_ids))
    report = {
        "method": spec.method, "n": n, "m": m, "seed": spec.seed, "check": bool(args.check),
        "retrained": res.retrained, "verdict": res.verdict.to_json_dict() if res.verdict else None,
    }
    _write(args.json or _sibling(args.out, ".verdict.json"), _json(report))
    if res.retrained:
        meta = dict(meta, tokens=list(meta["tokens"]) + list(new_ids), graph_fingerprint=g1.fingerprint())
        save(SavedState(res.basis, spec, res.sigma, meta), args.state)
    return 0


def cmd_threshold(args) -> int:
    g, names, _ = _load_graph(args)
    sc, _ = _scenario(args, args.n, g, names, None)
    spec = _spec(args)
    scan = scan_threshold(sc, spec, args.n, m_max=args.m_max, seed=args.seed)
    out = {"method": spec.method, "n": args.n, "seed": args.seed, "order": args.order,
           "m_max": args.m_max, **scan.to_json_dict()}
    _write(args.out, _json(out))
    return 0


def cmd_heatmap(args) -> int:
    g, names, _ = _load_graph(args)
    sc, _ = _scenario(args, args.n, g, names, None)
    spec = _spec(args)
    grid = None
    if args.grid:
        try:
            grid = [int(x) for x in args.grid.split(",")]
        except ValueError:
            raise CliError("USAGE", f"--grid expects comma-separated integers, got {args.grid!r}") from None
    res = drift_heatmap(sc, spec, grid=grid, d=args.dim, m_max=args.m_max, seed=args.seed)
    _write(args.out, heatmap_to_csv(res))
    return 0


def cmd_bench(args) -> int:
    if not args.labels:
        raise CliError("DATA", "bench needs --labels")
    g, names, labels = _load_graph(args)
    if not labels.assignments:
        raise CliError("DATA", "no labeled nodes in the giant component")
    ns = _parse_range(args.n_range) if args.n_range else ([args.n] if args.n else None)
    if not ns:
        raise CliError("USAGE", "--n or --n-range is required")
    spec = _spec(args)
    runs = []
    for n in ns:
        sc, _ = _scenario(args, n, g, names, labels)
        runs.append(run_modes(sc, spec, n, m_max=args.m_max))
    summary = aggregate(runs)
    _write(args.out, reports_to_csv(runs))
    _write(_sibling(args.out, ".summary.csv"), summary_to_csv(summary, spec.method))
    _write(_sibling(args.out, ".timing.csv"), reports_to_csv(runs, timing=True))
    doc = {"method": spec.method, "seed": args.seed, "spec": spec.params(),
           "runs": [r.to_json_dict() for r in runs]}
    _write(_sibling(args.out, ".json"),
           _json({**doc, "summary": json.loads(summary_to_json(summary))}))
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sipembed", description="Streaming node embedding by projection onto a fixed basis.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, method_required=True):
        sp.add_argument("--input", help="edge list (src dst [weight] per line)")
        sp.add_argument("--weighted", action="store_true", help="read a third weight column")
        sp.add_argument("--method", choices=METHODS, required=method_required)
        sp.add_argument("--dim", type=int, default=128, help="embedding dimension d")
        sp.add_argument("--n", type=int, help="initial node count")
        sp.add_argument("--batch", type=int, default=1, help="arrival batch size")
        sp.add_argument("--order", default="file", choices=("file", "shuffle", "bfs"), help="arrival order")
        sp.add_argument("--m-max", type=int, default=None, help="cap on the threshold scan")
        sp.add_argument("--seed", type=int, default=42)
        sp.add_argument("--out", default="-", help="output path ('-' for stdout)")
        sp.add_argument("--order-k", type=int, default=None, help="GraRep maximum transition order")
        sp.add_argument("--rank", type=int, default=None, help="NetMF eigen-rank h")
        sp.add_argument("--window", type=int, default=None, help="NetMF window T")
        sp.add_argument("--negative", type=float, default=None, help="NetMF negative samples b")
        sp.add_argument("--weights", default=None, help="AROPE weights, comma separated")
        sp.add_argument("-v", "--verbose", action="store_true")

    s = sub.add_parser("fit", help="fit on the first n nodes")
    common(s)
    s.add_argument("--labels")
    s.add_argument("--state", help="state file to write")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("generate", help="embed arriving nodes")
    common(s, method_required=False)
    s.add_argument("--state", help="state file from fit")
    s.add_argument("--m", type=int, default=None, help="number of streamed nodes to embed")
    s.add_argument("--batch-file", default=None, help="edges introducing new nodes")
    s.add_argument("--check", action="store_true", help="refit when the restart test fails")
    s.add_argument("--json", default=None, help="verdict JSON path (default: next to --out)")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("threshold", help="restart threshold m0")
    common(s)
    s.set_defaults(func=cmd_threshold)

    s = sub.add_parser("heatmap", help="eigenvector prefix correlations")
    common(s)
    s.add_argument("--grid", default=None, help="comma-separated m values (default 0,m0,5*m0)")
    s.set_defaults(func=cmd_heatmap)

    s = sub.add_parser("bench", help="three-mode classification sweep")
    common(s)
    s.add_argument("--labels")
    s.add_argument("--n-range", default=None, help="start:stop:step (inclusive)")
    s.set_defaults(func=cmd_bench)
    return p


def _classify(exc: BaseException) -> tuple[str, str]:
    msg = " ".join(str(exc).split()) or type(exc).__name__
    if isinstance(exc, CliError):
        return exc.code, msg
    if isinstance(exc, StateError):
        return "STATE", msg
    if isinstance(exc, DatasetUnavailable):
        return "DATA", msg
    if isinstance(exc, GraphFormatError):
        return "INPUT", msg
    if isinstance(exc, (FileNotFoundError, IsADirectoryError, PermissionError, UnicodeDecodeError)):
        return "INPUT", msg
    if isinstance(exc, (ConvergenceError, FloatingPointError)):
        return "NUMERIC", msg
    if isinstance(exc, (ValueError, KeyError)):
        return "INVALID", msg
    return "INTERNAL", f"{type(exc).__name__}: {msg}"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise CliError("USAGE", "a subcommand is required (fit, generate, threshold, heatmap, bench)")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except SystemExit:
        raise
    except BaseException as exc:  # noqa: BLE001 - every failure becomes one line
        if isinstance(exc, KeyboardInterrupt):
            print("SIPERR INTERRUPTED: interrupted", file=sys.stderr)
            return 130
        code, msg = _classify(exc)
        log.debug("failure", exc_info=True)
        print(f"SIPERR {code}: {msg}", file=sys.stderr)
        return EXIT[code]


if __name__ == "__main__":
    sys.exit(main())
