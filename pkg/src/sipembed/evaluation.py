"""Node-classification evaluation of streamed embeddings.

A one-vs-rest logistic classifier is trained on the initial nodes, and the
arriving nodes are scored under three settings:

``sip_keep_model``
    projected embeddings, classifier from the initial fit;
``retrain_embed_keep_model``
    embedding refitted on the grown graph, classifier kept;
``retrain_both``
    embedding refitted and classifier retrained (reference).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_expit

from .drift import restart_threshold
from .graph import LabelTable, StreamScenario
from .projection import fit, generate
from .targets import TargetSpec

__all__ = [
    "MODES",
    "TrainConfig",
    "OvRClassifier",
    "EvalReport",
    "ModeRun",
    "train_ovr",
    "predict_multilabel",
    "f1_scores",
    "run_modes",
    "aggregate",
    "reports_to_csv",
    "summary_to_csv",
    "summary_to_json",
]

log = logging.getLogger(__name__)

MODES = ("sip_keep_model", "retrain_embed_keep_model", "retrain_both")


@dataclass(frozen=True)
class TrainConfig:
    l2: float = 1.0
    max_iter: int = 1000
    tol: float = 1e-6
    seed: int = 42


@dataclass
class OvRClassifier:
    """``weights`` is ``(d+1) x L`` with the bias in the last row."""

    weights: np.ndarray
    config: TrainConfig
    pinned: tuple[int, ...] = ()

    @property
    def d(self) -> int:
        return self.weights.shape[0] - 1

    @property
    def label_count(self) -> int:
        return self.weights.shape[1]

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.d:
            raise ValueError(f"embedding width {X.shape[1]} != classifier width {self.d}")
        return X @ self.weights[:-1] + self.weights[-1]


def _fit_binary(Xb: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    # L2 on the weights only; loss = 0.5*l2*|w|^2 + sum logloss
    s = 2.0 * y - 1.0
    d = Xb.shape[1] - 1

    def fun(w):
        z = s * (Xb @ w)
        loss = -log_expit(z).sum() + 0.5 * cfg.l2 * (w[:d] @ w[:d])
        g = Xb.T @ (-s * expit(-z))
        g[:d] += cfg.l2 * w[:d]
        return loss, g

    w0 = np.zeros(d + 1)
    res = minimize(fun, w0, jac=True, method="L-BFGS-B",
                   options={"maxiter": cfg.max_iter, "gtol": cfg.tol})
    return res.x


def train_ovr(X: np.ndarray, Y: LabelTable, config: TrainConfig | None = None,
              nodes=None) -> OvRClassifier:
    """Train one binary logistic model per label.

    ``nodes`` selects the rows of ``X`` (and the matching node ids of ``Y``);
    by default all labeled rows are used.  A label with no positive example
    gets a model that always scores negative.
    """
    cfg = config or TrainConfig()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    nodes = np.asarray(Y.labeled() if nodes is None else nodes, dtype=np.int64)
    nodes = nodes[nodes < X.shape[0]]
    if len(nodes) == 0:
        raise ValueError("no labeled training rows")
    Xb = np.hstack([X[nodes], np.ones((len(nodes), 1))])
    Ind = Y.indicator(nodes)
    W = np.zeros((X.shape[1] + 1, Y.label_count))
    pinned = []
    for j in range(Y.label_count):
        y = Ind[:, j]
        if not y.any():
            pinned.append(j)
            W[-1, j] = -1e3
            continue
        if y.all():
            W[-1, j] = 1e3
            continue
        W[:, j] = _fit_binary(Xb, y.astype(np.float64), cfg)
    if pinned:
        warnings.warn(f"labels without positive examples pinned negative: {pinned}", RuntimeWarning,
                      stacklevel=2)
    if not np.all(np.isfinite(W)):
        raise FloatingPointError("non-finite classifier weights")
    return OvRClassifier(W, cfg, tuple(pinned))


def predict_multilabel(clf: OvRClassifier, X: np.ndarray, k_per_node, nodes=None) -> LabelTable:
    """Top-``k`` labels per row; ties go to the lower label id."""
    S = clf.scores(X)
    k = np.broadcast_to(np.asarray(k_per_node, dtype=np.int64), (S.shape[0],))
    L = clf.label_count
    if np.any(k < 1):
        raise ValueError("k_per_node must be >= 1")
    if np.any(k > L):
        raise ValueError(f"k_per_node exceeds label count {L}")
    nodes = np.arange(S.shape[0]) if nodes is None else np.asarray(nodes, dtype=np.int64)
    # stable sort on -score keeps lower ids first among equal scores
    order = np.argsort(-S, axis=1, kind="stable")
    out = {int(v): frozenset(int(c) for c in order[i, :k[i]]) for i, v in enumerate(nodes)}
    return LabelTable(out, L)


def f1_scores(pred: LabelTable, truth: LabelTable) -> tuple[float, float]:
    """Micro and macro F1 over the nodes of ``truth``."""
    nodes = sorted(truth.assignments)
    if set(nodes) != set(pred.assignments):
        if not set(nodes) & set(pred.assignments):
            raise ValueError("prediction and truth cover disjoint node sets")
        raise ValueError("prediction and truth cover different node sets")
    L = max(pred.label_count, truth.label_count)
    P = np.zeros((len(nodes), L), dtype=bool)
    T = np.zeros((len(nodes), L), dtype=bool)
    for i, v in enumerate(nodes):
        P[i, list(pred.assignments[v])] = True
        T[i, list(truth.assignments[v])] = True
    tp = (P & T).sum(axis=0)
    fp = (P & ~T).sum(axis=0)
    fn = (~P & T).sum(axis=0)
    den = 2 * tp.sum() + fp.sum() + fn.sum()
    micro = 2 * tp.sum() / den if den else 0.0
    per = np.divide(2 * tp, 2 * tp + fp + fn, out=np.zeros(L), where=(2 * tp + fp + fn) > 0)
    return float(micro), float(per.mean()) if L else 0.0


@dataclass
class EvalReport:
    mode: str
    micro_f1: float
    macro_f1: float
    embed_time_s: float
    n: int
    m: int
    method: str
    skipped: bool = False
    embedding_hash: str = ""

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.skipped and not (0.0 <= self.micro_f1 <= 1.0 and 0.0 <= self.macro_f1 <= 1.0):
            raise ValueError("F1 out of range")


@dataclass
class ModeRun:
    n: int
    m0: int
    method: str
    reports: list[EvalReport] = field(default_factory=list)
    skipped: bool = False

    def ratio(self, metric: str = "micro_f1") -> float:
        r = {rep.mode: getattr(rep, metric) for rep in self.reports}
        if self.skipped or not r.get("retrain_both"):
            return math.nan
        return r["sip_keep_model"] / r["retrain_both"]

    def to_json_dict(self) -> dict:
        return {
            "n": self.n, "m0": self.m0, "method": self.method, "skipped": self.skipped,
            "ratio_micro": _num(self.ratio("micro_f1")), "ratio_macro": _num(self.ratio("macro_f1")),
            "reports": [{k: _num(v) for k, v in asdict(r).items()} for r in self.reports],
        }


def _num(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else None
    return v


def _hash(E: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(E, dtype="<f8").tobytes()).hexdigest()


def _score(clf, E_new, labels: LabelTable, new_ids):
    have = np.array([bool(labels.assignments.get(int(v))) for v in new_ids], dtype=bool)
    ids = np.asarray(new_ids)[have]
    if len(ids) == 0:
        return math.nan, math.nan
    truth = LabelTable({int(v): labels.assignments[int(v)] for v in ids}, labels.label_count)
    k = [len(truth.assignments[int(v)]) for v in ids]
    pred = predict_multilabel(clf, E_new[have], k, nodes=ids)
    return f1_scores(pred, truth)


def run_modes(scenario: StreamScenario, spec: TargetSpec, n: int | None = None,
              m0: int | None = None, m_max: int | None = None,
              config: TrainConfig | None = None) -> ModeRun:
    """Evaluate the three modes on the ``m0`` nodes after the initial ``n``.

    ``m0`` defaults to the restart threshold of the scenario.  With
    ``m0 == 0`` the run is returned with ``skipped`` set.
    """
    if scenario.labels is None:
        raise ValueError("scenario has no labels")
    n = scenario.n if n is None else n
    cfg = config or TrainConfig(seed=spec.seed)
    if m0 is None:
        m0 = restart_threshold(scenario, spec, n, m_max=m_max, seed=spec.seed)
    run = ModeRun(n, m0, spec.method)
    if m0 == 0:
        run.skipped = True
        run.reports = [EvalReport(mode, math.nan, math.nan, math.nan, n, 0, spec.method, skipped=True)
                       for mode in MODES]
        return run
    labels = scenario.labels
    g0 = scenario.initial
    g1 = scenario.graph_after(m0)
    new_ids = np.arange(n, n + m0)

    base = fit(g0, spec)
    clf0 = train_ovr(base.embedding.data, labels, cfg, nodes=_labeled_below(labels, n))

    t = time.perf_counter()
    sip = generate(base.basis, spec, g1, n, m0)
    t_sip = time.perf_counter() - t

    t = time.perf_counter()
    refit = fit(g1, spec)
    t_refit = time.perf_counter() - t
    E1 = refit.embedding.data
    h = _hash(E1[n:])

    mi, ma = _score(clf0, sip.embedding.data, labels, new_ids)
    run.reports.append(EvalReport(MODES[0], mi, ma, t_sip, n, m0, spec.method,
                                  embedding_hash=_hash(sip.embedding.data)))
    mi, ma = _score(clf0, E1[n:], labels, new_ids)
    run.reports.append(EvalReport(MODES[1], mi, ma, t_refit, n, m0, spec.method, embedding_hash=h))
    clf1 = train_ovr(E1, labels, cfg, nodes=_labeled_below(labels, n))
    mi, ma = _score(clf1, E1[n:], labels, new_ids)
    run.reports.append(EvalReport(MODES[2], mi, ma, t_refit, n, m0, spec.method, embedding_hash=h))
    log.info("n=%d m0=%d %s ratio=%.4f", n, m0, spec.method, run.ratio())
    return run


def _labeled_below(labels: LabelTable, n: int) -> np.ndarray:
    return labels.labeled(range(n))


def aggregate(runs: list[ModeRun]) -> dict:
    """Mean, std and standard error per mode over non-skipped runs, plus ratios of means."""
    live = [r for r in runs if not r.skipped]
    out = {"runs": len(runs), "used": len(live), "modes": {}}
    for mode in MODES:
        reps = [rep for r in live for rep in r.reports if rep.mode == mode and not math.isnan(rep.micro_f1)]
        row = {}
        for key in ("micro_f1", "macro_f1", "embed_time_s"):
            v = np.array([getattr(rep, key) for rep in reps], dtype=np.float64)
            k = len(v)
            row[key] = {
                "mean": float(v.mean()) if k else math.nan,
                "std": float(v.std(ddof=1)) if k > 1 else math.nan,
                "stderr": float(v.std(ddof=1) / math.sqrt(k)) if k > 1 else math.nan,
            }
        out["modes"][mode] = row
    ref = out["modes"]["retrain_both"]
    sip = out["modes"]["sip_keep_model"]
    for key in ("micro_f1", "macro_f1", "embed_time_s"):
        a, b = sip[key]["mean"], ref[key]["mean"]
        out[f"ratio_{key}"] = a / b if b and math.isfinite(a) and math.isfinite(b) else math.nan
    return out


def reports_to_csv(runs: list[ModeRun], timing: bool = False) -> str:
    """One row per (run, mode).  Wall times are left out unless ``timing`` is set,
    so that the default output is reproducible byte for byte."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["method", "n", "m0", "mode", "skipped", "micro_f1", "macro_f1"]
    w.writerow(head + (["embed_time_s"] if timing else []))
    for r in runs:
        for rep in r.reports:
            row = [r.method, r.n, r.m0, rep.mode, int(rep.skipped), repr(rep.micro_f1), repr(rep.macro_f1)]
            w.writerow(row + ([repr(rep.embed_time_s)] if timing else []))
    return buf.getvalue()


def summary_to_csv(summary: dict, method: str, timing: bool = False) -> str:
    """Table-style rows: one per mode with mean/std/stderr and the ratio against ``retrain_both``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "mode", "micro_mean", "micro_std", "micro_stderr", "macro_mean", "macro_std",
                "macro_stderr", "ratio_micro", "ratio_macro"] + (["time_mean", "ratio_time"] if timing else []))
    ref = summary["modes"]["retrain_both"]
    for mode, row in summary["modes"].items():
        rm = row["micro_f1"]["mean"] / ref["micro_f1"]["mean"] if ref["micro_f1"]["mean"] else math.nan
        rM = row["macro_f1"]["mean"] / ref["macro_f1"]["mean"] if ref["macro_f1"]["mean"] else math.nan
        cells = [method, mode, *(repr(row[k][s]) for k in ("micro_f1", "macro_f1") for s in ("mean", "std", "stderr")),
                 repr(rm), repr(rM)]
        if timing:
            t, t_ref = row["embed_time_s"]["mean"], ref["embed_time_s"]["mean"]
            cells += [repr(t), repr(t / t_ref if t_ref else math.nan)]
        w.writerow(cells)
    return buf.getvalue()


def summary_to_json(summary: dict) -> str:
    def conv(o):
        if isinstance(o, dict):
            return {k: conv(v) for k, v in o.items()}
        return _num(o)
    return json.dumps(conv(summary), sort_keys=True, indent=1)
