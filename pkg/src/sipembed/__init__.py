"""Streaming node embeddings by projection onto a fixed factorization basis.

New nodes are embedded from their rows of the grown target matrix, without
refitting, for as long as a spectral-gap test says the embedding subspace
of the existing nodes has not drifted.
"""

__version__ = "0.1.0"

from .drift import DriftVerdict, PerturbationSplit, drift_check, p_bound, restart_threshold, scan_threshold, split_perturbation
from .graph import Graph, LabelTable, StreamBatch, StreamScenario, apply_batch, giant_component, load_edge_list, load_labels, make_scenario
from .projection import Embedding, MethodBasis, fit, generate, project_row
from .spectral import estimate_norm, lanczos_eig, prefix_correlation, spectral_norm, truncated_svd
from .targets import METHODS, TargetSpec

__all__ = [
    "__version__",
    "DriftVerdict", "PerturbationSplit", "drift_check", "p_bound", "restart_threshold", "scan_threshold",
    "split_perturbation",
    "Graph", "LabelTable", "StreamBatch", "StreamScenario", "apply_batch", "giant_component", "load_edge_list",
    "load_labels", "make_scenario",
    "Embedding", "MethodBasis", "fit", "generate", "project_row",
    "estimate_norm", "lanczos_eig", "prefix_correlation", "spectral_norm", "truncated_svd",
    "METHODS", "TargetSpec",
]
