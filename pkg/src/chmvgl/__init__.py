"""Joint learning of multiview graph Laplacians sharing a co-hub structure."""
from importlib import resources as _resources

from .admm import (DivergenceError, SolveReport, SolverConfig, alpha_upper_bound, prox_l21,
                   solve, z_root)
from .bic import BicResult, bic_score, default_grid, grid_search, log_pseudo_det
from .graph import (CoHubDecomposition, MultiviewSignals, ValidationError,
                    build_projection_basis, laplacian_from_adjacency, postprocess_laplacian,
                    validate_laplacian)
from .metrics import f1_edges, hub_recovery_f1, rank_cohubs, replicability, select_hubs
from .single_view import solve_single_view
from .synth import FilterSpec, GraphModelSpec, make_dataset, signals_from_laplacians


def smoke_manifest_path():
    """Path of the bundled n=16, K=2 example dataset manifest."""
    return _resources.files(__name__) / "data" / "smoke" / "manifest.json"


__all__ = [
    "BicResult", "CoHubDecomposition", "DivergenceError", "FilterSpec", "GraphModelSpec",
    "MultiviewSignals", "SolveReport", "SolverConfig", "ValidationError", "alpha_upper_bound",
    "bic_score", "build_projection_basis", "default_grid", "f1_edges", "grid_search",
    "hub_recovery_f1", "laplacian_from_adjacency", "log_pseudo_det", "make_dataset",
    "postprocess_laplacian", "prox_l21", "rank_cohubs", "replicability", "select_hubs",
    "signals_from_laplacians", "smoke_manifest_path", "solve", "solve_single_view",
    "validate_laplacian", "z_root",
]
