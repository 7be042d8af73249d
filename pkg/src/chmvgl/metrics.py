"""Edge recovery, co-hub ranking and hub replicability metrics."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .graph import DEFAULT_EDGE_THRESHOLD, ValidationError

log = logging.getLogger(__name__)


def edge_set(L: np.ndarray, edge_threshold: float = DEFAULT_EDGE_THRESHOLD) -> np.ndarray:
    """Boolean upper-triangle mask of edges ``|L_ij| > thr * max |offdiag|``."""
    L = np.asarray(L, dtype=float)
    iu = np.triu_indices(L.shape[0], k=1)
    w = np.abs(L[iu])
    top = w.max(initial=0.0)
    if top == 0:
        return np.zeros_like(w, dtype=bool)
    return w > edge_threshold * top


def _set_f1(tp: int, n_pred: int, n_true: int) -> float:
    if n_pred == 0 and n_true == 0:
        return 1.0
    if n_pred == 0 or n_true == 0:
        return 0.0
    return 2.0 * tp / (n_pred + n_true)


def f1_edges(L_true: np.ndarray, L_est: np.ndarray,
             edge_threshold: float = DEFAULT_EDGE_THRESHOLD) -> float:
    """F1 of the estimated edge set against the true one.

    Two empty edge sets score 1; exactly one empty set scores 0.
    """
    L_true = np.asarray(L_true)
    L_est = np.asarray(L_est)
    if L_true.shape != L_est.shape:
        raise ValidationError(f"size mismatch: {L_true.shape} vs {L_est.shape}")
    t = edge_set(L_true, edge_threshold)
    e = edge_set(L_est, edge_threshold)
    return _set_f1(int(np.sum(t & e)), int(e.sum()), int(t.sum()))


@dataclass
class HubRanking:
    sorted_norms: np.ndarray
    node_order: np.ndarray


def rank_cohubs(V: np.ndarray) -> HubRanking:
    """Column norms of ``V`` over their maximum, in descending order (ties by index)."""
    norms = np.linalg.norm(np.asarray(V, dtype=float), axis=0)
    top = norms.max(initial=0.0)
    rel = norms / top if top > 0 else np.zeros_like(norms)
    order = np.lexsort((np.arange(len(rel)), -rel))
    return HubRanking(rel[order], order)


def select_hubs(ranking: HubRanking, top_k: int | None = None,
                threshold: float | None = None) -> set[int]:
    """Pick hubs either as the ``top_k`` ranked nodes or by a normalized-norm cutoff."""
    if (top_k is None) == (threshold is None):
        raise ValidationError("give exactly one of top_k or threshold")
    n = len(ranking.node_order)
    if top_k is not None:
        if not 0 <= top_k <= n:
            raise ValidationError(f"top_k={top_k} outside [0, {n}]")
        return {int(i) for i in ranking.node_order[:top_k]}
    return {int(i) for i, v in zip(ranking.node_order, ranking.sorted_norms) if v >= threshold}


def hub_recovery_f1(true_hubs, selected) -> float:
    t, s = set(true_hubs), set(selected)
    return _set_f1(len(t & s), len(s), len(t))


def selection_entropy(frequency) -> float:
    """Shannon entropy (nats) of normalized selection counts; ``0 log 0 = 0``."""
    f = np.asarray(frequency, dtype=float)
    total = f.sum()
    if total <= 0:
        return 0.0
    p = f[f > 0] / total
    return float(-np.sum(p * np.log(p)))


@dataclass
class ReplicabilityReport:
    frequency: np.ndarray
    entropy: float
    runs: int
    subset_size: int
    failed_runs: int = 0


def replicability(signals, subset_size: int, runs: int, hubs_per_run: int, config,
                  seed: int = 0, solver=None) -> ReplicabilityReport:
    """Hub-selection stability under resampling views with replacement.

    Each run draws ``subset_size`` views, solves, and counts the top
    ``hubs_per_run`` co-hubs. Runs whose solve diverges are skipped and counted.
    """
    from .admm import DivergenceError, solve
    from .synth import make_rng

    solver = solve if solver is None else solver
    if subset_size > signals.K:
        raise ValidationError(f"subset_size={subset_size} exceeds K={signals.K}")
    freq = np.zeros(signals.n)
    failed = 0
    for r in range(runs):
        idx = make_rng(seed, r).choice(signals.K, size=subset_size, replace=True)
        try:
            report = solver(signals.subset(idx.tolist()), config)
        except DivergenceError as exc:
            log.warning("replicability run %d diverged: %s", r, exc)
            failed += 1
            continue
        chosen = select_hubs(rank_cohubs(report.decomposition.hub_matrix), top_k=hubs_per_run)
        freq[list(chosen)] += 1
    return ReplicabilityReport(freq, selection_entropy(freq), runs, subset_size, failed)
