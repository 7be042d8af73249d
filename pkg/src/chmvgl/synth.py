"""Synthetic multiview graphs with planted co-hubs and smooth graph signals.

Randomness goes through Philox generators keyed by ``(seed, stream)`` so a
sweep can hand realization ``r`` the stream ``(base_seed, r)`` and get the
same data regardless of execution order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import MultiviewSignals, ValidationError, laplacian_from_adjacency

GRAPH_KINDS = ("ER", "BA", "RGG")
FILTER_KINDS = ("gaussian", "heat", "tikhonov")


def make_rng(seed, *stream: int) -> np.random.Generator:
    """Counter-based generator for ``(seed, *stream)``; Generators pass through."""
    if isinstance(seed, np.random.Generator):
        return seed
    key = [int(seed)] + [int(s) for s in stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


@dataclass(frozen=True)
class GraphModelSpec:
    kind: str = "ER"
    n: int = 32
    er_p: float = 0.1
    ba_m: int = 2
    rgg_sigma: float = 0.25
    rgg_cutoff: float = 0.6

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        if kind not in GRAPH_KINDS:
            raise ValidationError(f"unknown graph model {self.kind!r}; expected one of {GRAPH_KINDS}")
        if self.n < 2:
            raise ValidationError("n must be >= 2")
        # the open interval is the modelling range; 0 and 1 are allowed as degenerate cases
        if not 0.0 <= self.er_p <= 1.0:
            raise ValidationError("er_p must lie in [0, 1]")
        if kind == "BA" and not 1 <= self.ba_m < self.n:
            raise ValidationError("ba_m must satisfy 1 <= ba_m < n")
        if not self.rgg_sigma > 0:
            raise ValidationError("rgg_sigma must be positive")
        if not 0.0 <= self.rgg_cutoff <= 1.0:
            raise ValidationError("rgg_cutoff must lie in [0, 1]")


@dataclass(frozen=True)
class FilterSpec:
    kind: str = "heat"
    alpha: float | None = None
    gaussian_mode: str = "literal"

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind not in FILTER_KINDS:
            raise ValidationError(f"unknown filter {self.kind!r}; expected one of {FILTER_KINDS}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", {"heat": 5.0, "tikhonov": 20.0}.get(kind, 0.0))
        if kind in ("heat", "tikhonov") and not self.alpha > 0:
            raise ValidationError("filter alpha must be positive")
        if self.gaussian_mode not in ("literal", "sqrt"):
            raise ValidationError("gaussian_mode must be 'literal' or 'sqrt'")


@dataclass(frozen=True)
class CoHubPlan:
    hub_indices: tuple[int, ...] = ()
    bernoulli_p: float = 0.3
    sharing: str = "shared"

    def __post_init__(self):
        object.__setattr__(self, "hub_indices", tuple(int(i) for i in self.hub_indices))
        if len(set(self.hub_indices)) != len(self.hub_indices):
            raise ValidationError("hub indices must be distinct")
        if not 0.0 < self.bernoulli_p < 1.0:
            raise ValidationError("bernoulli_p must lie in (0, 1)")
        if self.sharing not in ("shared", "independent"):
            raise ValidationError("sharing must be 'shared' or 'independent'")


def _symmetric_bernoulli(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    upper = np.triu(rng.random((n, n)) < p, k=1)
    return (upper | upper.T).astype(float)


def _barabasi_albert(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    A = np.zeros((n, n))
    seed_size = max(m, 2)
    A[:seed_size, :seed_size] = 1.0
    np.fill_diagonal(A, 0.0)
    deg = A.sum(axis=1)
    for new in range(seed_size, n):
        p = deg[:new] / deg[:new].sum()
        targets = rng.choice(new, size=min(m, new), replace=False, p=p)
        A[new, targets] = A[targets, new] = 1.0
        deg[targets] += 1
        deg[new] = len(targets)
    return A


def _geometric(n: int, sigma: float, cutoff: float, rng: np.random.Generator) -> np.ndarray:
    pts = rng.random((n, 2))
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
    A = (np.exp(-d2 / sigma ** 2) >= cutoff).astype(float)
    np.fill_diagonal(A, 0.0)
    return A


def generate_graph(spec: GraphModelSpec, seed) -> np.ndarray:
    """Binary symmetric adjacency with zero diagonal drawn from ``spec``."""
    rng = make_rng(seed)
    if spec.kind == "ER":
        return _symmetric_bernoulli(spec.n, spec.er_p, rng)
    if spec.kind == "BA":
        return _barabasi_albert(spec.n, spec.ba_m, rng)
    return _geometric(spec.n, spec.rgg_sigma, spec.rgg_cutoff, rng)


def _hub_row(n: int, hub: int, p: float, rng: np.random.Generator) -> np.ndarray:
    row = (rng.random(n) < p).astype(float)
    row[hub] = 0.0
    return row


def inject_cohubs(adjacencies: list[np.ndarray], plan: CoHubPlan, seed
                  ) -> tuple[list[np.ndarray], np.ndarray]:
    """Overwrite the rows/columns of the hub nodes with Bernoulli draws.

    Returns the modified adjacencies and the ground-truth hub pattern ``V``:
    column ``j`` of ``V`` is hub ``j``'s connection row (zero for non-hubs).
    In ``independent`` mode every view gets its own draw and ``V`` holds the
    per-view average of the hub columns.
    """
    rng = make_rng(seed)
    mats = [np.array(A, dtype=float) for A in adjacencies]
    if not mats:
        raise ValidationError("need at least one adjacency")
    n = mats[0].shape[0]
    if any(A.shape != (n, n) for A in mats):
        raise ValidationError("adjacencies must share one shape")
    for j in plan.hub_indices:
        if not 0 <= j < n:
            raise ValidationError(f"hub index {j} out of range for n={n}")
    hubs = list(plan.hub_indices)
    V = np.zeros((n, n))
    if not hubs:
        return mats, V
    if plan.sharing == "shared":
        rows = {j: _hub_row(n, j, plan.bernoulli_p, rng) for j in hubs}
        for A in mats:
            for j in hubs:
                A[j, :] = A[:, j] = rows[j]
    else:
        for A in mats:
            for j in hubs:
                A[j, :] = A[:, j] = _hub_row(n, j, plan.bernoulli_p, rng)
    for A in mats:
        np.fill_diagonal(A, 0.0)
    V[:, hubs] = np.mean([A[:, hubs] for A in mats], axis=0)
    return mats, V


def filter_response(eigenvalues: np.ndarray, spec: FilterSpec) -> np.ndarray:
    lam = np.asarray(eigenvalues, dtype=float)
    if spec.kind == "heat":
        return np.exp(-spec.alpha * lam)
    if spec.kind == "tikhonov":
        return 1.0 / (1.0 + spec.alpha * lam)
    cut = 1e-9 * max(float(lam.max(initial=0.0)), 0.0)
    inv = np.zeros_like(lam)
    keep = lam > cut
    inv[keep] = 1.0 / lam[keep]
    return np.sqrt(inv) if spec.gaussian_mode == "sqrt" else inv


def graph_filter_matrix(L: np.ndarray, spec: FilterSpec) -> np.ndarray:
    """``h(L)`` via the symmetric eigendecomposition of ``L``."""
    L = np.asarray(L, dtype=float)
    if not np.all(np.isfinite(L)):
        raise ValidationError("Laplacian has non-finite entries")
    lam, U = np.linalg.eigh((L + L.T) / 2)
    return (U * filter_response(lam, spec)) @ U.T


def apply_graph_filter(L: np.ndarray, spec: FilterSpec, X0: np.ndarray) -> np.ndarray:
    return graph_filter_matrix(L, spec) @ np.asarray(X0, dtype=float)


def add_noise(X: np.ndarray, eta_percent: float, seed) -> np.ndarray:
    """Add Gaussian noise whose Frobenius norm is ``eta_percent``% of ``||X||_F``."""
    if eta_percent < 0:
        raise ValidationError("eta_percent must be nonnegative")
    X = np.asarray(X, dtype=float)
    norm = np.linalg.norm(X)
    if eta_percent == 0 or norm == 0:
        return X.copy()
    E = make_rng(seed).standard_normal(X.shape)
    return X + (eta_percent / 100.0) * norm * E / np.linalg.norm(E)


def signals_from_laplacians(laplacians, d: int | list[int], filt: FilterSpec = FilterSpec(),
                            eta_percent: float = 10.0, seed=0) -> MultiviewSignals:
    """Filtered white-noise signals for fixed graphs, one view per Laplacian.

    View ``k`` draws its latent signals from stream ``1000+k`` and its noise
    from stream ``2000+k`` under ``seed``.
    """
    K = len(laplacians)
    ds = [int(d)] * K if np.isscalar(d) else [int(x) for x in d]
    if len(ds) != K:
        raise ValidationError("need one sample count per view")
    views = []
    for k, (L, dk) in enumerate(zip(laplacians, ds)):
        X0 = make_rng(seed, 1000 + k).standard_normal((L.shape[0], dk))
        X = apply_graph_filter(L, filt, X0)
        views.append(add_noise(X, eta_percent, make_rng(seed, 2000 + k)))
    return MultiviewSignals(views)


@dataclass
class SyntheticDataset:
    signals: MultiviewSignals
    adjacencies: list[np.ndarray]
    laplacians: list[np.ndarray]
    hubs: tuple[int, ...]
    hub_pattern: np.ndarray
    meta: dict = field(default_factory=dict)


def make_dataset(graph: GraphModelSpec, K: int, n_hubs: int, d: int | list[int],
                 filt: FilterSpec = FilterSpec(), eta_percent: float = 10.0, seed: int = 0,
                 bernoulli_p: float = 0.3, sharing: str = "shared") -> SyntheticDataset:
    """Full synthetic pipeline: graphs, co-hubs, filtered signals, noise.

    Stream layout under ``seed``: 0 hub choice, 1 hub rows, ``10+k`` view k's
    graph, ``1000+k`` its latent signals, ``2000+k`` its noise. View ``k``'s
    graph and signals do not depend on ``K``, so datasets with fewer views are
    prefixes of datasets with more.
    """
    n = graph.n
    if not 0 <= n_hubs <= n:
        raise ValidationError("n_hubs must lie in [0, n]")
    ds = [int(d)] * K if np.isscalar(d) else [int(x) for x in d]
    if len(ds) != K:
        raise ValidationError("need one sample count per view")
    hubs = tuple(sorted(make_rng(seed, 0).choice(n, size=n_hubs, replace=False).tolist()))
    base = [generate_graph(graph, make_rng(seed, 10 + k)) for k in range(K)]
    plan = CoHubPlan(hubs, bernoulli_p, sharing)
    if sharing == "shared":
        # one hub draw shared by every view, independent of K
        _, pattern = inject_cohubs([np.zeros((n, n))], plan, make_rng(seed, 1))
        adjs = []
        for A in base:
            A = A.copy()
            for j in hubs:
                A[j, :] = A[:, j] = pattern[:, j]
            np.fill_diagonal(A, 0.0)
            adjs.append(A)
    else:
        adjs, pattern = inject_cohubs(base, plan, make_rng(seed, 1))
    laps = [laplacian_from_adjacency(A) for A in adjs]
    signals = signals_from_laplacians(laps, ds, filt, eta_percent, seed)
    meta = dict(graph=graph.__dict__, K=K, n_hubs=n_hubs, d=ds, filter=filt.__dict__,
                eta_percent=eta_percent, seed=seed, bernoulli_p=bernoulli_p, sharing=sharing)
    return SyntheticDataset(signals, adjs, laps, hubs, pattern, meta)
