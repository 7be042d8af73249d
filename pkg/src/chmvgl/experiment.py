"""Experiment harness: signal normalization, method runners and benchmark sweeps.

Both methods see the same per-view normalized signals. Hyperparameters are
chosen by BIC on a calibration realization drawn from a seed stream disjoint
from the evaluation realizations, then reused for every realization of that
sweep point (``scope="instance"`` selects per realization instead).
"""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .admm import DivergenceError, SolverConfig, solve
from .bic import HUB_COLUMN_TOL, default_grid, grid_search, view_nll
from .graph import MultiviewSignals, ValidationError
from .metrics import f1_edges, hub_recovery_f1, rank_cohubs, select_hubs
from .single_view import solve_single_view
from .synth import FilterSpec, GraphModelSpec, make_dataset

log = logging.getLogger(__name__)

METHODS = ("CH-MVGL", "SV")
SUITES = ("views", "hubs", "noise", "models", "scalability")
SV_ALPHA_GRID = (1e-3, 1e-2, 1e-1, 1.0, 10.0)

# accurate solves for model selection: residual balancing plus a dual-residual stop
HARNESS_SOLVER = SolverConfig(alpha_schedule="adaptive", dual_tol=1e-4, max_iter=2000)


def derive_seed(*keys: int) -> int:
    """Deterministic 32-bit seed from a tuple of integer keys."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def normalize_signals(signals: MultiviewSignals) -> MultiviewSignals:
    """Rescale each view so the mean per-sample squared node distance is 1.

    The distance ``||x_i - x_j||^2 / d`` averaged over node pairs sets the
    scale of the smoothness term, so after this step one gamma grid fits
    every view regardless of signal amplitude.
    """
    out = []
    for X in signals.views:
        G = X @ X.T / X.shape[1]
        g = np.diag(G)
        D = g[:, None] + g[None, :] - 2 * G
        mean = D[np.triu_indices(len(g), k=1)].mean() if len(g) > 1 else 0.0
        out.append(X / np.sqrt(mean) if mean > 0 else X.copy())
    return MultiviewSignals(out)


def select_alpha_sv(signals: MultiviewSignals, alphas=SV_ALPHA_GRID, sign_corrected: bool = False
                    ) -> tuple[float, list[float]]:
    """BIC analogue for the single-view baseline.

    Every alpha has the same edge count ``n(n-1)/2`` per view, so BIC reduces
    to the summed per-view likelihood term.
    """
    scores = []
    for a in alphas:
        total = 0.0
        for X in signals.views:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                L = solve_single_view(X / np.sqrt(X.shape[1]), a).laplacian
            total += view_nll(L, X, sign_corrected)
        scores.append(total)
    best = min(range(len(alphas)), key=lambda i: (scores[i], alphas[i]))
    return float(alphas[best]), scores


def fit_single_view(signals: MultiviewSignals, alpha_sv: float) -> list[np.ndarray]:
    out = []
    for X in signals.views:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            out.append(solve_single_view(X / np.sqrt(X.shape[1]), alpha_sv).laplacian)
    return out


@dataclass
class Selection:
    gamma: tuple[float, float, float, float]
    alpha_sv: float
    bic_table: list = field(default_factory=list, repr=False)


def calibrate(signals: MultiviewSignals, config: SolverConfig = HARNESS_SOLVER, grid=None,
              sv_alphas=SV_ALPHA_GRID, sign_corrected: bool = False) -> Selection:
    best, table = grid_search(signals, grid, config, sign_corrected=sign_corrected)
    alpha_sv, _ = select_alpha_sv(signals, sv_alphas, sign_corrected)
    return Selection(best.gamma, alpha_sv, table)


def evaluate_instance(dataset, selection: Selection, config: SolverConfig = HARNESS_SOLVER,
                      methods=METHODS) -> dict:
    """Per-method mean edge-F1 (and hub recovery for the joint model) on one dataset."""
    signals = normalize_signals(dataset.signals)
    out = {}
    if "CH-MVGL" in methods:
        t0 = time.perf_counter()
        try:
            report = solve(signals, config.with_gammas(selection.gamma))
        except DivergenceError as exc:
            log.warning("CH-MVGL diverged: %s", exc)
            out["CH-MVGL"] = dict(f1=np.nan, diverged=True)
        else:
            dec = report.decomposition
            f1 = [f1_edges(Lt, Le) for Lt, Le in zip(dataset.laplacians, dec.laplacians)]
            chosen = select_hubs(rank_cohubs(dec.hub_matrix), top_k=len(dataset.hubs))
            out["CH-MVGL"] = dict(f1=float(np.mean(f1)), per_view_f1=f1,
                                  hub_f1=hub_recovery_f1(dataset.hubs, chosen),
                                  iterations=report.iterations, converged=report.converged,
                                  runtime=time.perf_counter() - t0)
    if "SV" in methods:
        t0 = time.perf_counter()
        Ls = fit_single_view(signals, selection.alpha_sv)
        f1 = [f1_edges(Lt, Le) for Lt, Le in zip(dataset.laplacians, Ls)]
        out["SV"] = dict(f1=float(np.mean(f1)), per_view_f1=f1, runtime=time.perf_counter() - t0)
    return out


@dataclass
class SweepPoint:
    """One setting of a benchmark sweep: label values plus dataset arguments."""

    label: dict
    graph: GraphModelSpec
    K: int
    n_hubs: int
    d: int
    filt: FilterSpec = FilterSpec()
    eta_percent: float = 10.0
    bernoulli_p: float = 0.3
    sharing: str = "shared"
    # realizations sharing this key reuse the same draws (e.g. nested view counts)
    stream: int = 0

    def dataset(self, seed: int):
        return make_dataset(self.graph, self.K, self.n_hubs, self.d, self.filt, self.eta_percent,
                            seed, self.bernoulli_p, self.sharing)


@dataclass
class BenchmarkSettings:
    n: int = 32
    K: int = 6
    views: tuple[int, ...] = (2, 3, 4, 5, 6)
    hubs: tuple[int, ...] = (1, 2, 3, 4)
    noise: tuple[float, ...] = (10.0, 30.0, 50.0, 70.0)
    graphs: tuple[str, ...] = ("ER", "BA", "RGG")
    filters: tuple[str, ...] = ("gaussian", "heat", "tikhonov")
    n_hubs: int = 1
    d: int = 500
    eta_percent: float = 10.0
    er_p: float = 0.1
    bernoulli_p: float = 0.3
    realizations: int = 10
    seed: int = 0
    scope: str = "sweep"
    sign_corrected: bool = False
    grid: list | None = None
    sv_alphas: tuple[float, ...] = SV_ALPHA_GRID
    solver: SolverConfig = HARNESS_SOLVER
    # scalability
    scal_n: tuple[int, ...] = (32, 64, 128)
    scal_K: tuple[int, ...] = (2, 4, 6)
    scal_K_for_n: int = 6
    scal_n_for_K: int = 128
    scal_d: int = 700
    scal_iters: int = 50
    scal_repeats: int = 5

    def __post_init__(self):
        if self.scope not in ("sweep", "instance"):
            raise ValidationError("scope must be 'sweep' or 'instance'")
        if self.realizations < 1:
            raise ValidationError("realizations must be >= 1")

    def graph(self, kind: str = "ER", n: int | None = None) -> GraphModelSpec:
        return GraphModelSpec(kind, self.n if n is None else n, er_p=self.er_p)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["solver"] = asdict(self.solver)
        return out


def suite_points(suite: str, s: BenchmarkSettings) -> tuple[str, list[SweepPoint]]:
    """Sweep axis name and its points for ``suite``."""
    heat = FilterSpec("heat")
    common = dict(d=s.d, bernoulli_p=s.bernoulli_p)
    if suite == "views":
        return "K", [SweepPoint({"K": K}, s.graph(), K, s.n_hubs, filt=heat,
                                eta_percent=s.eta_percent, **common) for K in s.views]
    if suite == "hubs":
        return "h", [SweepPoint({"h": h}, s.graph(), s.K, h, filt=heat,
                                eta_percent=s.eta_percent, **common) for h in s.hubs]
    if suite == "noise":
        return "eta", [SweepPoint({"eta": eta}, s.graph(), s.K, s.n_hubs, filt=heat,
                                  eta_percent=eta, **common) for eta in s.noise]
    if suite == "models":
        pts = []
        for i, g in enumerate(s.graphs):
            for j, f in enumerate(s.filters):
                pts.append(SweepPoint({"graph": g, "filter": f}, s.graph(g), s.K, s.n_hubs,
                                      filt=FilterSpec(f), eta_percent=s.eta_percent,
                                      stream=10 * i + j, **common))
        return "model", pts
    raise ValidationError(f"unknown suite {suite!r}; valid: {', '.join(SUITES)}")


def run_sweep(points: list[SweepPoint], s: BenchmarkSettings, progress=None) -> list[dict]:
    """Evaluate every point; return one row per (point, method) plus raw per-realization data."""
    rows = []
    for p_idx, point in enumerate(points):
        t0 = time.perf_counter()
        selection = None
        if s.scope == "sweep":
            calib = point.dataset(derive_seed(s.seed, 2, point.stream))
            selection = calibrate(normalize_signals(calib.signals), s.solver, s.grid,
                                  s.sv_alphas, s.sign_corrected)
        scores = {m: [] for m in METHODS}
        extras = {m: [] for m in METHODS}
        for r in range(s.realizations):
            ds = point.dataset(derive_seed(s.seed, 1, point.stream, r))
            sel = selection
            if sel is None:
                sel = calibrate(normalize_signals(ds.signals), s.solver, s.grid, s.sv_alphas,
                                s.sign_corrected)
            res = evaluate_instance(ds, sel, s.solver)
            for m in METHODS:
                scores[m].append(res[m]["f1"])
                extras[m].append(res[m])
        for m in METHODS:
            vals = np.array(scores[m], dtype=float)
            rows.append(dict(point.label, method=m, mean_f1=float(np.nanmean(vals)),
                             std_f1=float(np.nanstd(vals)),
                             f1=vals.tolist(),
                             gamma=None if selection is None or m != "CH-MVGL" else selection.gamma,
                             alpha_sv=None if selection is None or m != "SV" else selection.alpha_sv,
                             hub_f1=[e.get("hub_f1") for e in extras[m]] if m == "CH-MVGL" else None))
        if progress is not None:
            progress(point.label, time.perf_counter() - t0, rows[-2:])
    return rows


def _per_iteration_time(signals, config, iters, repeats) -> tuple[float, float]:
    cfg = replace(config, max_iter=iters, tol=1e-300, dual_tol=None)
    times = []
    for _ in range(repeats):
        rep = solve(signals, cfg)
        times.append(rep.runtime / max(rep.iterations, 1))
    # the minimum is the least noise-contaminated estimate of the cost
    return float(np.min(times)), float(np.std(times))


def _sv_time(signals, alpha_sv) -> float:
    t0 = time.perf_counter()
    fit_single_view(signals, alpha_sv)
    return time.perf_counter() - t0


def run_scalability(s: BenchmarkSettings) -> dict[str, list[dict]]:
    """Per-iteration CH-MVGL runtime and total SV runtime versus n and versus K.

    Hub count follows ``h = max(1, round(0.02 n))``. BLAS is limited to one
    thread so the measured exponent reflects the algorithm, not the thread pool.
    """
    from threadpoolctl import threadpool_limits

    cfg = replace(s.solver, alpha_schedule="fixed")
    out = {"n": [], "K": []}
    with threadpool_limits(limits=1):
        for axis, values in (("n", s.scal_n), ("K", s.scal_K)):
            for v in values:
                n = v if axis == "n" else s.scal_n_for_K
                K = s.scal_K_for_n if axis == "n" else v
                ds = make_dataset(s.graph("ER", n), K, max(1, round(0.02 * n)), s.scal_d,
                                  FilterSpec("heat"), s.eta_percent,
                                  derive_seed(s.seed, 3, n, K), s.bernoulli_p)
                sig = normalize_signals(ds.signals)
                mean, std = _per_iteration_time(sig, cfg, s.scal_iters, s.scal_repeats)
                out[axis].append(dict({axis: v}, method="CH-MVGL", mean_runtime=mean,
                                      std_runtime=std, unit="s/iteration"))
                sv = [_sv_time(sig, 0.01) for _ in range(s.scal_repeats)]
                out[axis].append(dict({axis: v}, method="SV", mean_runtime=float(np.median(sv)),
                                      std_runtime=float(np.std(sv)), unit="s/solve"))
    return out


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def count_inversions(values, increasing: bool = True) -> int:
    """Adjacent steps that go against the expected direction."""
    v = np.asarray(values, dtype=float)
    steps = np.diff(v)
    return int(np.sum(steps < 0) if increasing else np.sum(steps > 0))
