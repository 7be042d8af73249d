"""Command-line entry point: ``chmvgl {generate,solve,bic,benchmark}``.

Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .admm import DivergenceError, SolverConfig, solve
from .bic import DEFAULT_GRID_AXES, default_grid, grid_search
from .experiment import (HARNESS_SOLVER, SUITES, BenchmarkSettings, loglog_slope,
                         normalize_signals, run_scalability, run_sweep, suite_points)
from .graph import ValidationError
from .io import ConfigError
from .metrics import f1_edges, hub_recovery_f1, rank_cohubs, select_hubs
from .synth import FilterSpec, GraphModelSpec, make_dataset

log = logging.getLogger("chmvgl")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

GENERATOR_DEFAULTS = dict(graph="ER", n=32, er_p=0.1, ba_m=2, rgg_sigma=0.25, rgg_cutoff=0.6,
                          K=2, n_hubs=1, d=500, filter="heat", filter_alpha=None,
                          gaussian_mode="literal", eta_percent=10.0, bernoulli_p=0.3,
                          sharing="shared", seed=0)


class NumericalFailure(RuntimeError):
    pass


def _check_keys(section: dict, allowed, name: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})",
                              f"{name}.{key}")


def _section(config: dict, name: str) -> dict:
    sec = config.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError("must be a mapping", name)
    return sec


def _build(factory, kwargs: dict, name: str):
    try:
        return factory(**kwargs)
    except (ValidationError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc), name) from exc


def generator_settings(config: dict, seed: int | None) -> dict:
    sec = _section(config, "generator")
    _check_keys(sec, GENERATOR_DEFAULTS, "generator")
    g = {**GENERATOR_DEFAULTS, **sec}
    if seed is not None:
        g["seed"] = seed
    for key in ("n", "K", "n_hubs", "ba_m", "seed"):
        if not isinstance(g[key], (int, np.integer)) or isinstance(g[key], bool):
            raise ConfigError("must be an integer", f"generator.{key}")
    return g


def solver_settings(config: dict) -> tuple[SolverConfig, bool]:
    """Solver config (harness defaults) and whether to normalize the signals."""
    sec = dict(_section(config, "solver"))
    normalize = bool(sec.pop("normalize", True))
    fields = {f.name for f in dataclasses.fields(SolverConfig)}
    _check_keys(sec, fields, "solver")
    return _build(lambda **kw: dataclasses.replace(HARNESS_SOLVER, **kw), sec, "solver"), normalize


def grid_settings(config: dict) -> list[tuple[float, ...]]:
    sec = config.get("grid")
    if sec is None:
        return default_grid()
    if isinstance(sec, list):
        try:
            pts = [tuple(float(x) for x in p) for p in sec]
        except (TypeError, ValueError) as exc:
            raise ConfigError("points must be numeric 4-tuples", "grid") from exc
        if not pts or any(len(p) != 4 for p in pts):
            raise ConfigError("need a nonempty list of 4-tuples", "grid")
        return pts
    if isinstance(sec, dict):
        _check_keys(sec, {"gamma1", "gamma2", "gamma3", "gamma4"}, "grid")
        axes = []
        for i, key in enumerate(("gamma1", "gamma2", "gamma3", "gamma4")):
            vals = sec.get(key, DEFAULT_GRID_AXES[i])
            vals = [vals] if np.isscalar(vals) else list(vals)
            if not vals:
                raise ConfigError("axis must not be empty", f"grid.{key}")
            axes.append([float(v) for v in vals])
        return default_grid(axes)
    raise ConfigError("must be a list of points or a mapping of axes", "grid")


def benchmark_settings(config: dict, seed: int | None) -> BenchmarkSettings:
    sec = dict(_section(config, "benchmark"))
    fields = {f.name for f in dataclasses.fields(BenchmarkSettings)} - {"solver", "grid"}
    _check_keys(sec, fields, "benchmark")
    for key, val in list(sec.items()):
        if isinstance(val, list):
            sec[key] = tuple(val)
    solver, _ = solver_settings(config)
    grid = grid_settings(config) if "grid" in config else None
    if seed is not None:
        sec["seed"] = seed
    return _build(lambda **kw: BenchmarkSettings(solver=solver, grid=grid, **kw), sec, "benchmark")


# ---------------------------------------------------------------- generate

def cmd_generate(config: dict, out: Path, seed: int | None = None) -> int:
    g = generator_settings(config, seed)
    graph = _build(GraphModelSpec, dict(kind=g["graph"], n=g["n"], er_p=g["er_p"], ba_m=g["ba_m"],
                                        rgg_sigma=g["rgg_sigma"], rgg_cutoff=g["rgg_cutoff"]),
                   "generator")
    filt = _build(FilterSpec, dict(kind=g["filter"], alpha=g["filter_alpha"],
                                   gaussian_mode=g["gaussian_mode"]), "generator.filter")
    ds = _build(lambda **kw: make_dataset(**kw),
                dict(graph=graph, K=g["K"], n_hubs=g["n_hubs"], d=g["d"], filt=filt,
                     eta_percent=g["eta_percent"], seed=g["seed"], bernoulli_p=g["bernoulli_p"],
                     sharing=g["sharing"]), "generator")
    out = io.ensure_dir(out)
    views, truths = [], []
    for k, (X, L) in enumerate(zip(ds.signals.views, ds.laplacians)):
        views.append(f"signals_{k}.csv")
        truths.append(f"truth_edges_{k}.csv")
        io.write_matrix_csv(out / views[-1], X)
        io.write_edge_list(out / truths[-1], L)
    io.write_json(out / "hubs.json", {"hubs": list(ds.hubs)})
    manifest = io.DatasetManifest(n=ds.signals.n, K=ds.signals.K, views=views, d=ds.signals.d,
                                  truth_edges=truths, hubs=list(ds.hubs), generator=g,
                                  seed=g["seed"])
    manifest.save(out)
    log.info("wrote %d views to %s", ds.signals.K, out)
    return EXIT_OK


# ---------------------------------------------------------------- solve

def _load_manifest(path):
    if path is None:
        raise ConfigError("a dataset manifest is required (--manifest or data.manifest)",
                          "data.manifest")
    return io.DatasetManifest.load(path)


def _manifest_path(args, config):
    if args.manifest is not None:
        return args.manifest
    data = _section(config, "data")
    return data.get("manifest")


def _hub_selection(config: dict, manifest) -> dict:
    sec = dict(_section(config, "hubs"))
    _check_keys(sec, {"top_k", "threshold"}, "hubs")
    if not sec:
        if manifest.hubs is not None:
            return {"top_k": len(manifest.hubs)}
        return {"threshold": 0.5}
    return sec


def cmd_solve(config: dict, manifest_path, out: Path, seed: int | None = None) -> int:
    timings = {}
    t0 = time.perf_counter()
    manifest = _load_manifest(manifest_path)
    signals = manifest.load_signals()
    truth = manifest.load_truth()
    solver, normalize = solver_settings(config)
    select = _hub_selection(config, manifest)
    timings["load"] = time.perf_counter() - t0
    out = io.ensure_dir(out)
    work = normalize_signals(signals) if normalize else signals

    t0 = time.perf_counter()
    diverged = False
    try:
        report = solve(work, solver)
    except DivergenceError as exc:
        report, diverged = exc.report, True
    timings["solve"] = time.perf_counter() - t0

    result = dict(config=config, seed=seed if seed is not None else manifest.seed,
                  solver=dataclasses.asdict(solver), normalize=normalize,
                  iterations=report.iterations, converged=report.converged, diverged=diverged,
                  residual_history=report.residual_history, per_view_f1=None,
                  hub_ranking=None, selected_hubs=None, hub_recovery_f1=None, timings=timings)
    if not diverged:
        dec = report.decomposition
        ranking = rank_cohubs(dec.hub_matrix)
        try:
            chosen = select_hubs(ranking, **select)
        except ValidationError as exc:
            raise ConfigError(str(exc), "hubs") from exc
        result.update(hub_ranking=dict(node_order=ranking.node_order,
                                       sorted_norms=ranking.sorted_norms),
                      selected_hubs=sorted(chosen))
        if truth is not None:
            result["per_view_f1"] = [f1_edges(Lt, Le) for Lt, Le in zip(truth, dec.laplacians)]
        if manifest.hubs is not None:
            result["hub_recovery_f1"] = hub_recovery_f1(manifest.hubs, chosen)
        t0 = time.perf_counter()
        for k, L in enumerate(dec.laplacians):
            io.write_edge_list(out / f"learned_edges_{k}.csv", L)
        norms = np.linalg.norm(dec.hub_matrix, axis=0)
        with open(out / "hub_norms.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "norm", "normalized_norm"])
            for node, rel in zip(ranking.node_order, ranking.sorted_norms):
                w.writerow([int(node), repr(float(norms[node])), repr(float(rel))])
        timings["write"] = time.perf_counter() - t0
    io.write_json(out / "results.json", result)
    if diverged:
        log.error("solver diverged at iteration %d; partial results in %s",
                  report.state.iteration, out)
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------- bic

def cmd_bic(config: dict, manifest_path, out: Path, threads: int = 1) -> int:
    manifest = _load_manifest(manifest_path)
    signals = manifest.load_signals()
    solver, normalize = solver_settings(config)
    grid = grid_settings(config)
    sec = dict(_section(config, "bic"))
    _check_keys(sec, {"sign_corrected", "column_tol"}, "bic")
    out = io.ensure_dir(out)
    work = normalize_signals(signals) if normalize else signals
    best, table = grid_search(work, grid, solver, n_jobs=threads, **sec)
    with open(out / "bic_table.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gamma1", "gamma2", "gamma3", "gamma4", "score", "df", "df_star",
                    "converged", "best"])
        for row in table:
            w.writerow([*(repr(g) for g in row.gamma), repr(float(row.score)), row.df,
                        row.df_star, int(row.converged), int(row is best)])
    io.write_json(out / "best.json", dict(gamma=best.gamma, score=best.score, df=best.df,
                                          df_star=best.df_star, loglik_term=best.loglik_term,
                                          converged=best.converged, config=config,
                                          solver=dataclasses.asdict(solver)))
    if all(r.failed for r in table):
        log.error("every grid point diverged")
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------- benchmark

def _write_rows(path: Path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns])


def cmd_benchmark(config: dict, suite: str | None, out: Path, seed: int | None = None) -> int:
    if suite is None:
        suite = config.get("suite")
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; valid suites: {', '.join(SUITES)}", "suite")
    cfg = {k: v for k, v in config.items() if k != "suite"}
    settings = benchmark_settings(cfg, seed)
    out = io.ensure_dir(out)
    t0 = time.perf_counter()
    if suite == "scalability":
        res = run_scalability(settings)
        cols = ["method", "mean_runtime", "std_runtime", "unit"]
        _write_rows(out / "scalability_n.csv", res["n"], ["n"] + cols)
        _write_rows(out / "scalability_K.csv", res["K"], ["K"] + cols)
        slopes = {}
        for axis in ("n", "K"):
            ch = [r for r in res[axis] if r["method"] == "CH-MVGL"]
            slopes[axis] = loglog_slope([r[axis] for r in ch], [r["mean_runtime"] for r in ch])
        io.write_json(out / "scalability.json", dict(rows=res, slopes=slopes,
                                                     settings=settings.to_dict(),
                                                     runtime=time.perf_counter() - t0))
        return EXIT_OK
    axis, points = suite_points(suite, settings)

    def progress(label, elapsed, rows):
        log.info("%s: %s (%.1fs)", label,
                 ", ".join(f"{r['method']} {r['mean_f1']:.3f}" for r in rows), elapsed)

    rows = run_sweep(points, settings, progress)
    label_cols = list(points[0].label)
    _write_rows(out / f"{suite}.csv", rows, label_cols + ["method", "mean_f1", "std_f1"])
    io.write_json(out / f"{suite}.json", dict(rows=rows, axis=axis, settings=settings.to_dict(),
                                              runtime=time.perf_counter() - t0))
    if all(np.isnan(r["mean_f1"]) for r in rows if r["method"] == "CH-MVGL"):
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------- entry

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chmvgl", description="Co-hub multiview graph learning")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("generate", "synthesize a multiview dataset"),
                        ("solve", "learn Laplacians and co-hubs for a dataset"),
                        ("bic", "BIC grid search over the four gammas"),
                        ("benchmark", "run a benchmark sweep")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", type=Path, help="YAML or JSON config file")
        sp.add_argument("--out", type=Path, required=True, help="output directory")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--threads", type=int, default=1, help="worker count / BLAS threads")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name in ("solve", "bic"):
            sp.add_argument("--manifest", type=Path, help="dataset manifest.json or its directory")
        if name == "benchmark":
            sp.add_argument("--suite", help=f"one of {', '.join(SUITES)}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = io.load_config(args.config) if args.config is not None else {}
        if args.threads < 1:
            raise ConfigError("must be >= 1", "threads")
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=args.threads):
            if args.command == "generate":
                return cmd_generate(config, args.out, args.seed)
            if args.command == "solve":
                return cmd_solve(config, _manifest_path(args, config), args.out, args.seed)
            if args.command == "bic":
                return cmd_bic(config, _manifest_path(args, config), args.out, args.threads)
            return cmd_benchmark(config, args.suite, args.out, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DivergenceError, FloatingPointError, np.linalg.LinAlgError, NumericalFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
