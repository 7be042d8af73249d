"""Acceptance suite: the eleven release criteria at their stated tolerances.

Each criterion is one test that records a PASS/FAIL line; the lines are
printed in the terminal summary (see ``conftest.py``). Criterion 11 runs the
worked-example catalog, one test per example, and its summary line counts
them. Expensive workloads (benchmark sweeps, BIC grids) are computed once
and shared between the criteria and examples that use them.

Run alone with ``pytest tests/test_acceptance.py -v``; expect roughly 15
minutes on one CPU.
"""
import csv
import functools
import json
import tempfile
import time
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import chmvgl
from chmvgl import cli
from chmvgl.admm import SolverConfig, alpha_upper_bound, prox_l21, solve, z_root
from chmvgl.bic import HUB_COLUMN_TOL, grid_search
from chmvgl.experiment import (HARNESS_SOLVER, calibrate, count_inversions, derive_seed,
                               fit_single_view, normalize_signals)
from chmvgl.metrics import f1_edges
from chmvgl.synth import FilterSpec, GraphModelSpec, make_dataset, signals_from_laplacians

import test_admm
import test_bic
import test_graph
import test_io_cli
import test_metrics
import test_single_view
import test_synth
from helpers import BLOCK_VARIABLES, block_stationarity, random_data_terms, random_state
from oracles import golden_section_min, z_scalar_objective

OUTCOMES: dict[str, tuple[bool, str]] = {}
EXAMPLES: dict[str, bool] = {}
ER16 = GraphModelSpec("ER", 16, er_p=0.2)


def record(cid: str, ok: bool, detail: str) -> None:
    OUTCOMES[cid] = (bool(ok), detail)
    assert ok, f"criterion {cid}: {detail}"


def summary_lines() -> list[str]:
    lines = []
    for cid in sorted(OUTCOMES, key=int):
        ok, detail = OUTCOMES[cid]
        lines.append(f"criterion {cid:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
    if EXAMPLES:
        failed = sorted(k for k, ok in EXAMPLES.items() if not ok)
        ok = not failed
        detail = f"{len(EXAMPLES) - len(failed)}/{len(EXAMPLES)} worked examples pass"
        if failed:
            detail += "; failing: " + ", ".join(failed)
        lines.append(f"criterion 11: {'PASS' if ok else 'FAIL'}  {detail}")
    return lines


@functools.cache
def _workdir() -> Path:
    return Path(tempfile.mkdtemp(prefix="chmvgl-acceptance-"))


# ---------------------------------------------------------------- shared workloads

@functools.cache
def benchmark_suite(suite: str) -> dict:
    """Run a benchmark suite through the CLI with its default settings."""
    out = _workdir() / suite
    t0 = time.perf_counter()
    code = cli.main(["benchmark", "--suite", suite, "--out", str(out)])
    elapsed = time.perf_counter() - t0
    name = "scalability.json" if suite == "scalability" else f"{suite}.json"
    data = json.loads((out / name).read_text())
    data.update(exit_code=code, elapsed=elapsed, out=str(out))
    return data


def _curve(rows, axis, method):
    pts = sorted((r[axis], r["mean_f1"]) for r in rows if r["method"] == method)
    return [p[0] for p in pts], [p[1] for p in pts]


@functools.cache
def planted_hub_bic() -> list[tuple]:
    """BIC selection on five planted two-hub instances (n=16, K=2) over the 81-point grid."""
    out = []
    for s in range(5):
        ds = make_dataset(ER16, 2, 2, 500, FilterSpec("heat"), seed=derive_seed(9, s))
        best, _ = grid_search(normalize_signals(ds.signals), None, HARNESS_SOLVER)
        out.append((best.gamma, best.df_star))
    return out


@functools.cache
def same_graph_comparison() -> list[tuple[list[float], list[float]]]:
    """Two views of one ER(16, 0.2) graph: per-view F1 of the joint model and of SV."""
    out = []
    for s in range(10):
        L = make_dataset(ER16, 1, 0, 10, seed=derive_seed(276, s)).laplacians[0]
        truth = [L, L]
        sig = normalize_signals(signals_from_laplacians(truth, 500, FilterSpec("heat"), 10.0,
                                                        derive_seed(276, s, 1)))
        sel = calibrate(sig)
        dec = solve(sig, HARNESS_SOLVER.with_gammas(sel.gamma)).decomposition
        joint = [f1_edges(a, b) for a, b in zip(truth, dec.laplacians)]
        single = [f1_edges(a, b) for a, b in zip(truth, fit_single_view(sig, sel.alpha_sv))]
        out.append((joint, single))
    return out


@functools.cache
def smoke_bic_table() -> list[dict]:
    out = _workdir() / "smoke-bic"
    code = cli.main(["bic", "--manifest", str(chmvgl.smoke_manifest_path()), "--out", str(out)])
    assert code == 0
    with open(out / "bic_table.csv") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- criteria 1-10

def test_criterion_01_block_updates_minimize_subproblems():
    cfg = SolverConfig(gamma1=0.3, gamma2=0.7, gamma3=0.5, gamma4=0.2)
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        state = random_state(6, 2, seed)
        B = random_data_terms(6, 2, seed)
        for block in BLOCK_VARIABLES:
            for g, norm in block_stationarity(state, B, cfg, block).values():
                worst = max(worst, g / (1 + norm))
    elapsed = time.perf_counter() - t0
    record("1", worst <= 1e-6 and elapsed < 30,
           f"worst gradient/(1+|var|) {worst:.2e} (limit 1e-6), {elapsed:.1f}s (limit 30s)")


def test_criterion_02_z_root_matches_golden_section():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        U = rng.uniform(-10, 10)
        alpha = 10 ** rng.uniform(-2, 2)
        gamma2 = 10 ** rng.uniform(-3, 1)
        # the derivative 2 alpha z - U - gamma2/z is positive past this point
        hi = (abs(U) + 1) / alpha + np.sqrt(gamma2 / alpha) + 1
        ref = golden_section_min(z_scalar_objective(U, alpha, gamma2), 1e-12, hi)
        worst = max(worst, abs(float(z_root(np.array([U]), alpha, gamma2)[0]) - float(ref)))
    record("2", worst <= 1e-8, f"max |closed form - golden section| {worst:.2e} (limit 1e-8)")


def test_criterion_03_prox_satisfies_subgradient_condition():
    rng = np.random.default_rng(3)
    worst = 0.0
    zero_cols = 0
    for _ in range(50):
        M = rng.standard_normal((rng.integers(2, 9), rng.integers(2, 9))) * rng.uniform(0.1, 3)
        tau = rng.uniform(0, 4)
        G = prox_l21(M, tau)
        for j in range(M.shape[1]):
            g, m = G[:, j], M[:, j]
            gn = np.linalg.norm(g)
            if gn > 0:
                # M - G must equal tau * G / ||G||
                err = np.linalg.norm(m - g - tau * g / gn)
            else:
                zero_cols += 1
                err = max(0.0, np.linalg.norm(m) - tau)
            worst = max(worst, err)
    record("3", worst <= 1e-8,
           f"max per-column violation {worst:.2e} (limit 1e-8), {zero_cols} zeroed columns")


def test_criterion_04_feasibility_and_ergodic_rate():
    cfg = SolverConfig()
    reached, ratios = 0, []
    for seed in range(10):
        ds = make_dataset(ER16, 3, 2, 500, FilterSpec("heat"), seed=derive_seed(4, seed))
        sig = normalize_signals(ds.signals)
        rep = solve(sig, replace(cfg, tol=1e-4, max_iter=500))
        reached += rep.converged and rep.max_residual <= 1e-4
        a = alpha_upper_bound(cfg.gamma1, cfg.gamma2, cfg.gamma4, 3, 16)
        erg = solve(sig, replace(cfg, alpha0=a, alpha_schedule="fixed", tol=1e-300,
                                 max_iter=500), track_ergodic=True).ergodic_history
        ratios.append(500 * erg[499] / (10 * erg[9]))
    ok = reached >= 9 and max(ratios) <= 10
    record("4", ok, f"{reached}/10 seeds feasible at 1e-4 within 500 iterations (need 9); "
                    f"t*ergodic ratio t=500 vs t=10 max {max(ratios):.2f} (limit 10)")


def test_criterion_05_joint_beats_single_as_views_grow():
    data = benchmark_suite("views")
    Ks, ch = _curve(data["rows"], "K", "CH-MVGL")
    _, sv = _curve(data["rows"], "K", "SV")
    i2, i6 = Ks.index(2), Ks.index(6)
    inv = count_inversions(ch, increasing=True)
    ok = (data["exit_code"] == 0 and ch[i6] >= sv[i6] and ch[i6] >= ch[i2] and inv <= 1
          and data["elapsed"] < 600)
    record("5", ok, f"CH-MVGL F1 by K {np.round(ch, 3).tolist()}, SV {np.round(sv, 3).tolist()}; "
                    f"K=6 CH {ch[i6]:.3f} vs SV {sv[i6]:.3f}, CH K=6 vs K=2 {ch[i2]:.3f}, "
                    f"{inv} inversions, {data['elapsed']:.0f}s (limit 600s)")


def test_criterion_06_f1_falls_with_noise():
    data = benchmark_suite("noise")
    _, ch = _curve(data["rows"], "eta", "CH-MVGL")
    inv = count_inversions(ch, increasing=False)
    record("6", data["exit_code"] == 0 and inv <= 1,
           f"CH-MVGL F1 over eta 10/30/50/70 {np.round(ch, 3).tolist()}, {inv} inversions")


def test_criterion_07_error_falls_with_samples():
    truth = make_dataset(ER16, 2, 2, 10, FilterSpec("heat"), seed=derive_seed(7)).laplacians
    means = []
    for d in (250, 500, 1000, 2000):
        errs = []
        for s in range(10):
            sig = signals_from_laplacians(truth, d, FilterSpec("heat"), 10.0, derive_seed(7, d, s))
            dec = solve(normalize_signals(sig), HARNESS_SOLVER).decomposition
            errs.append(np.mean([np.linalg.norm(a - b) for a, b in zip(dec.laplacians, truth)]))
        means.append(float(np.mean(errs)))
    inv = count_inversions(means, increasing=False)
    record("7", inv <= 1, f"mean |L_hat - L*|_F over d 250/500/1000/2000 "
                          f"{np.round(means, 4).tolist()}, {inv} inversions")


def test_criterion_08_restarts_agree_up_to_hub_shift():
    # default gammas learn a hub column at every node (checks the shift half);
    # gamma3 = 4 learns none (checks agreement everywhere)
    base = replace(HARNESS_SOLVER, tol=1e-6, dual_tol=1e-6, max_iter=20000)
    worst_out, worst_shift, all_conv, n_hubs = 0.0, 0.0, True, []
    for cfg in (base, replace(base, gamma3=4.0)):
        for s in range(3):
            ds = make_dataset(ER16, 3, 2, 500, FilterSpec("heat"), seed=derive_seed(8, s))
            sig = normalize_signals(ds.signals)
            a, b = solve(sig, cfg, init_seed=1), solve(sig, cfg, init_seed=2)
            all_conv &= a.converged and b.converged
            da, db = a.decomposition, b.decomposition
            hubs = np.flatnonzero((np.linalg.norm(da.hub_matrix, axis=0) > HUB_COLUMN_TOL)
                                  | (np.linalg.norm(db.hub_matrix, axis=0) > HUB_COLUMN_TOL))
            inside = np.zeros((16, 16), dtype=bool)
            inside[hubs, :] = inside[:, hubs] = True
            diffs = [Sa - Sb for Sa, Sb in zip(da.specifics, db.specifics)]
            n_hubs.append(len(hubs))
            for D in diffs:
                worst_out = max(worst_out, np.abs(D[~inside]).max(initial=0.0))
                worst_shift = max(worst_shift, np.abs((D - diffs[0])[inside]).max(initial=0.0))
    ok = all_conv and worst_out <= 1e-3 and worst_shift <= 1e-3
    record("8", ok, f"restarts converged to 1e-6: {all_conv}; learned hub columns {n_hubs}; "
                    f"outside-hub S difference {worst_out:.1e}, inside-hub shift spread "
                    f"{worst_shift:.1e} (limit 1e-3)")


def test_criterion_09_bic_recovers_hub_count():
    picks = planted_hub_bic()
    hits = sum(abs(df - 2) <= 2 for _, df in picks)
    record("9", hits >= 4, f"selected df* {[df for _, df in picks]} for h=2; "
                           f"{hits}/5 within +-2 (need 4); selected gammas {picks[0][0]}..")


def test_criterion_10_runtime_scaling():
    data = benchmark_suite("scalability")
    sn, sk = data["slopes"]["n"], data["slopes"]["K"]
    ms = {ax: [round(1e3 * r["mean_runtime"], 2) for r in data["rows"][ax]
               if r["method"] == "CH-MVGL"] for ax in ("n", "K")}
    record("10", data["exit_code"] == 0 and 2.0 <= sn <= 3.5 and 0.7 <= sk <= 1.3,
           f"log-log slope vs n {sn:.2f} (need [2.0, 3.5]), vs K {sk:.2f} (need [0.7, 1.3]); "
           f"ms/iteration n=32/64/128 {ms['n']}, K=2/4/6 {ms['K']}")


# ---------------------------------------------------------------- criterion 11: worked examples

def _with_tmp(fn):
    def run():
        with tempfile.TemporaryDirectory() as d:
            fn(Path(d))
    return run


def _ex_same_graph_views():
    res = same_graph_comparison()
    for k in range(2):
        joint = np.mean([j[k] for j, _ in res])
        single = np.mean([s[k] for _, s in res])
        assert joint >= single, (k, joint, single)


def _ex_planted_bic_df():
    picks = planted_hub_bic()
    assert all(abs(df - 2) <= 2 for _, df in picks), picks


def _ex_smoke_bic_converged():
    rows = smoke_bic_table()
    assert len(rows) == 81
    assert sum(r["converged"] == "1" for r in rows) >= 0.95 * 81


def _ex_scalability_slope():
    assert 2.0 <= benchmark_suite("scalability")["slopes"]["n"] <= 3.5


def _ex_noise_trend_every_method():
    rows = benchmark_suite("noise")["rows"]
    for m in ("CH-MVGL", "SV"):
        assert count_inversions(_curve(rows, "eta", m)[1], increasing=False) <= 1, m


def _ex_views_csv_schema():
    out = Path(benchmark_suite("views")["out"])
    with open(out / "views.csv") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    assert reader.fieldnames == ["K", "method", "mean_f1", "std_f1"]
    for method in ("CH-MVGL", "SV"):
        assert sorted(int(r["K"]) for r in rows if r["method"] == method) == [2, 3, 4, 5, 6]


def _ex_first_block_random_gradient():
    test_admm.test_block_updates_are_subproblem_minimizers("first")


def _ex_third_block_random_gradient():
    test_admm.test_block_updates_are_subproblem_minimizers("third")


def _ex_fourth_block_random_gradient():
    test_admm.test_block_updates_are_subproblem_minimizers("fourth")


def _ex_planted_n8_feasible():
    test_admm.test_small_planted_instance_reaches_tolerance()


CATALOG = {
    # Laplacian construction and basis
    "laplacian/single-edge": test_graph.test_single_edge_laplacian,
    "laplacian/empty-graph": test_graph.test_empty_graph_laplacian,
    "laplacian/weighted-edge": test_graph.test_weighted_edge_laplacian,
    "basis/two-nodes": test_graph.test_two_node_basis,
    "basis/orthonormal": test_graph.test_basis_is_orthonormal_complement,
    "basis/zero-row-sums": test_graph.test_conjugation_gives_zero_row_sums,
    "variation/constant": lambda: test_graph.test_total_variation_on_path([1, 1], 0.0),
    "variation/unit": lambda: test_graph.test_total_variation_on_path([1, 0], 1.0),
    "variation/alternating": lambda: test_graph.test_total_variation_on_path([1, -1], 4.0),
    "postprocess/fixed-point": test_graph.test_postprocess_keeps_valid_laplacian,
    "postprocess/clip": test_graph.test_postprocess_clips_positive_offdiagonal,
    "postprocess/tiny-asymmetry": test_graph.test_postprocess_removes_tiny_asymmetry,
    # synthetic data
    "graphs/er-degenerate-p": test_synth.test_er_extreme_probabilities,
    "graphs/er-edge-count": test_synth.test_er_edge_count_matches_binomial,
    "cohubs/none": test_synth.test_no_hubs_leaves_graphs_alone,
    "cohubs/shared-rows": test_synth.test_shared_hub_rows_identical_across_views,
    "cohubs/hub-degree": test_synth.test_hub_degree_matches_binomial,
    "filter/zero-laplacian": test_synth.test_filters_at_zero_laplacian_are_identity,
    "filter/gaussian-path": test_synth.test_gaussian_filter_is_pseudoinverse,
    "noise/edge-cases": test_synth.test_noise_edge_cases,
    # solver
    "data-terms/zero": test_admm.test_zero_signals_give_zero_data_terms,
    "data-terms/constant": test_admm.test_constant_signals_are_annihilated,
    "data-terms/triple-product": test_admm.test_data_terms_match_triple_product,
    "first-block/zero": test_admm.test_first_block_zero_fixed_point,
    "first-block/identity-data": test_admm.test_first_block_single_view_identity_data,
    "first-block/random-gradient": _ex_first_block_random_gradient,
    "z-root/unit": test_admm.test_z_root_unit_case,
    "z-root/barrier-free": test_admm.test_z_root_barrier_free_limit,
    "z-root/golden-section": test_admm.test_z_block_matches_golden_section,
    "third-block/zero": test_admm.test_third_block_zero_inputs,
    "third-block/huge-gamma1": test_admm.test_psi_vanishes_for_huge_gamma1,
    "third-block/random-gradient": _ex_third_block_random_gradient,
    "prox/zero": test_admm.test_prox_zero_matrix,
    "prox/known-column": test_admm.test_prox_known_column,
    "prox/small-columns": test_admm.test_prox_small_columns_vanish,
    "fourth-block/zero": test_admm.test_fourth_block_zero_hub_inputs,
    "fourth-block/zero-threshold": test_admm.test_fourth_block_zero_threshold_copies,
    "fourth-block/random-gradient": _ex_fourth_block_random_gradient,
    "duals/feasible": test_admm.test_feasible_state_has_zero_residuals_and_unchanged_duals,
    "duals/fixed-schedule": test_admm.test_fixed_schedule_keeps_alpha,
    "duals/single-violation": test_admm.test_single_violation_moves_only_its_multiplier,
    "residuals/feasible": test_admm.test_zero_state_is_feasible,
    "residuals/identity": test_admm.test_identity_violation_residual,
    "residuals/count": test_admm.test_residual_count,
    "solve/same-graph-views": _ex_same_graph_views,
    "solve/huge-gamma3": test_admm.test_huge_hub_penalty_removes_hubs,
    "solve/planted-n8": _ex_planted_n8_feasible,
    "alpha-bound/known": test_admm.test_alpha_bound_known_case,
    "alpha-bound/limits": test_admm.test_alpha_bound_limits,
    "single-view/constant": test_single_view.test_constant_signals_give_uniform_weights,
    "single-view/trace": test_single_view.test_trace_constraint_and_validity,
    "single-view/convex-oracle": lambda: test_single_view.test_matches_convex_solver(0),
    # model selection
    "pseudo-det/known": test_bic.test_log_pseudo_det_known_values,
    "nll/null-space": test_bic.test_view_nll_null_space_signals,
    "nll/plug-in": test_bic.test_view_nll_plug_in,
    "hub-df/counts": test_bic.test_hub_df_counts,
    "bic/df-13": test_bic.test_df_with_one_hub,
    "bic/log-factor": test_bic.test_log_sample_factor,
    "grid/one-point": test_bic.test_single_point_grid,
    "grid/duplicates": test_bic.test_duplicate_points_score_identically,
    "grid/planted-df": _ex_planted_bic_df,
    # metrics
    "f1/identical-disjoint": test_metrics.test_f1_identical_and_disjoint,
    "f1/two-thirds": test_metrics.test_f1_two_thirds,
    "ranking/zero": test_metrics.test_ranking_zero_matrix,
    "ranking/normalize": test_metrics.test_ranking_normalization,
    "ranking/equivariant": test_metrics.test_ranking_equivariant_and_scale_invariant,
    "hubs/selection": test_metrics.test_hub_selection_modes,
    "hub-f1/cases": test_metrics.test_hub_recovery_f1,
    "entropy/cases": test_metrics.test_entropy_cases,
    # command line
    "generate/file-count": _with_tmp(test_io_cli.test_generate_file_count),
    "generate/byte-identical": _with_tmp(test_io_cli.test_generate_is_byte_identical_on_rerun),
    "generate/shape": _with_tmp(test_io_cli.test_generate_shape),
    "solve/no-truth": _with_tmp(test_io_cli.test_solve_without_truth_gives_null_f1),
    "solve/smoke": _with_tmp(test_io_cli.test_solve_smoke_dataset),
    "bic/one-point": _with_tmp(test_io_cli.test_bic_single_point),
    "bic/rerun": _with_tmp(test_io_cli.test_bic_rerun_is_identical),
    "bic/smoke-grid": _ex_smoke_bic_converged,
    "benchmark/views-schema": _ex_views_csv_schema,
    "benchmark/scalability-slope": _ex_scalability_slope,
    "benchmark/noise-trend": _ex_noise_trend_every_method,
}


@pytest.mark.parametrize("name", list(CATALOG))
def test_criterion_11_worked_example(name):
    EXAMPLES[name] = False
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        CATALOG[name]()
    EXAMPLES[name] = True


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
