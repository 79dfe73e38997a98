"""Acceptance gate: one test per numbered criterion, each printing a
[PASS|FAIL] line with the measured quantities before asserting.

The heavy optimization problems and the replicated consistency runs are
module-scoped fixtures so later criteria can audit the same fits instead
of recomputing them.
"""

import json
import math
import time

import numpy as np
import pytest

from mcontrast.contrasts import get_contrast
from mcontrast.estimation import (EmpiricalContrast, fit_mixture_em,
                                  fit_mixture_fw)
from mcontrast.harness import (ExperimentConfig, emit_plot, identity_suite,
                               run_consistency, run_separation_audit,
                               run_single_fit)
from mcontrast.models import (MixingMeasure, Rng, gaussian_location_family,
                              gaussian_mixture_family, population_contrast)
from mcontrast.separation import check_jensen_bound, check_log_lower_bound

LOG = get_contrast("log")
TRUTH = MixingMeasure(np.array([-1.0, 1.0]), np.array([0.3, 0.7]))
MASTER_SEED = 2026


def report_line(num: int, ok: bool, detail: str) -> str:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}"
    print(line)
    return line


def exhaustive_three_atom_max(ec: EmpiricalContrast, grid: np.ndarray,
                              step: float = 0.01) -> float:
    """Independent oracle: scan every weight vector on the 3-simplex."""
    k = ec.family.kernel.matrix(ec.sample, grid)
    kq = ec.family.kernel.matrix(ec.q_rule.nodes, grid)
    kappa = ec.q_rule.weights @ kq
    ticks = round(1.0 / step)
    combos = [(i * step, j * step, (ticks - i - j) * step)
              for i in range(ticks + 1) for j in range(ticks + 1 - i)]
    weights = np.array(combos)
    f = k @ weights.T
    with np.errstate(divide="ignore"):
        values = np.mean(np.log(f), axis=0) - weights @ kappa + weights.sum(axis=1)
    return float(np.max(values[np.isfinite(values)]))


def lindsay_values(ec: EmpiricalContrast, measure: MixingMeasure) -> np.ndarray:
    """D(z) over the support grid, recomputed from the defining formula."""
    k = ec.family.kernel.matrix(ec.sample, measure.atoms)
    f = k @ measure.weights
    return (k.T @ (1.0 / f)) / ec.n - 1.0


@pytest.fixture(scope="module")
def npmle_fits():
    family = gaussian_mixture_family()

    x50 = family.sample(TRUTH, 50, Rng(MASTER_SEED, 50, 0))
    ec50 = EmpiricalContrast(LOG, family, x50)
    grid3 = np.array([-1.0, 0.0, 1.0])
    start = time.perf_counter()
    em50 = fit_mixture_em(ec50, support_grid=grid3, tol=1e-8, max_iter=500_000)
    oracle50 = exhaustive_three_atom_max(ec50, grid3, step=0.01)
    small_seconds = time.perf_counter() - start

    x2000 = family.sample(TRUTH, 2000, Rng(MASTER_SEED, 2000, 0))
    ec2000 = EmpiricalContrast(LOG, family, x2000)
    grid201 = np.linspace(-3.0, 3.0, 201)
    start = time.perf_counter()
    em2000 = fit_mixture_em(ec2000, support_grid=grid201, tol=1e-6,
                            max_iter=3_000_000)
    em_seconds = time.perf_counter() - start
    start = time.perf_counter()
    fw2000 = fit_mixture_fw(ec2000, support_grid=grid201, tol=1e-6,
                            max_iter=2_000_000)
    fw_seconds = time.perf_counter() - start

    return {
        "ec50": ec50, "em50": em50, "oracle50": oracle50,
        "ec2000": ec2000, "em2000": em2000, "fw2000": fw2000,
        "small_seconds": small_seconds,
        "em_seconds": em_seconds, "fw_seconds": fw_seconds,
        "total_seconds": small_seconds + em_seconds + fw_seconds,
    }


@pytest.fixture(scope="module")
def consistency_runs(tmp_path_factory):
    location_config = ExperimentConfig(
        model_id="gaussian_location",
        n_schedule=(100, 1000, 10000),
        replicates=20,
        master_seed=MASTER_SEED,
        grid_resolution=601,
    )
    mixture_config = ExperimentConfig(
        model_id="gaussian_mixture",
        n_schedule=(100, 1000, 10000),
        replicates=20,
        master_seed=MASTER_SEED,
        support_size=201,
    )
    out_dir = tmp_path_factory.mktemp("consistency_first")
    start = time.perf_counter()
    location = run_consistency(location_config, out_dir=out_dir, threads=4)
    mixture = run_consistency(mixture_config, threads=4)
    seconds = time.perf_counter() - start
    return {
        "location_config": location_config,
        "location": location,
        "location_dir": out_dir,
        "mixture": mixture,
        "seconds": seconds,
    }


def test_criterion_1_closed_form_suite():
    start = time.perf_counter()
    results = identity_suite()
    seconds = time.perf_counter() - start
    worst = max(err for _, _, err in results)
    ok = all(passed for _, passed, _ in results) and seconds < 1.0
    line = report_line(1, ok,
                       f"{len(results)} closed-form identities, worst error "
                       f"{worst:.2e} (tol 1e-12), {seconds:.2f} s (< 1 s)")
    assert ok, line


def test_criterion_2_kl_identity():
    start = time.perf_counter()
    family = gaussian_location_family(0.0)
    star = np.array([0.0])
    base = population_contrast(LOG, family, star, star)
    worst = 0.0
    for t in (0.5, 1.0, 2.0):
        diff = population_contrast(LOG, family, np.array([t]), star) - base
        worst = max(worst, abs(diff - (-t * t / 2.0)))
    seconds = time.perf_counter() - start
    ok = worst <= 1e-4 and seconds < 5.0
    line = report_line(2, ok,
                       f"population difference vs -theta^2/2, worst error "
                       f"{worst:.2e} (tol 1e-4), {seconds:.2f} s (< 5 s)")
    assert ok, line


def test_criterion_3_npmle_correctness(npmle_fits):
    small_err = abs(npmle_fits["em50"].m_n_value - npmle_fits["oracle50"])
    agreement = abs(npmle_fits["em2000"].m_n_value
                    - npmle_fits["fw2000"].m_n_value)
    seconds = npmle_fits["total_seconds"]
    converged = npmle_fits["em2000"].converged and npmle_fits["fw2000"].converged
    ok = small_err <= 1e-4 and agreement <= 1e-6 and converged and seconds < 30.0
    line = report_line(
        3, ok,
        f"n=50 vs exhaustive search {small_err:.2e} (tol 1e-4); "
        f"EM/FW agreement at n=2000 {agreement:.2e} (tol 1e-6); "
        f"runtime {seconds:.0f} s (< 30 s required; EM "
        f"{npmle_fits['em_seconds']:.0f} s / "
        f"{npmle_fits['em2000'].iterations} sweeps, FW "
        f"{npmle_fits['fw_seconds']:.0f} s / "
        f"{npmle_fits['fw2000'].iterations} steps)")
    assert ok, line


def test_criterion_4_lindsay_criterion(npmle_fits):
    worst_max_d = -math.inf
    worst_active = 0.0
    checked = 0
    for key in ("em50", "em2000", "fw2000"):
        fit = npmle_fits[key]
        if not fit.converged:
            continue
        checked += 1
        ec = npmle_fits["ec50" if key == "em50" else "ec2000"]
        d = lindsay_values(ec, fit.theta_hat)
        worst_max_d = max(worst_max_d, float(d.max()))
        active = np.abs(d[fit.theta_hat.weights > 1e-8])
        if active.size:
            worst_active = max(worst_active, float(active.max()))
    ok = (checked == 3 and worst_max_d <= 1e-6 + 1e-12
          and worst_active <= 1e-5)
    line = report_line(
        4, ok,
        f"{checked}/3 converged fits; recomputed max D {worst_max_d:.2e} "
        f"(tol 1e-6), active-support |D| {worst_active:.2e} (tol 1e-5)")
    assert ok, line


def test_criterion_5_sub_probability_reduction(npmle_fits):
    start = time.perf_counter()
    ec = npmle_fits["ec2000"]
    theta_hat = npmle_fits["em2000"].theta_hat
    base = ec.evaluate(theta_hat)
    worst_alpha = 0.0
    for alpha in (0.3, 0.9):
        lhs = ec.evaluate(theta_hat.scaled(alpha))
        worst_alpha = max(worst_alpha, abs(lhs - (math.log(alpha) + base)))

    deficits = {"gaussian_mixture": npmle_fits["em2000"].theta_hat.mass - 1.0}
    for model_id in ("gaussian_location", "exponential_mixture"):
        config = ExperimentConfig(model_id=model_id, n_schedule=(400,),
                                  replicates=1, master_seed=MASTER_SEED,
                                  tol=1e-3)
        record = run_single_fit(config, 400, 0)
        assert not record.failed, record.error
        deficits[model_id] = record.mass_deficit
    worst_deficit = max(abs(v) for v in deficits.values())
    seconds = time.perf_counter() - start
    ok = worst_alpha <= 1e-10 and worst_deficit <= 1e-6 and seconds < 5.0
    line = report_line(
        5, ok,
        f"scaling identity error {worst_alpha:.2e} (tol 1e-10) for alpha in "
        f"{{0.3, 0.9}}; worst fitted mass deficit {worst_deficit:.2e} "
        f"(tol 1e-6) over {len(deficits)} registry models; "
        f"{seconds:.2f} s (< 5 s)")
    assert ok, line


def test_criterion_6_separation_audit():
    start = time.perf_counter()
    location_config = ExperimentConfig(model_id="gaussian_location",
                                       master_seed=MASTER_SEED)
    loc_report = run_separation_audit(location_config)
    loc_ci = [a.gap.ci_upper_99 for a in loc_report.audits]
    part_a = (len(loc_report.audits) == 16 and loc_report.verdict
              and all(ci < 0 for ci in loc_ci))

    mixture_config = ExperimentConfig(model_id="gaussian_mixture",
                                      master_seed=MASTER_SEED, lam=0.5)
    mix_report = run_separation_audit(mixture_config)
    mix_ci = [a.gap.ci_upper_99 for a in mix_report.audits]
    part_b = (len(mix_report.audits) == 12 and mix_report.verdict
              and all(ci < 0 for ci in mix_ci))

    identity_config = ExperimentConfig(model_id="gaussian_location",
                                       master_seed=MASTER_SEED,
                                       a_star_kind="identity",
                                       mc_budget=1000, sep_net_size=4,
                                       sep_grid_size=4)
    part_c = not run_separation_audit(identity_config).verdict

    family = gaussian_mixture_family()
    x = family.sample(TRUTH, 2000, Rng(MASTER_SEED, 61))
    sweep_thetas = [MixingMeasure.dirac(float(z))
                    for z in np.linspace(-2.5, 2.5, 7)] + [TRUTH.scaled(0.7)]
    worst_margin = math.inf
    for lam in (0.1, 0.5, 0.9):
        for theta in sweep_thetas:
            worst_margin = min(worst_margin,
                               check_log_lower_bound(family, theta, TRUTH,
                                                     lam, x))
    worst_slack = math.inf
    for z in np.linspace(-2.5, 2.5, 5):
        for mass in (0.25, 0.5, 0.75, 1.0):
            theta = MixingMeasure.dirac(float(z)).scaled(mass)
            report = check_jensen_bound(family, theta, TRUTH, 0.5)
            worst_slack = min(worst_slack, report.slack)
    part_d = worst_margin >= -1e-10 and worst_slack >= -1e-8

    seconds = time.perf_counter() - start
    ok = part_a and part_b and part_c and part_d and seconds < 120.0
    line = report_line(
        6, ok,
        f"(a) location constant attractor 16/16 ci<0 "
        f"(worst {max(loc_ci):.3g}): {part_a}; "
        f"(b) mixture contraction 12/12 ci<0 (worst {max(mix_ci):.3g}): "
        f"{part_b}; (c) identity attractor rejected: {part_c}; "
        f"(d) log floor margin {worst_margin:.2e} >= -1e-10 and Jensen "
        f"slack {worst_slack:.2e} >= -1e-8: {part_d}; "
        f"{seconds:.0f} s (< 120 s)")
    assert ok, line


def test_criterion_7_consistency_at_desk_scale(consistency_runs):
    loc = [a["median_distance"] for a in consistency_runs["location"].aggregates]
    loc_monotone = all(b < a for a, b in zip(loc, loc[1:]))
    loc_final = loc[-1] <= 0.05

    mix = {a["n"]: a["median_distance"]
           for a in consistency_runs["mixture"].aggregates}
    mix_ratio = mix[10000] < 0.5 * mix[100]
    mix_final = mix[10000] <= 0.15

    seconds = consistency_runs["seconds"]
    ok = (loc_monotone and loc_final and mix_ratio and mix_final
          and seconds < 600.0)
    line = report_line(
        7, ok,
        f"location medians {[round(v, 4) for v in loc]} strictly decreasing: "
        f"{loc_monotone}, final <= 0.05: {loc_final}; mixture W1 medians "
        f"n=100 {mix[100]:.4f} -> n=10000 {mix[10000]:.4f} "
        f"(ratio {mix[10000] / mix[100]:.2f} < 0.5: {mix_ratio}, "
        f"final <= 0.15: {mix_final}); {seconds:.0f} s (< 600 s)")
    assert ok, line


def test_criterion_8_determinism(consistency_runs, tmp_path):
    first_dir = consistency_runs["location_dir"]
    second_dir = tmp_path / "rerun"
    rerun = run_consistency(consistency_runs["location_config"],
                            out_dir=second_dir, threads=1)

    def mask_csv(path):
        lines = path.read_text().splitlines()
        head = lines[0].split(",")
        idx = head.index("wall_ms")
        body = []
        for line in lines[1:]:
            cells = line.split(",")
            cells[idx] = ""
            body.append(",".join(cells))
        return [lines[0]] + body

    def mask_json(path):
        data = json.loads(path.read_text())
        for rec in data["records"]:
            rec.pop("wall_ms", None)
        for agg in data["aggregates"]:
            agg.pop("mean_wall_ms", None)
        return data

    csv_equal = (mask_csv(first_dir / "report.csv")
                 == mask_csv(second_dir / "report.csv"))
    json_equal = (mask_json(first_dir / "report.json")
                  == mask_json(second_dir / "report.json"))
    svg_a = emit_plot(consistency_runs["location"],
                      tmp_path / "a.svg").read_text()
    svg_b = emit_plot(rerun, tmp_path / "b.svg").read_text()
    ok = csv_equal and json_equal and svg_a == svg_b
    line = report_line(
        8, ok,
        f"rerun with same master_seed (4 workers vs 1): CSV identical after "
        f"masking the wall-clock column: {csv_equal}; JSON identical after "
        f"dropping wall-clock fields: {json_equal}; convergence plot "
        f"byte-identical: {svg_a == svg_b}")
    assert ok, line
