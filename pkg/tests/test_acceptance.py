"""Acceptance suite: ten end-to-end criteria, one pass/fail line each.

Benchmark values are the published simulation tables for the condition
statistics (means over 100 network draws at p = 4, unit Lipschitz constant):
max column sum of the influence envelope (eq15) and the normalized min-sum
statistic (eq16, suffix variant, recorded once during calibration and fixed).
Run with `pytest -s tests/test_acceptance.py` to see all ten lines.
"""

import math
import subprocess
import sys
import time

import numpy as np
import pytest

from netfdm.fdm import (
    MomentBook,
    _delta_method_se,
    delta_monte_carlo,
    delta_sar_bound,
    fdm_indicator,
    fdm_lipschitz,
    fdm_poly_lipschitz_holder,
    fdm_product_holder,
    fdm_sum,
)
from netfdm.limits import (
    concentration_params,
    moment_inequality_check,
    verify_splus_geodesic_bound,
)
from netfdm.mc import (
    ExperimentPlan,
    draw_network,
    ks_critical,
    run_clt,
    run_condition_table,
    run_tail,
)
from netfdm.networks import WeightsMatrix, gen_er, geodesic_distances, row_normalize
from netfdm.rng import substream
from netfdm.sar import (
    IDENTITY,
    NoiseModel,
    SarSpec,
    compute_splus,
    gaussian_abs_moment,
    solve_sar,
)

GAUSS = NoiseModel("gaussian", (1.0,))
LAMBDAS = (0.2, 0.3, 0.4, 0.8)
QUANT_LAMBDAS = (0.2, 0.3, 0.4)
DEGREES = (3.0, 5.0, 10.0)
NS = (100, 400, 900)

# benchmark tables: {(lambda, degree): (value at n=100, 400, 900)}
ER_EQ15 = {
    (0.2, 3.0): (1.726, 1.825, 1.881), (0.2, 5.0): (1.606, 1.699, 1.754),
    (0.2, 10.0): (1.461, 1.524, 1.550), (0.3, 3.0): (2.163, 2.378, 2.454),
    (0.3, 5.0): (1.994, 2.141, 2.243), (0.3, 10.0): (1.796, 1.898, 1.938),
    (0.4, 3.0): (2.796, 3.059, 3.194), (0.4, 5.0): (2.538, 2.750, 2.868),
    (0.4, 10.0): (2.215, 2.371, 2.458), (0.8, 3.0): (10.944, 12.296, 13.357),
    (0.8, 5.0): (9.788, 11.043, 11.562), (0.8, 10.0): (8.178, 9.161, 9.582),
}
ER_EQ16 = {
    (0.2, 3.0): (0.038, 0.010, 0.005), (0.2, 5.0): (0.064, 0.020, 0.010),
    (0.2, 10.0): (0.149, 0.073, 0.048), (0.3, 3.0): (0.084, 0.025, 0.012),
    (0.3, 5.0): (0.187, 0.079, 0.046), (0.3, 10.0): (0.517, 0.377, 0.324),
    (0.4, 3.0): (0.210, 0.072, 0.038), (0.4, 5.0): (0.561, 0.333, 0.244),
    (0.4, 10.0): (1.666, 1.702, 1.786), (0.8, 3.0): (38.673, 48.659, 56.889),
    (0.8, 5.0): (107.801, 225.678, 356.614), (0.8, 10.0): (207.483, 557.337, 1024.002),
}
TRI_EQ15 = {
    (0.2, 3.0): (1.719, 1.856, 1.915), (0.2, 5.0): (1.640, 1.730, 1.782),
    (0.2, 10.0): (1.476, 1.552, 1.576), (0.3, 3.0): (2.190, 2.399, 2.530),
    (0.3, 5.0): (2.074, 2.213, 2.317), (0.3, 10.0): (1.802, 1.904, 1.974),
    (0.4, 3.0): (2.817, 3.127, 3.357), (0.4, 5.0): (2.593, 2.863, 2.990),
    (0.4, 10.0): (2.253, 2.400, 2.488), (0.8, 3.0): (11.290, 13.286, 13.807),
    (0.8, 5.0): (10.090, 11.521, 12.373), (0.8, 10.0): (8.444, 9.356, 9.902),
}
TRI_EQ16 = {
    (0.2, 3.0): (0.037, 0.010, 0.004), (0.2, 5.0): (0.063, 0.020, 0.010),
    (0.2, 10.0): (0.147, 0.071, 0.047), (0.3, 3.0): (0.079, 0.023, 0.010),
    (0.3, 5.0): (0.175, 0.073, 0.042), (0.3, 10.0): (0.511, 0.365, 0.312),
    (0.4, 3.0): (0.187, 0.063, 0.032), (0.4, 5.0): (0.534, 0.298, 0.214),
    (0.4, 10.0): (1.623, 1.648, 1.727), (0.8, 3.0): (30.042, 34.813, 37.950),
    (0.8, 5.0): (98.917, 201.064, 308.821), (0.8, 10.0): (202.649, 542.418, 993.015),
}
SBM_EQ15 = {
    (0.2, 3.0): (1.589, 1.679, 1.742), (0.2, 5.0): (1.504, 1.588, 1.627),
    (0.2, 10.0): (1.397, 1.464, 1.499), (0.3, 3.0): (1.991, 2.129, 2.248),
    (0.3, 5.0): (1.849, 1.987, 2.062), (0.3, 10.0): (1.677, 1.791, 1.845),
    (0.4, 3.0): (2.531, 2.750, 2.856), (0.4, 5.0): (2.301, 2.520, 2.622),
    (0.4, 10.0): (2.038, 2.225, 2.318), (0.8, 3.0): (9.703, 10.882, 11.579),
    (0.8, 5.0): (8.726, 9.581, 10.311), (0.8, 10.0): (7.275, 8.141, 8.928),
}
SBM_EQ16 = {
    (0.2, 3.0): (0.064, 0.019, 0.009), (0.2, 5.0): (0.087, 0.030, 0.016),
    (0.2, 10.0): (0.128, 0.049, 0.029), (0.3, 3.0): (0.182, 0.072, 0.042),
    (0.3, 5.0): (0.263, 0.127, 0.083), (0.3, 10.0): (0.377, 0.198, 0.146),
    (0.4, 3.0): (0.546, 0.295, 0.208), (0.4, 5.0): (0.805, 0.531, 0.433),
    (0.4, 10.0): (1.044, 0.743, 0.669), (0.8, 3.0): (103.269, 204.683, 310.930),
    (0.8, 5.0): (130.542, 276.419, 452.188), (0.8, 10.0): (126.650, 265.136, 439.604),
}

_TABLE_CACHE = {}


def condition_table(model):
    """Full 36-cell condition table (G = 100 draws), computed once per model."""
    if model not in _TABLE_CACHE:
        plan = ExperimentPlan(model, LAMBDAS, DEGREES, NS, draws=100, p=4.0, seed=1)
        start = time.time()
        _TABLE_CACHE[model] = (run_condition_table(plan), time.time() - start)
    return _TABLE_CACHE[model]


def report(num, desc, ok, detail=""):
    suffix = f" ({detail})" if detail else ""
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {desc}{suffix}", flush=True)
    assert ok, f"criterion {num}: {desc}{suffix}"


def rel_err(est, ref):
    return abs(est - ref) / abs(ref)


def quantitative_failures(result, ref15, ref16):
    """Cells breaking the 10% (eq15) / 25% (eq16) tolerances at moderate lambda,
    or the factor-2 envelope plus eq16 growth in n at lambda = 0.8."""
    bad = []
    for lam in QUANT_LAMBDAS:
        for deg in DEGREES:
            for k, n in enumerate(NS):
                cell = result.cell(lam, deg, n)
                if rel_err(cell["eq15_mean"], ref15[(lam, deg)][k]) > 0.10:
                    bad.append(f"eq15 {lam}/{deg}/{n}={cell['eq15_mean']:.3f}")
                if rel_err(cell["eq16_mean"], ref16[(lam, deg)][k]) > 0.25:
                    bad.append(f"eq16 {lam}/{deg}/{n}={cell['eq16_mean']:.3f}")
    for deg in DEGREES:
        eq16_by_n = []
        for k, n in enumerate(NS):
            cell = result.cell(0.8, deg, n)
            for stat, refs in (("eq15_mean", ref15), ("eq16_mean", ref16)):
                ratio = cell[stat] / refs[(0.8, deg)][k]
                if not 0.5 <= ratio <= 2.0:
                    bad.append(f"{stat} 0.8/{deg}/{n} ratio={ratio:.2f}")
            eq16_by_n.append(cell["eq16_mean"])
        if not (eq16_by_n[0] < eq16_by_n[1] < eq16_by_n[2]):
            bad.append(f"eq16 not growing in n at 0.8/{deg}: {eq16_by_n}")
    return bad


def monotonicity_mismatches(result, ref15, ref16):
    """Adjacent-cell direction mismatches against the benchmark tables,
    ignoring differences smaller than twice the combined standard errors."""
    refs = {"eq15": ref15, "eq16": ref16}
    bad = []

    def check(stat, key_a, key_b, label):
        lam_a, deg_a, n_a = key_a
        lam_b, deg_b, n_b = key_b
        ref_a = refs[stat][(lam_a, deg_a)][NS.index(n_a)]
        ref_b = refs[stat][(lam_b, deg_b)][NS.index(n_b)]
        cell_a, cell_b = result.cell(*key_a), result.cell(*key_b)
        diff = cell_b[f"{stat}_mean"] - cell_a[f"{stat}_mean"]
        noise = 2 * (cell_a[f"{stat}_se"] + cell_b[f"{stat}_se"])
        if diff * (ref_b - ref_a) < 0 and abs(diff) > noise:
            bad.append(f"{stat} {label}: {key_a}->{key_b}")

    for stat in ("eq15", "eq16"):
        for lam in LAMBDAS:
            for deg in DEGREES:
                for a, b in zip(NS, NS[1:]):
                    check(stat, (lam, deg, a), (lam, deg, b), "n")
            for n in NS:
                for a, b in zip(DEGREES, DEGREES[1:]):
                    check(stat, (lam, a, n), (lam, b, n), "deg")
        for deg in DEGREES:
            for n in NS:
                for a, b in zip(LAMBDAS, LAMBDAS[1:]):
                    check(stat, (a, deg, n), (b, deg, n), "lam")
    return bad


def test_criterion_01_er_condition_table():
    result, elapsed = condition_table("er")
    bad = quantitative_failures(result, ER_EQ15, ER_EQ16)
    if elapsed >= 600:
        bad.append(f"runtime {elapsed:.0f}s >= 600s")
    report(
        1,
        "Erdos-Renyi condition table within tolerance, runtime under 10 min",
        not bad,
        f"runtime {elapsed:.0f}s" + (f"; offending cells: {bad}" if bad else ""),
    )


def test_criterion_02_sbm_condition_table():
    result, elapsed = condition_table("sbm")
    bad = quantitative_failures(result, SBM_EQ15, SBM_EQ16)
    spot = result.cell(0.3, 5.0, 400)
    if rel_err(spot["eq15_mean"], 1.987) > 0.10:
        bad.append(f"spot eq15={spot['eq15_mean']:.3f}")
    if rel_err(spot["eq16_mean"], 0.127) > 0.25:
        bad.append(f"spot eq16={spot['eq16_mean']:.3f}")
    report(
        2,
        "block-model condition table within tolerance incl. spot cell",
        not bad,
        f"runtime {elapsed:.0f}s" + (f"; offending cells: {bad}" if bad else ""),
    )


def test_criterion_03_triangle_condition_table():
    result, elapsed = condition_table("triangle")
    bad = []
    for (lam, deg), refs in TRI_EQ15.items():
        for k, n in enumerate(NS):
            cell = result.cell(lam, deg, n)
            for stat, table in (("eq15_mean", TRI_EQ15), ("eq16_mean", TRI_EQ16)):
                ratio = cell[stat] / table[(lam, deg)][k]
                if not 0.5 <= ratio <= 2.0:
                    bad.append(f"{stat} {lam}/{deg}/{n} ratio={ratio:.2f}")
    bad += monotonicity_mismatches(result, TRI_EQ15, TRI_EQ16)
    report(
        3,
        "triangle-overlay table within factor 2 with matching monotonicity",
        not bad,
        f"runtime {elapsed:.0f}s" + (f"; mismatches: {bad}" if bad else ""),
    )


def test_criterion_04_envelope_oracle_and_solver_agreement(three_cycle):
    circulant = np.array([[1.2, 0.4, 0.4], [0.4, 1.2, 0.4], [0.4, 0.4, 1.2]])
    s = compute_splus(three_cycle, lam=0.5, lipschitz=1.0)
    ok = np.abs(s.entries - circulant).max() <= 1e-12
    worst = 0.0
    for seed in range(50):
        w = row_normalize(gen_er(60, 3.0, seed))
        direct = compute_splus(w, lam=0.4, lipschitz=1.0, method="direct")
        neumann = compute_splus(w, lam=0.4, lipschitz=1.0, method="neumann")
        worst = max(worst, float(np.abs(direct.entries - neumann.entries).max()))
    ok = ok and worst <= 1e-10
    report(4, "exact envelope oracle and solver-path agreement", ok, f"max gap {worst:.2e}")


def test_criterion_05_coupling_oracle(three_cycle_spec):
    mc = delta_monte_carlo(three_cycle_spec, 2.0, 10_000, 1, targets=[(0, 0)])
    gap = abs(mc.entries[0, 0] - 1.2 * math.sqrt(2))
    ok = gap <= 3 * mc.se[0, 0]
    violations = 0
    for seed in range(20):
        w = row_normalize(gen_er(40, 3.0, seed))
        spec = SarSpec(w, IDENTITY, 0.3, GAUSS)
        est = delta_monte_carlo(spec, 2.0, 400, seed)
        bound = delta_sar_bound(spec, 2.0)
        if not np.all(est.entries <= bound.entries + 3 * est.se + 1e-12):
            violations += 1
    ok = ok and violations == 0
    report(
        5,
        "coupled Monte Carlo matches closed form and respects analytic bound",
        ok,
        f"oracle gap {gap:.4f} ({3 * mc.se[0, 0]:.4f} allowed), {violations} bound violations",
    )


def test_criterion_06_inequalities_never_violated():
    mi_violations = 0
    for k in range(200):
        n = (50, 100, 200)[k % 3]
        lam = (0.0, 0.2, 0.3, 0.4)[k % 4]
        p = (2.0, 4.0)[k % 2]
        spec = SarSpec(row_normalize(gen_er(n, 3.0, k)), IDENTITY, lam, GAUSS)
        _, _, margin, _ = moment_inequality_check(spec, p, 300, k)
        mi_violations += margin <= 0
    geo_violations = 0
    for k in range(200):
        g = gen_er((40, 70, 100)[k % 3], 3.0, 1000 + k)
        lam = (0.2, 0.4, 0.8)[k % 3]
        try:
            verify_splus_geodesic_bound(
                compute_splus(row_normalize(g), lam, 1.0), geodesic_distances(g), 1.0, lam
            )
        except Exception:
            geo_violations += 1
    ok = mi_violations == 0 and geo_violations == 0
    report(
        6,
        "moment and geodesic-envelope inequalities hold on 200 instances each",
        ok,
        f"{mi_violations} moment / {geo_violations} geodesic violations",
    )


def test_criterion_07_clt_at_desk_scale():
    w = draw_network("er", 900, 3.0, 1, 0)
    res = run_clt(SarSpec(w, IDENTITY, 0.2, GAUSS), 2000, 1)
    main_ok = res.ks <= 0.0364
    spec0 = SarSpec(w, IDENTITY, 0.0, GAUSS)
    control_passes = sum(
        run_clt(spec0, 500, seed).ks <= ks_critical(500) for seed in range(1, 101)
    )
    ok = main_ok and control_passes >= 99
    report(
        7,
        "CLT holds at n=900 and the independent control passes 99/100 seeds",
        ok,
        f"KS {res.ks:.4f} <= 0.0364, control {control_passes}/100",
    )


def test_criterion_08_concentration_tail_scaling():
    w = draw_network("er", 400, 3.0, 1, 0)
    x_grid = np.linspace(0.1, 3.0, 15)
    spec_g = SarSpec(w, IDENTITY, 0.2, GAUSS)
    params_g = concentration_params(spec_g, nu=0.5)
    res_g = run_tail(spec_g, params_g, x_grid, 20_000, 11)
    spec_u = SarSpec(w, IDENTITY, 0.2, NoiseModel("uniform", (-1.0, 1.0)))
    params_u = concentration_params(spec_u, nu=0.0)
    res_u = run_tail(spec_u, params_u, x_grid, 20_000, 11)
    ok = (
        params_g.alpha == pytest.approx(1.0)
        and res_g.passed
        and params_u.alpha == pytest.approx(2.0)
        and res_u.passed
    )
    report(
        8,
        "empirical tails decay at the predicted sub-exponential rates",
        ok,
        f"gaussian slope {res_g.slope:.3f} (req {res_g.required_slope:.3f}), "
        f"bounded slope {res_u.slope:.3f} (req {res_u.required_slope:.3f})",
    )


def _transform_violations(weights, lam, master_seed):
    """Count transform bounds that fail to dominate their MC estimates."""
    spec = SarSpec(weights, IDENTITY, lam, GAUSS)
    n = spec.n
    a = np.linalg.solve(np.eye(n) - lam * weights.entries, np.eye(n))
    sig = np.sqrt((a**2).sum(axis=1))  # exact per-node standard deviations
    targets = None if n <= 3 else [(j, i) for j in range(n) for i in (0, 1)]
    reps = 4000
    d2 = delta_sar_bound(spec, 2.0)
    d4 = delta_sar_bound(spec, 4.0)
    book = MomentBook()
    book.set("Y", 4.0, float(sig.max() * gaussian_abs_moment(4.0) ** 0.25))
    book.set("Y", 8.0, float(sig.max() * gaussian_abs_moment(8.0) ** 0.125))
    book.set("Z", 4.0, float(sig.max() * gaussian_abs_moment(4.0) ** 0.25))

    def dominated(bound, mc):
        est = np.nan_to_num(mc.entries)
        return bool(np.all(est <= bound.entries + 3 * np.nan_to_num(mc.se) + 1e-12))

    failures = []
    mc_abs = delta_monte_carlo(spec, 2.0, reps, master_seed, targets=targets, transform=np.abs)
    if not dominated(fdm_lipschitz(d2, 1.0), mc_abs):
        failures.append("lipschitz")
    mc_sq = delta_monte_carlo(
        spec, 2.0, reps, master_seed + 1, targets=targets, transform=lambda y: y**2
    )
    if not dominated(fdm_poly_lipschitz_holder(d4, book, a=1.0, c1=1.0, p=2.0, r=4.0), mc_sq):
        failures.append("polynomial")
    density_bound = 1.0 / (math.sqrt(2 * math.pi) * sig.min())
    mc_ind = delta_monte_carlo(
        spec, 2.0, reps, master_seed + 2, targets=targets,
        transform=lambda y: (y > 0).astype(float),
    )
    if not dominated(fdm_indicator(d2, density_bound), mc_ind):
        failures.append("indicator")
    if not dominated(fdm_product_holder(d4, d4, book, p=2.0, r1=4.0, r2=4.0), mc_sq):
        failures.append("product")
    # sum of two independent SAR processes, coupled on the same noise index
    sum_reps = 4000
    sum_x = np.zeros((n, n))
    sum_x2 = np.zeros((n, n))
    cols = np.arange(n)
    for r in range(sum_reps):
        ey = spec.noise.sample(substream(master_seed + 3, "sum-y", r), n)
        ez = spec.noise.sample(substream(master_seed + 3, "sum-z", r), n)
        ry = spec.noise.sample(substream(master_seed + 3, "sum-y-redraw", r), n)
        rz = spec.noise.sample(substream(master_seed + 3, "sum-z-redraw", r), n)
        epsy = np.tile(ey[:, None], (1, n + 1))
        epsy[cols, 1 + cols] = ry
        epsz = np.tile(ez[:, None], (1, n + 1))
        epsz[cols, 1 + cols] = rz
        s = solve_sar(spec, epsy) + solve_sar(spec, epsz)
        diff = np.abs(s[:, :1] - s[:, 1:]) ** 2.0
        sum_x += diff
        sum_x2 += diff**2
    est, se = _delta_method_se(sum_x, sum_x2, sum_reps, 2.0)
    if not np.all(est <= fdm_sum(d2, d2).entries + 3 * se + 1e-12):
        failures.append("sum")
    return failures


def test_criterion_09_transform_bounds_dominate(three_cycle):
    failures = _transform_violations(three_cycle, 0.5, 21)
    er = draw_network("er", 100, 3.0, 1, 0)
    failures += [f"er:{f}" for f in _transform_violations(er, 0.3, 21)]
    report(
        9,
        "transformation bounds dominate MC estimates on cycle and random graph",
        not failures,
        f"failures: {failures}" if failures else "all five transform families dominated",
    )


def test_criterion_10_cli_thread_determinism(tmp_path):
    def run_cli(extra, out):
        cmd = [sys.executable, "-m", "netfdm.cli"] + extra + ["--out", str(out)]
        subprocess.run(cmd, check=True, capture_output=True)

    base_cond = [
        "conditions", "--model", "er", "--lam", "0.2,0.4", "--deg", "3",
        "--n", "60", "--reps", "8", "--seed", "3",
    ]
    base_fdm = [
        "fdm", "--mode", "mc", "--model", "er", "--n", "30", "--reps", "500",
        "--lam", "0.3", "--p", "2", "--seed", "5",
    ]
    outputs = {"conditions.csv": [], "delta.csv": []}
    for threads in (1, 4, 8):
        out = tmp_path / f"t{threads}"
        run_cli(base_cond + ["--threads", str(threads)], out)
        run_cli(base_fdm + ["--threads", str(threads)], out)
        outputs["conditions.csv"].append((out / "conditions.csv").read_bytes())
        outputs["delta.csv"].append((out / "delta.csv").read_bytes())
    ok = all(len(set(blobs)) == 1 for blobs in outputs.values())
    report(10, "CLI outputs byte-identical across 1/4/8 worker threads", ok)
