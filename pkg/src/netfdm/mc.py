"""Monte Carlo experiment engine.

Runs the condition-table protocol (mean condition statistics over repeated
network draws), empirical LLN/CLT checks with Kolmogorov-Smirnov tests,
the multivariate CLT, and empirical tail-bound verification. Every
replication and network draw owns a deterministic sub-stream, and
reductions happen in fixed order, so results are independent of worker
count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr
from scipy.stats import chi2

from .errors import ExperimentError, ParameterError
from .limits import TailBoundParams, clt_conditions_sar
from .networks import WeightsMatrix, gen_er, gen_sbm, gen_triangle, row_normalize
from .rng import substream
from .sar import SarSpec, compute_splus, noise_matrix, solve_sar

#: asymptotic KS critical value coefficient at level 0.01
KS_COEFF_001 = 1.628


def ks_statistic(sample, cdf=None) -> float:
    """One-sample KS statistic; default reference is the standard normal."""
    z = np.sort(np.asarray(sample, dtype=float))
    r = len(z)
    if r == 0:
        raise ParameterError("empty sample")
    f = ndtr(z) if cdf is None else cdf(z)
    upper = np.arange(1, r + 1) / r - f
    lower = f - np.arange(0, r) / r
    return float(max(upper.max(), lower.max()))


def ks_critical(reps: int, coeff: float = KS_COEFF_001) -> float:
    return coeff / math.sqrt(reps)


def derive_seed(master_seed: int, stage: str, *indices: int) -> int:
    """Child seed for a nested generator call."""
    return int(substream(master_seed, stage, *indices).integers(2**63))


def draw_network(
    model: str,
    n: int,
    deg: float,
    master_seed: int,
    draw_index: int,
    *,
    triangles=None,
    blocks="auto",
    deg_between: float = 2.0,
    weights: WeightsMatrix | None = None,
) -> WeightsMatrix:
    """Row-normalized weights for draw `draw_index` of the given model cell."""
    if model == "file":
        if weights is None:
            raise ParameterError("model 'file' needs a weights matrix")
        return weights if weights.normalized else row_normalize(weights)
    seed = derive_seed(master_seed, f"net-{model}", n, int(round(deg * 1e6)), draw_index)
    if model == "er":
        g = gen_er(n, deg, seed)
    elif model == "triangle":
        t = n if triangles is None else triangles
        g = gen_triangle(n, t, deg, seed)
    elif model == "sbm":
        m = max(1, round(math.sqrt(n) / 2)) if blocks == "auto" else int(blocks)
        g = gen_sbm(n, m, deg, deg_between, seed)
    else:
        raise ParameterError(f"unknown network model {model!r}")
    w = row_normalize(g)
    prov = dict(w.provenance)
    prov.update(model=model, n=n, deg=deg, seed=seed, draw=draw_index)
    return WeightsMatrix(w.n, w.entries, w.normalized, prov)


@dataclass(frozen=True)
class ExperimentPlan:
    """Parameter grid for the condition-table protocol."""

    model: str
    lambdas: tuple
    degrees: tuple
    ns: tuple
    draws: int = 100  # network draws per cell
    p: float = 4.0
    seed: int = 1
    lipschitz: float = 1.0
    triangles: float | None = None  # triangle model: defaults to n
    blocks: object = "auto"  # SBM: sqrt(n)/2 per default
    deg_between: float = 2.0
    weights: WeightsMatrix | None = None  # for model "file"
    threads: int = 1

    def __post_init__(self):
        if self.draws < 1:
            raise ParameterError("need at least one network draw")
        if not self.p > 2:
            raise ParameterError("condition tables need p > 2")
        for lam in self.lambdas:
            if not self.lipschitz * abs(lam) < 1:
                raise ParameterError(f"cell lambda={lam} has zeta >= 1 for row-normalized W")


@dataclass(frozen=True)
class ConditionTableResult:
    plan: ExperimentPlan
    rows: tuple  # dicts: model, n, deg, lam, eq15/eq16/eq16_orderfree mean + se

    def cell(self, lam, deg, n) -> dict:
        for row in self.rows:
            if row["lam"] == lam and row["deg"] == deg and row["n"] == n:
                return row
        raise KeyError((lam, deg, n))


def _condition_draw(plan: ExperimentPlan, n: int, deg: float, g: int):
    w = draw_network(
        plan.model,
        n,
        deg,
        plan.seed,
        g,
        triangles=plan.triangles,
        blocks=plan.blocks,
        deg_between=plan.deg_between,
        weights=plan.weights,
    )
    out = {}
    for lam in plan.lambdas:
        splus = compute_splus(w, lam=lam, lipschitz=plan.lipschitz)
        rep = clt_conditions_sar(splus, plan.p)
        out[lam] = (rep.eq15, rep.eq16, rep.eq16_orderfree)
    return out


def run_condition_table(plan: ExperimentPlan) -> ConditionTableResult:
    """Mean and standard error of the condition statistics per grid cell."""
    rows = []
    for n in plan.ns:
        for deg in plan.degrees:
            with ThreadPoolExecutor(max_workers=max(1, plan.threads)) as pool:
                futures = [
                    pool.submit(_condition_draw, plan, n, deg, g) for g in range(plan.draws)
                ]
                per_draw = [f.result() for f in futures]  # fixed order: by draw index
            for lam in plan.lambdas:
                stats = np.array([d[lam] for d in per_draw])  # (G, 3)
                mean = stats.mean(axis=0)
                se = (
                    stats.std(axis=0, ddof=1) / math.sqrt(plan.draws)
                    if plan.draws > 1
                    else np.zeros(3)
                )
                rows.append(
                    {
                        "model": plan.model,
                        "n": n,
                        "deg": deg,
                        "lam": lam,
                        "eq15_mean": float(mean[0]),
                        "eq15_se": float(se[0]),
                        "eq16_mean": float(mean[1]),
                        "eq16_se": float(se[1]),
                        "eq16_orderfree_mean": float(mean[2]),
                        "eq16_orderfree_se": float(se[2]),
                        "draws": plan.draws,
                    }
                )
    return ConditionTableResult(plan, tuple(rows))


def _replicated_sums(spec: SarSpec, reps: int, master_seed: int, stage: str) -> np.ndarray:
    eps = noise_matrix(spec, reps, master_seed, stage=stage)
    return solve_sar(spec, eps).sum(axis=0)


def exact_sum_moments(spec: SarSpec):
    """Exact (mean, sd) of S_n = sum_j Y_j for the identity link."""
    if spec.link.kind != "identity":
        raise ParameterError("exact sum moments require the identity link")
    a = np.eye(spec.n) - spec.lam * spec.weights.entries
    u = np.linalg.solve(a.T, np.ones(spec.n))  # row sums of the inverse, transposed
    mean = float(u @ spec.covariates)
    sd = float(math.sqrt(spec.noise.variance * (u @ u)))
    return mean, sd


@dataclass(frozen=True)
class CltResult:
    n: int
    reps: int
    ks: float
    critical: float
    passed: bool
    sigma: float
    mean: float
    standardization: str  # "exact" or "pilot"
    standardized: np.ndarray = field(repr=False, default=None)


def run_clt(spec: SarSpec, reps: int, master_seed: int) -> CltResult:
    """KS test of the standardized sum against the standard normal."""
    if reps < 2:
        raise ParameterError("need at least 2 replications")
    if spec.link.kind == "identity":
        mean, sd = exact_sum_moments(spec)
        how = "exact"
    else:
        pilot = max(50, reps // 10)
        ps = _replicated_sums(spec, pilot, master_seed, "clt-pilot")
        mean, sd = float(ps.mean()), float(ps.std(ddof=1))
        how = "pilot"
        if not sd > 0:
            raise ExperimentError("degenerate pilot standard deviation")
    sums = _replicated_sums(spec, reps, master_seed, "clt-noise")
    z = (sums - mean) / sd
    ks = ks_statistic(z)
    crit = ks_critical(reps)
    return CltResult(spec.n, reps, ks, crit, ks <= crit, sd, mean, how, z)


@dataclass(frozen=True)
class MultivariateCltResult:
    dim: int
    reps: int
    ks_per_coordinate: tuple
    ks_critical: float
    ks_norm_sq: float
    passed: bool
    condition_number: float


def run_clt_multivariate(spec: SarSpec, links, reps: int, master_seed: int):
    """Multivariate CLT check for components H_k(U) of one latent linear SAR.

    The latent index U solves the identity-link system; each component sum
    is whitened with a pilot covariance estimate, then KS-tested per
    coordinate and via the squared norm against chi-square(dim).
    """
    if spec.link.kind != "identity":
        raise ParameterError("the latent index must use the identity link")
    dim = len(links)

    def component_sums(count, stage):
        eps = noise_matrix(spec, count, master_seed, stage=stage)
        latent = solve_sar(spec, eps)  # (n, count)
        return np.stack([np.asarray(h(latent)).sum(axis=0) for h in links], axis=1)

    pilot = component_sums(max(100, reps // 10), "cltmv-pilot")
    mu = pilot.mean(axis=0)
    cov = np.cov(pilot.T).reshape(dim, dim)
    cond = float(np.linalg.cond(cov))
    if not np.isfinite(cond) or cond > 1e12:
        raise ExperimentError(f"singular pilot covariance (condition number {cond:.3g})")
    evals, evecs = np.linalg.eigh(cov)
    whitener = evecs @ np.diag(evals**-0.5) @ evecs.T
    z = (component_sums(reps, "cltmv-noise") - mu) @ whitener.T
    ks_coords = tuple(ks_statistic(z[:, k]) for k in range(dim))
    ks_norm = ks_statistic((z**2).sum(axis=1), cdf=chi2(dim).cdf)
    crit = ks_critical(reps)
    passed = all(k <= crit for k in ks_coords) and ks_norm <= crit
    return MultivariateCltResult(dim, reps, ks_coords, crit, ks_norm, passed, cond)


def _quantile_with_se(values: np.ndarray, q: float):
    """Sample quantile and an order-statistic standard error."""
    a = np.sort(values)
    r = len(a)
    k = q * (r - 1)
    quant = float(np.quantile(a, q))
    spread = 1.96 * math.sqrt(r * q * (1 - q))
    lo = int(np.clip(math.floor(k - spread), 0, r - 1))
    hi = int(np.clip(math.ceil(k + spread), 0, r - 1))
    se = (a[hi] - a[lo]) / (2 * 1.96) if hi > lo else 0.0
    return quant, float(se)


@dataclass(frozen=True)
class LlnResult:
    ladder: tuple
    quantiles: tuple
    standard_errors: tuple
    passed: bool


def run_lln(make_spec, ladder, reps: int, master_seed: int, q: float = 0.95) -> LlnResult:
    """Empirical LLN check along an n ladder.

    make_spec(n) builds the cell's SarSpec. Reports the q-quantile of the
    absolute centered mean; passes when the quantile decreases along the
    ladder within order-statistic standard errors.
    """
    quants, ses = [], []
    for n in ladder:
        spec = make_spec(n)
        sums = _replicated_sums(spec, reps, master_seed, f"lln-{n}")
        centered = np.abs(sums - sums.mean()) / spec.n
        quant, se = _quantile_with_se(centered, q)
        quants.append(quant)
        ses.append(se)
    passed = all(
        quants[k + 1] <= quants[k] + 2 * (ses[k] + ses[k + 1]) for k in range(len(ladder) - 1)
    )
    return LlnResult(tuple(ladder), tuple(quants), tuple(ses), bool(passed))


@dataclass(frozen=True)
class TailResult:
    x_grid: tuple
    survival: tuple
    admissible: tuple  # grid points with >= 30 exceedances
    truncated: bool
    slope: float
    required_slope: float
    slack: float
    passed: bool


def run_tail(
    spec: SarSpec,
    params: TailBoundParams,
    x_grid,
    reps: int,
    master_seed: int,
    slack: float = 0.2,
) -> TailResult:
    """Empirical survival of |Z_n| = |sum Y_j| / sqrt(n) against the tail bound.

    Fits the empirical log-tail against x^alpha and requires the slope to be
    at most -rate * (1 - slack); the bound's prefactor is unverifiable, the
    decay exponent is what is checked.
    """
    if np.abs(spec.covariates).max(initial=0.0) > 0 or not spec.noise.is_symmetric_zero_mean:
        raise ExperimentError("tail experiment needs a centered spec (c = 0, symmetric noise)")
    sums = _replicated_sums(spec, reps, master_seed, "tail-noise")
    z = np.abs(sums) / math.sqrt(spec.n)
    x = np.asarray(sorted(x_grid), dtype=float)
    counts = np.array([(z >= xi).sum() for xi in x])
    surv = counts / reps
    admissible = counts >= 30
    truncated = not admissible.all()
    xs = x[admissible]
    if len(xs) < 2:
        raise ExperimentError("tail grid too sparse: fewer than 2 admissible points")
    slope = float(
        np.polyfit(xs**params.alpha, np.log(surv[admissible]), 1)[0]
    )
    required = -params.rate * (1 - slack)
    return TailResult(
        tuple(x),
        tuple(surv),
        tuple(xs),
        truncated,
        slope,
        required,
        slack,
        slope <= required,
    )
