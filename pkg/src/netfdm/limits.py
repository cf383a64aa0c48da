"""Finite-n evaluation of the conditions behind the limit theorems.

Covers the moment inequality, the two CLT condition statistics (max
influence column sum and the normalized min-sum), the ordered-decay
sufficient condition, the envelope decay bounds for geodesic and lattice
weights, and the concentration-inequality parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ExperimentError, ParameterError
from .fdm import DeltaMatrix, delta_aggregate, delta_sar_bound
from .networks import DistanceMatrix
from .sar import SarSpec, SPlusMatrix, compute_splus, noise_matrix, solve_sar


@njit(cache=True)
def _minsum_suffix_rows(s):
    """For each column i: sum_k sum_{j >= i} min(s[k, i], s[k, j]).

    Exact evaluation; per row a Fenwick tree over value ranks turns the
    suffix min-sums into O(n log n) work. Rows are accumulated in fixed
    order so results are bit-stable.
    """
    n = s.shape[0]
    out = np.zeros(n)
    rank = np.empty(n, np.int64)
    cnt = np.zeros(n + 1, np.int64)
    ssum = np.zeros(n + 1, np.float64)
    for k in range(n):
        v = s[k]
        order = np.argsort(v)
        for t in range(n):
            rank[order[t]] = t
        cnt[:] = 0
        ssum[:] = 0.0
        inserted = 0
        for i in range(n - 1, -1, -1):
            r = rank[i]
            idx = r + 1
            while idx <= n:
                cnt[idx] += 1
                ssum[idx] += v[i]
                idx += idx & (-idx)
            inserted += 1
            c_lt = 0
            s_lt = 0.0
            idx = r
            while idx > 0:
                c_lt += cnt[idx]
                s_lt += ssum[idx]
                idx -= idx & (-idx)
            # ties contribute v[i] either way, so rank splitting is safe
            out[i] += v[i] * (inserted - c_lt) + s_lt
    return out


def minsum_suffix_bruteforce(s):
    """Blocked O(n^3) oracle for _minsum_suffix_rows (tests, small n)."""
    s = np.asarray(s, dtype=float)
    n = s.shape[0]
    out = np.zeros(n)
    for i in range(n):
        out[i] = np.minimum(s[:, i][:, None], s[:, i:]).sum()
    return out


def minsum_all_rows(s):
    """For each column i: sum_k sum_{j=1..n} min(s[k, i], s[k, j]) (order-free)."""
    s = np.asarray(s, dtype=float)
    n = s.shape[0]
    out = np.zeros(n)
    for k in range(n):
        v = s[k]
        sv = np.sort(v)
        prefix = np.concatenate(([0.0], np.cumsum(sv)))
        pos = np.searchsorted(sv, v, side="left")
        out += v * (n - pos) + prefix[pos]
    return out


@dataclass(frozen=True)
class ConditionReport:
    """Evaluated CLT-condition statistics with pass/flag verdicts.

    eq15: max column sum (bounded-influence condition).
    eq16: normalized min-sum statistic, literal node-ordered form (j >= i).
    eq16_orderfree: order-invariant variant (j from 1); always >= eq16.
    """

    n: int
    p: float
    m: float
    eq15: float
    eq16: float
    eq16_orderfree: float
    flags: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)


def _condition_stats(entries: np.ndarray, p: float) -> tuple:
    n = entries.shape[0]
    m = min(2.0, p / 2.0)
    colsums = entries.sum(axis=0)
    eq15 = float(colsums.max())
    inner_lit = _minsum_suffix_rows(np.ascontiguousarray(entries))
    inner_free = minsum_all_rows(entries)
    eq16 = float((inner_lit**m).sum() / n**m)
    eq16_free = float((inner_free**m).sum() / n**m)
    return m, eq15, eq16, eq16_free, colsums


def _influence_flags(colsums, n):
    total = colsums.sum()
    mean_influence = total / n if n else 0.0
    ratio = colsums.max() / mean_influence if mean_influence > 0 else 0.0
    # a single input carrying an order-n share of total influence marks the
    # degenerate everyone-driven-by-one-node regime
    return {"diverging_influence": bool(ratio > n / 2 and n > 2)}


def clt_conditions_sar(splus: SPlusMatrix, p: float) -> ConditionReport:
    """Both CLT condition statistics evaluated on the SAR envelope matrix."""
    if not p > 2:
        raise ParameterError("CLT conditions need p > 2")
    m, eq15, eq16, eq16_free, colsums = _condition_stats(splus.entries, p)
    return ConditionReport(
        splus.n,
        p,
        m,
        eq15,
        eq16,
        eq16_free,
        flags=_influence_flags(colsums, splus.n),
        extras={"zeta": splus.zeta, "method": splus.method},
    )


def clt_conditions_delta(delta: DeltaMatrix) -> ConditionReport:
    """Same statistics on an arbitrary delta matrix (e.g. transformed series)."""
    entries = np.nan_to_num(delta.entries, nan=0.0)
    m, eq15, eq16, eq16_free, colsums = _condition_stats(entries, delta.p)
    agg2, _ = delta_aggregate(DeltaMatrix(delta.n, delta.p, entries, delta.mode), 2.0)
    return ConditionReport(
        delta.n,
        delta.p,
        m,
        eq15,
        eq16,
        eq16_free,
        flags=_influence_flags(colsums, delta.n),
        extras={"mode": delta.mode, "delta_p2_aggregate": agg2},
    )


@dataclass(frozen=True)
class DecayDiagnostic:
    alpha_per_row: np.ndarray  # NaN for skipped rows
    alpha_min: float
    kappa: float
    tail_sup: float
    tail_budget: float
    threshold: float
    passed: bool
    skipped_rows: tuple


def ordered_decay_diagnostic(delta: DeltaMatrix, p: float) -> DecayDiagnostic:
    """Power-law decay check on each row's sorted entries.

    Fits log(delta) against log(rank) over ranks [2, n/2], sets
    kappa = (n / log n)^(1 / alpha_min), and compares the sorted-tail sums
    beyond kappa against n^(-1/m).
    """
    entries = np.nan_to_num(delta.entries, nan=0.0)
    n = delta.n
    if n < 10:
        raise ParameterError("ordered decay diagnostic needs n >= 10")
    m = min(2.0, p / 2.0)
    if m <= 1:
        raise ParameterError("decay threshold undefined for p <= 2")
    threshold = m / (m - 1)
    lo, hi = 2, max(3, n // 2)
    alphas = np.full(n, np.nan)
    skipped = []
    sorted_rows = np.sort(entries, axis=1)[:, ::-1]
    for i in range(n):
        seg = sorted_rows[i, lo - 1 : hi]
        ranks = np.arange(lo, lo + len(seg))
        pos = seg > 0
        if pos.sum() < 3:
            skipped.append(i)
            continue
        slope = np.polyfit(np.log(ranks[pos]), np.log(seg[pos]), 1)[0]
        alphas[i] = -slope
    finite = alphas[np.isfinite(alphas)]
    if finite.size == 0:
        # all rows degenerate: zero tails pass trivially
        kappa = 1.0
        alpha_min = math.inf
    else:
        alpha_min = float(finite.min())
        kappa = (n / math.log(n)) ** (1 / alpha_min) if alpha_min > 0 else 1.0
    # tail covers ranks strictly beyond kappa; rank r is index r - 1
    start = max(0, math.floor(kappa))
    tail_sup = float(sorted_rows[:, start:].sum(axis=1).max()) if start < n else 0.0
    budget = n ** (-1 / m)
    passed = tail_sup <= budget and (alpha_min > threshold or tail_sup == 0.0)
    return DecayDiagnostic(
        alphas, alpha_min, kappa, tail_sup, budget, threshold, bool(passed), tuple(skipped)
    )


def verify_splus_geodesic_bound(
    splus: SPlusMatrix, dist: DistanceMatrix, lipschitz: float, zeta: float
):
    """Check S+_ji <= (L/(1-zeta)) zeta^d_ji on every finite-distance pair.

    Returns (max_ratio, slack). A relative violation beyond 1e-9 signals a
    bug and raises.
    """
    d = dist.entries
    finite = np.isfinite(d)
    bound = (lipschitz / (1 - zeta)) * np.where(finite, zeta**d, np.inf)
    with np.errstate(invalid="ignore"):
        ratios = np.where(bound > 0, splus.entries / bound, 0.0)
    max_ratio = float(ratios[finite].max())
    if max_ratio > 1 + 1e-9:
        raise ExperimentError(f"geodesic envelope bound violated: max ratio {max_ratio:.12g}")
    return max_ratio, 1.0 - max_ratio


def verify_splus_euclidean_decay(splus: SPlusMatrix, dist: DistanceMatrix, config):
    """Implied constant for the lattice decay bounds.

    cutoff: S+ <= C1 zeta^(d/d0); power: S+ <= C2 d^-(alpha-dim) log(2d)^(alpha-dim).
    The proof constants are implicit, so the sup of S+ over the decay factor
    is reported; stability across a growing side-length probe sequence is
    the caller's check.
    """
    d = dist.entries
    off = d > 0
    if config.scheme == "cutoff":
        factor = splus.zeta ** (d / config.d0)
        ratio = np.zeros_like(d)
        pos = off & (factor > 0)
        ratio[pos] = splus.entries[pos] / factor[pos]
        if np.any(off & ~pos & (splus.entries > 0)):
            ratio[off & ~pos & (splus.entries > 0)] = np.inf
        implied = float(ratio[off].max()) if off.any() else 0.0
    else:
        expo = config.alpha - config.dim
        factor = np.ones_like(d)
        factor[off] = d[off] ** (-expo) * np.log(2 * d[off]) ** expo
        implied = float((splus.entries[off] / factor[off]).max())
    diag_const = float(np.diag(splus.entries).max())
    return {"implied_constant": implied, "diagonal_constant": diag_const}


def moment_inequality_check(spec: SarSpec, p: float, reps: int, master_seed: int):
    """Empirical check of the martingale moment inequality.

    LHS: empirical L^p norm of the centered mean (1/n) sum_j (Y_j - E Y_j)
    over `reps` replications, with E Y_j estimated by the grand mean.
    RHS: C_p * Delta_{p, min(p,2)}^(1/min(p,2)) from the analytic bound.
    Returns (lhs, rhs, margin, lhs_se).
    """
    if not p > 1:
        raise ParameterError("moment inequality needs p > 1")
    eps = noise_matrix(spec, reps, master_seed, stage="mi-noise")
    y = solve_sar(spec, eps)  # (n, reps)
    sums = y.sum(axis=0)
    centered = (sums - sums.mean()) / spec.n
    x = np.abs(centered) ** p
    mean_x = x.mean()
    se_mean = x.std(ddof=1) / math.sqrt(reps)
    lhs = mean_x ** (1 / p)
    lhs_se = mean_x ** (1 / p - 1) * se_mean / p if mean_x > 0 else 0.0
    c_p = math.sqrt(p - 1) if p >= 2 else 1 / (p - 1)
    mq = min(p, 2.0)
    agg, _ = delta_aggregate(delta_sar_bound(spec, p), mq)
    rhs = c_p * agg ** (1 / mq)
    return float(lhs), float(rhs), float(rhs - lhs), float(lhs_se)


@dataclass(frozen=True)
class TailBoundParams:
    """Parameters of the exponential tail bound exp(-x^alpha / (2 e alpha gamma0^alpha))."""

    nu: float
    gamma0: float
    alpha: float
    t0: float
    rate: float  # 1 / (2 e alpha gamma0^alpha)
    probe_grid: tuple
    gamma_by_p: dict

    def bound(self, x):
        return np.exp(-self.rate * np.asarray(x, dtype=float) ** self.alpha)


DEFAULT_P_GRID = (2.0, 4.0, 6.0, 8.0, 12.0, 16.0)


def concentration_params(spec: SarSpec, nu: float, p_grid=DEFAULT_P_GRID) -> TailBoundParams:
    """Tail-bound parameters from the analytic delta bound over a p grid.

    gamma0 = max over the grid of p^(-nu) sqrt(n) Delta_{p,2}^(1/2); the
    maximum is nondecreasing as the grid grows.
    """
    if len(p_grid) == 0:
        raise ParameterError("empty p grid")
    if nu < 0:
        raise ParameterError("nu must be nonnegative")
    splus = compute_splus(spec)
    gamma_by_p = {}
    for p in p_grid:
        agg, _ = delta_aggregate(delta_sar_bound(spec, p, splus=splus), 2.0)
        gamma_by_p[float(p)] = float(p ** (-nu) * math.sqrt(spec.n) * math.sqrt(agg))
    gamma0 = max(gamma_by_p.values())
    alpha = 2.0 / (1.0 + 2.0 * nu)
    t0 = 1.0 / (math.e * alpha * gamma0**alpha)
    return TailBoundParams(nu, gamma0, alpha, t0, t0 / 2.0, tuple(p_grid), gamma_by_p)
