"""Functional dependence measures (FDM).

delta_p(j, i) is the L^p distance between outcome Y_j and its coupled
version where input noise coordinate i is redrawn independently. Three
routes are provided: exact closed forms for linear processes, the analytic
SAR envelope bound, and coupled Monte Carlo estimation. The transformation
calculus propagates delta bounds through Lipschitz maps, polynomial-growth
maps, indicators, sums, and products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapabilityError, ParameterError
from .rng import substream
from .sar import NoiseModel, SarSpec, compute_splus, solve_sar


@dataclass(frozen=True)
class DeltaMatrix:
    """n x n matrix of delta_p(j, i): row j = affected outcome, col i = perturbed input."""

    n: int
    p: float
    entries: np.ndarray
    mode: str  # "analytic-bound", "exact", or "monte-carlo"
    se: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        if e.shape != (self.n, self.n):
            raise ParameterError(f"expected {(self.n, self.n)} delta matrix, got {e.shape}")
        if np.nanmin(e, initial=0.0) < 0:
            raise ParameterError("negative delta entry")
        if self.p < 1:
            raise ParameterError("moment order p must be >= 1")
        object.__setattr__(self, "entries", e)

    def influence_powers(self) -> np.ndarray:
        """Column sums: total impact of each input i on all outcomes."""
        return np.nansum(self.entries, axis=0)


@dataclass
class MomentBook:
    """Uniform moment bounds ||series||_{L^q} keyed by (name, order)."""

    moments: dict = field(default_factory=dict)

    def set(self, name: str, order: float, value: float):
        if not (np.isfinite(value) and value > 0):
            raise ParameterError("stored moment bounds must be finite and positive")
        self.moments[(name, float(order))] = float(value)

    def get(self, name: str, order: float) -> float:
        key = (name, float(order))
        if key not in self.moments:
            raise CapabilityError(f"missing moment bound ||{name}||_L{order}")
        return self.moments[key]


def delta_linear_exact(coeffs: np.ndarray, noise: NoiseModel, p: float) -> DeltaMatrix:
    """Exact FDM of the linear process Y_j = sum_i A_ji eps_i.

    Redrawing eps_i changes Y_j by exactly A_ji (eps_i - eps_i*), so
    delta(j, i) = |A_ji| ||eps - eps*||_{L^p}.
    """
    a = np.asarray(coeffs, dtype=float)
    coupled = noise.coupled_lp_norm(p)
    return DeltaMatrix(a.shape[0], p, np.abs(a) * coupled, "exact")


def delta_sar_bound(spec: SarSpec, p: float, splus=None) -> DeltaMatrix:
    """Analytic envelope 2 ||eps||_{L^p} S+ for the SAR process."""
    s = splus if splus is not None else compute_splus(spec)
    scale = 2 * spec.noise.lp_norm(p)
    return DeltaMatrix(spec.n, p, scale * s.entries, "analytic-bound")


def _delta_method_se(sum_x, sum_x2, reps, p):
    """Standard error of (mean x)^(1/p) from running sums of x = |diff|^p."""
    mean = sum_x / reps
    var = np.maximum(sum_x2 / reps - mean**2, 0.0)
    se_mean = np.sqrt(var / reps)
    with np.errstate(divide="ignore", invalid="ignore"):
        se = np.where(mean > 0, mean ** (1 / p - 1) * se_mean / p, 0.0)
    return mean ** (1 / p), se


def coupled_outcome_pairs(spec: SarSpec, master_seed: int, replication: int, columns):
    """One coupled draw: baseline outcome plus outcomes with each requested
    noise coordinate independently redrawn.

    Returns (y, y_coupled) where y_coupled[:, t] redraws coordinate columns[t].
    """
    base = spec.noise.sample(substream(master_seed, "fdm-base", replication), spec.n)
    redraw = spec.noise.sample(substream(master_seed, "fdm-coupled", replication), spec.n)
    cols = np.asarray(columns, dtype=np.int64)
    eps = np.tile(base[:, None], (1, len(cols) + 1))
    eps[cols, np.arange(1, len(cols) + 1)] = redraw[cols]
    out = solve_sar(spec, eps)
    return out[:, 0], out[:, 1:]


def delta_monte_carlo(
    spec: SarSpec,
    p: float,
    reps: int,
    master_seed: int,
    targets=None,
    transform=None,
) -> DeltaMatrix:
    """Coupled Monte Carlo FDM estimate with delta-method standard errors.

    targets: optional iterable of (j, i) pairs; default all pairs for
    n <= 200 (a full matrix costs O(reps * n) solves). transform applies an
    elementwise map H to both arms before measuring, giving the FDM of H(Y).
    """
    if reps < 100:
        raise ParameterError("delta_monte_carlo needs at least 100 replications")
    if targets is None:
        if spec.n > 200:
            raise ParameterError("pass an explicit target subset for n > 200")
        columns = np.arange(spec.n)
        rows_of = {i: None for i in columns}  # None = all rows
    else:
        rows_of = {}
        for j, i in targets:
            rows_of.setdefault(int(i), set()).add(int(j))
        columns = np.asarray(sorted(rows_of), dtype=np.int64)
    sum_x = np.zeros((spec.n, spec.n))
    sum_x2 = np.zeros((spec.n, spec.n))
    for r in range(reps):
        y, y_cpl = coupled_outcome_pairs(spec, master_seed, r, columns)
        if transform is not None:
            y = transform(y)
            y_cpl = transform(y_cpl)
        diff = np.abs(y[:, None] - y_cpl) ** p
        sum_x[:, columns] += diff
        sum_x2[:, columns] += diff**2
    est, se = _delta_method_se(sum_x, sum_x2, reps, p)
    mask = np.full((spec.n, spec.n), np.nan)
    for i, rows in rows_of.items():
        if rows is None:
            mask[:, i] = 1.0
        else:
            mask[sorted(rows), i] = 1.0
    return DeltaMatrix(
        spec.n,
        p,
        np.where(np.isnan(mask), np.nan, est),
        "monte-carlo",
        se=np.where(np.isnan(mask), np.nan, se),
        meta={"reps": reps, "seed": master_seed},
    )


def delta_aggregate(delta: DeltaMatrix, q: float):
    """Aggregate (1/n^q) sum_i (influence power of i)^q; also returns the powers."""
    if q < 1:
        raise ParameterError("aggregate order q must be >= 1")
    powers = delta.influence_powers()
    value = float((powers**q).sum() / delta.n**q)
    return value, powers


def _scaled(delta: DeltaMatrix, factor: float, p=None, mode="analytic-bound") -> DeltaMatrix:
    return DeltaMatrix(delta.n, delta.p if p is None else p, factor * delta.entries, mode)


def fdm_lipschitz(delta: DeltaMatrix, bound: float) -> DeltaMatrix:
    """FDM of H(Y) for uniformly Lipschitz H with constant `bound`."""
    if bound < 0:
        raise ParameterError("Lipschitz bound must be nonnegative")
    return _scaled(delta, bound)


def _check_exponent_identity(p, q, r):
    if not math.isclose(1 / p, 1 / q + 1 / r, rel_tol=0, abs_tol=1e-12):
        raise ParameterError(f"exponent identity 1/{p} = 1/{q} + 1/{r} violated")


def fdm_poly_lipschitz_holder(
    delta_q: DeltaMatrix, book: MomentBook, a: float, c1: float, p: float, r: float
) -> DeltaMatrix:
    """FDM bound for H with |H(y)-H(y')| <= C1(|y|^a + |y'|^a + 1)|y-y'|.

    Holder route: needs ||Y||_{L^{ar}} and 1/p = 1/q + 1/r; the output is at
    order p with scale C1 (2 ||Y||_{L^{ar}}^a + 1).
    """
    q = delta_q.p
    _check_exponent_identity(p, q, r)
    moment = book.get("Y", a * r)
    return _scaled(delta_q, c1 * (2 * moment**a + 1), p=p)


def fdm_poly_lipschitz_moment(
    delta_p: DeltaMatrix, book: MomentBook, a: float, p: float, q: float, c2: float = 1.0
) -> DeltaMatrix:
    """Moment route for the same H class: entrywise power map.

    Needs ||Y||_{L^q} with q > max(ap/(p-1), ap+p); the exponent
    (q-ap-p)/(pq-ap-p) is computed exactly, the finite constant C2 is
    user-supplied (default 1).
    """
    if not q > max(a * p / (p - 1), a * p + p):
        raise ParameterError("q must exceed max(ap/(p-1), ap+p)")
    book.get("Y", q)  # presence check: the route is vacuous without the moment
    expo = (q - a * p - p) / (p * q - a * p - p)
    return DeltaMatrix(delta_p.n, p, c2 * delta_p.entries**expo, "analytic-bound")


def fdm_indicator(delta_p: DeltaMatrix, density_bound: float, p=None) -> DeltaMatrix:
    """FDM bound for 1(Y > 0) under a uniform conditional density bound.

    The computable constant is 1 + (2 C1)^(1/p), from optimizing the split
    P(|Y| < eps) <= 2 C1 eps at eps = delta^(p/(p+1)).
    """
    if density_bound is None or density_bound <= 0:
        raise CapabilityError("indicator transform needs a positive density bound")
    p = delta_p.p if p is None else p
    const = 1 + (2 * density_bound) ** (1 / p)
    return DeltaMatrix(delta_p.n, p, const * delta_p.entries ** (1 / (p + 1)), "analytic-bound")


def fdm_sum(delta_y: DeltaMatrix, delta_z: DeltaMatrix) -> DeltaMatrix:
    """Minkowski: FDM of Y + Z is bounded by the entrywise sum."""
    if delta_y.n != delta_z.n or delta_y.p != delta_z.p:
        raise ParameterError("fdm_sum needs matching n and p")
    return DeltaMatrix(delta_y.n, delta_y.p, delta_y.entries + delta_z.entries, "analytic-bound")


def fdm_product_holder(
    delta_y: DeltaMatrix,
    delta_z: DeltaMatrix,
    book: MomentBook,
    p: float,
    r1: float,
    r2: float,
) -> DeltaMatrix:
    """Holder route for the product YZ.

    Needs ||Z||_{L^{r1}}, ||Y||_{L^{r2}} and 1/p = 1/q1 + 1/r1 = 1/q2 + 1/r2
    where q1, q2 are the orders of the input delta matrices.
    """
    if delta_y.n != delta_z.n:
        raise ParameterError("shape mismatch")
    _check_exponent_identity(p, delta_y.p, r1)
    _check_exponent_identity(p, delta_z.p, r2)
    z_mom = book.get("Z", r1)
    y_mom = book.get("Y", r2)
    return DeltaMatrix(
        delta_y.n, p, z_mom * delta_y.entries + y_mom * delta_z.entries, "analytic-bound"
    )


def fdm_product_moment(
    delta_y: DeltaMatrix,
    delta_z: DeltaMatrix,
    book: MomentBook,
    q: float,
    c1: float = 1.0,
    c2: float = 1.0,
) -> DeltaMatrix:
    """Moment route for the product YZ: powered entrywise sum.

    Needs ||Y||_{L^q}, ||Z||_{L^q} with q > max(p/(p-1), 2p); exponent
    (q-2p)/(pq-2p) computed exactly, constants user-supplied.
    """
    if delta_y.n != delta_z.n or delta_y.p != delta_z.p:
        raise ParameterError("fdm_product_moment needs matching n and p")
    p = delta_y.p
    if not q > max(p / (p - 1), 2 * p):
        raise ParameterError("q must exceed max(p/(p-1), 2p)")
    book.get("Y", q)
    book.get("Z", q)
    expo = (q - 2 * p) / (p * q - 2 * p)
    return DeltaMatrix(
        delta_y.n,
        p,
        c1 * delta_y.entries**expo + c2 * delta_z.entries**expo,
        "analytic-bound",
    )
