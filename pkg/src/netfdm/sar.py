"""SAR data-generating process and its dependence envelope.

The model is Y = F(lambda * W Y + c + eps) with Lipschitz link F. The
contraction coefficient zeta = L * |lambda| * ||W||_inf must be below 1,
which guarantees a unique solution and makes the envelope matrix
S+ = L * (I - L|lambda||W|)^(-1) well defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.special import gamma as gamma_fn

from .errors import CapabilityError, ConvergenceError, ParameterError
from .networks import WeightsMatrix
from .rng import substream

#: n above which compute_splus switches from direct solves to a Neumann series
DIRECT_SOLVE_LIMIT = 2000

#: truncation bound for the Neumann remainder
NEUMANN_TOL = 1e-10


def _lipschitz_spot_check(evaluator, lipschitz, trials=10_000):
    rng = substream(0, "link-spot-check")
    x = rng.uniform(-50.0, 50.0, size=trials)
    y = rng.uniform(-50.0, 50.0, size=trials)
    num = np.abs(np.asarray(evaluator(x)) - np.asarray(evaluator(y)))
    den = np.abs(x - y)
    if (num > lipschitz * den * (1 + 1e-9)).any():
        raise ParameterError("custom link violates its certified Lipschitz constant")


@dataclass(frozen=True)
class LinkFunction:
    """Scalar link F with certified Lipschitz constant."""

    kind: str
    lipschitz: float
    evaluator: object = None

    def __post_init__(self):
        if self.kind == "identity":
            object.__setattr__(self, "lipschitz", 1.0)
            object.__setattr__(self, "evaluator", lambda x: x)
        elif self.kind == "tobit":
            object.__setattr__(self, "lipschitz", 1.0)
            object.__setattr__(self, "evaluator", lambda x: np.maximum(0.0, x))
        elif self.kind == "custom":
            if self.evaluator is None or self.lipschitz <= 0:
                raise ParameterError("custom link needs an evaluator and L > 0")
            _lipschitz_spot_check(self.evaluator, self.lipschitz)
        else:
            raise ParameterError(f"unknown link kind {self.kind!r}")

    def __call__(self, x):
        return self.evaluator(x)


IDENTITY = LinkFunction("identity", 1.0)
TOBIT = LinkFunction("tobit", 1.0)


def gaussian_abs_moment(p: float) -> float:
    """E|N(0,1)|^p."""
    return 2 ** (p / 2) * gamma_fn((p + 1) / 2) / math.sqrt(math.pi)


@dataclass(frozen=True)
class NoiseModel:
    """Per-node independent noise with closed-form moment oracles when available.

    families: gaussian (sigma), uniform (a, b), student-t (df > 4, scale),
    custom (quantile map, no oracles).
    """

    family: str
    params: tuple = ()
    quantile: object = None

    def __post_init__(self):
        if self.family == "gaussian":
            (sigma,) = self.params
            if sigma <= 0:
                raise ParameterError("gaussian sigma must be positive")
        elif self.family == "uniform":
            a, b = self.params
            if not b > a:
                raise ParameterError("uniform needs b > a")
        elif self.family == "student-t":
            df, scale = self.params
            if df <= 4 or scale <= 0:
                raise ParameterError("student-t needs df > 4 and scale > 0")
        elif self.family == "custom":
            if self.quantile is None:
                raise ParameterError("custom noise needs a quantile map")
        else:
            raise ParameterError(f"unknown noise family {self.family!r}")

    def sample(self, rng: np.random.Generator, size):
        if self.family == "gaussian":
            return self.params[0] * rng.standard_normal(size)
        if self.family == "uniform":
            a, b = self.params
            return rng.uniform(a, b, size)
        if self.family == "student-t":
            df, scale = self.params
            return scale * rng.standard_t(df, size)
        return self.quantile(rng.random(size))

    def lp_norm(self, p: float) -> float:
        """||eps||_{L^p}; CapabilityError when no closed form exists."""
        if self.family == "gaussian":
            return self.params[0] * gaussian_abs_moment(p) ** (1 / p)
        if self.family == "uniform":
            a, b = self.params
            num = math.copysign(abs(b) ** (p + 1), b) - math.copysign(abs(a) ** (p + 1), a)
            return (num / ((p + 1) * (b - a))) ** (1 / p)
        if self.family == "student-t":
            df, scale = self.params
            if p >= df:
                raise CapabilityError(f"student-t L^{p} moment diverges for df={df}")
            mom = (
                df ** (p / 2)
                * gamma_fn((p + 1) / 2)
                * gamma_fn((df - p) / 2)
                / (math.sqrt(math.pi) * gamma_fn(df / 2))
            )
            return scale * mom ** (1 / p)
        raise CapabilityError("no moment oracle for custom noise")

    def coupled_lp_norm(self, p: float) -> float:
        """Exact ||eps - eps*||_{L^p} for an independent redraw."""
        if self.family == "gaussian":
            # difference of two independent N(0, sigma^2) is N(0, 2 sigma^2)
            return math.sqrt(2) * self.params[0] * gaussian_abs_moment(p) ** (1 / p)
        if self.family == "uniform":
            # |U - U'| has density 2(w - x)/w^2 on [0, w], w = b - a
            w = self.params[1] - self.params[0]
            return (2 * w**p / ((p + 1) * (p + 2))) ** (1 / p)
        raise CapabilityError(f"no coupled-moment oracle for {self.family} noise")

    @property
    def variance(self) -> float:
        if self.family == "gaussian":
            return self.params[0] ** 2
        if self.family == "uniform":
            a, b = self.params
            return (b - a) ** 2 / 12
        if self.family == "student-t":
            df, scale = self.params
            return scale**2 * df / (df - 2)
        raise CapabilityError("no variance oracle for custom noise")

    @property
    def is_symmetric_zero_mean(self) -> bool:
        if self.family == "gaussian":
            return True
        if self.family == "uniform":
            a, b = self.params
            return math.isclose(a, -b)
        if self.family == "student-t":
            return True
        return False


@dataclass(frozen=True)
class SarSpec:
    """Immutable SAR specification; conditioning context = fixed (W, covariates)."""

    weights: WeightsMatrix
    link: LinkFunction
    lam: float
    noise: NoiseModel
    covariates: np.ndarray | None = None  # fixed per-node term X'beta

    def __post_init__(self):
        c = self.covariates
        c = np.zeros(self.weights.n) if c is None else np.asarray(c, dtype=float)
        if c.shape != (self.weights.n,):
            raise ParameterError("covariate vector length must equal n")
        object.__setattr__(self, "covariates", c)
        if not self.zeta < 1:
            raise ParameterError(f"contraction coefficient zeta={self.zeta:.6g} must be < 1")

    @property
    def n(self) -> int:
        return self.weights.n

    @property
    def zeta(self) -> float:
        return self.link.lipschitz * abs(self.lam) * self.weights.inf_norm


@dataclass(frozen=True)
class SPlusMatrix:
    """Entrywise envelope L(I - L|lambda||W|)^(-1) for noise propagation."""

    n: int
    entries: np.ndarray
    zeta: float
    method: str
    neumann_terms: int | None = None
    truncation_bound: float = 0.0

    @property
    def max_column_sum(self) -> float:
        return float(self.entries.sum(axis=0).max())


def _fixed_point_tolerance(zeta: float) -> float:
    # guarantees a true error of at most 1e-10 after the stopping test
    if zeta == 0:
        return 1e-10
    return 1e-10 * (1 - zeta) / zeta


def solve_sar(spec: SarSpec, eps, return_trace: bool = False):
    """Unique solution of Y = F(lambda W Y + c + eps).

    eps may be a vector (n,) or a matrix (n, R) of independent noise columns;
    the solve is vectorized over columns. Identity links use a direct linear
    solve; other links use fixed-point iteration at contraction rate zeta.
    """
    eps = np.asarray(eps, dtype=float)
    squeeze = eps.ndim == 1
    e = eps.reshape(spec.n, -1)
    if e.shape[0] != spec.n:
        raise ParameterError("noise vector length must equal n")
    rhs = spec.covariates[:, None] + e
    w = spec.weights.entries
    if spec.link.kind == "identity":
        y = np.linalg.solve(np.eye(spec.n) - spec.lam * w, rhs)
        trace = []
    else:
        y = spec.link(rhs)
        tol = _fixed_point_tolerance(spec.zeta)
        trace = []
        for _ in range(1_000_000):
            y_next = spec.link(spec.lam * (w @ y) + rhs)
            step = float(np.abs(y_next - y).max())
            trace.append(step)
            y = y_next
            if step <= tol:
                break
        else:
            raise ConvergenceError("fixed-point iteration exceeded max iterations")
    result = y[:, 0] if squeeze else y
    return (result, trace) if return_trace else result


def compute_splus(spec_or_weights, lam=None, lipschitz=None, method="auto") -> SPlusMatrix:
    """Envelope matrix S+ = L (I - L |lambda| |W|)^(-1).

    Accepts a SarSpec, or (WeightsMatrix, lam, lipschitz). method "direct"
    solves against the identity; "neumann" truncates the series with
    remainder bound L zeta^(K+1) / (1-zeta) <= 1e-10; "auto" picks direct
    for n <= DIRECT_SOLVE_LIMIT.
    """
    if isinstance(spec_or_weights, SarSpec):
        w = spec_or_weights.weights
        lam = spec_or_weights.lam
        lipschitz = spec_or_weights.link.lipschitz
    else:
        w = spec_or_weights
        if lam is None or lipschitz is None:
            raise ParameterError("compute_splus needs lam and lipschitz with a raw weights matrix")
    zeta = lipschitz * abs(lam) * w.inf_norm
    if not zeta < 1:
        raise ParameterError(f"zeta={zeta:.6g} must be < 1")
    m = lipschitz * abs(lam) * np.abs(w.entries)
    if method == "auto":
        method = "direct" if w.n <= DIRECT_SOLVE_LIMIT else "neumann"
    if method == "direct":
        s = lipschitz * np.linalg.solve(np.eye(w.n) - m, np.eye(w.n))
        return SPlusMatrix(w.n, s, zeta, "direct-solve")
    if method != "neumann":
        raise ParameterError(f"unknown S+ method {method!r}")
    if zeta == 0:
        return SPlusMatrix(w.n, lipschitz * np.eye(w.n), zeta, "neumann", 0, 0.0)
    k = max(0, math.ceil(math.log(NEUMANN_TOL * (1 - zeta) / lipschitz) / math.log(zeta) - 1))
    term = np.eye(w.n)
    acc = np.eye(w.n)
    for _ in range(k):
        term = term @ m
        acc += term
    bound = lipschitz * zeta ** (k + 1) / (1 - zeta)
    return SPlusMatrix(w.n, lipschitz * acc, zeta, "neumann", k, bound)


def draw_noise(spec: SarSpec, master_seed: int, replication: int, stage: str = "sar-noise"):
    """Noise vector for one replication from its deterministic sub-stream."""
    rng = substream(master_seed, stage, replication)
    return spec.noise.sample(rng, spec.n)


def noise_matrix(spec: SarSpec, reps: int, master_seed: int, stage: str = "sar-noise"):
    """(n, reps) noise matrix; column r is replication r's sub-stream draw."""
    out = np.empty((spec.n, reps))
    for r in range(reps):
        out[:, r] = draw_noise(spec, master_seed, r, stage)
    return out


def simulate_replications(spec: SarSpec, reps: int, master_seed: int) -> np.ndarray:
    """(reps, n) outcomes; replication r depends only on (master_seed, r)."""
    if reps < 1:
        raise ParameterError("need at least one replication")
    eps = noise_matrix(spec, reps, master_seed)
    return solve_sar(spec, eps).T


def linear_solve_operator(spec: SarSpec):
    """LU factorization of (I - lambda W) for repeated identity-link solves."""
    if spec.link.kind != "identity":
        raise ParameterError("linear operator only defined for the identity link")
    return lu_factor(np.eye(spec.n) - spec.lam * spec.weights.entries)


def lu_apply(lu, rhs):
    return lu_solve(lu, rhs)
