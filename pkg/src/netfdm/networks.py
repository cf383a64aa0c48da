"""Network generation, ingestion, and distance analysis.

Generators (Erdos-Renyi, triangle-closure, stochastic block model,
Euclidean lattice) produce undirected graphs or weights matrices with
full provenance. All randomness is drawn from named Philox sub-streams
of the caller's seed, so results are reproducible bit-for-bit and
independent of execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path

from .errors import DataError, ParameterError, ParseError
from .io import parse_edgelist_lines
from .rng import substream

#: sentinel for the geodesic distance of a disconnected pair
INF = np.inf


@dataclass(frozen=True)
class Graph:
    """Undirected graph: node count, edge array (m, 2) with i < j, optional weights."""

    n: int
    edges: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e[:, 0] >= e[:, 1]).any():
            raise DataError("edges must be stored with i < j (no self-loops)")
        if e.size and (e.min() < 0 or e.max() >= self.n):
            raise DataError("edge endpoint out of range")
        if len(np.unique(e[:, 0] * self.n + e[:, 1])) != len(e):
            raise DataError("duplicate edge")
        if self.weights is not None and (np.asarray(self.weights) < 0).any():
            raise DataError("negative edge weight")
        object.__setattr__(self, "edges", e)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        """Dense symmetric adjacency (weighted if weights are present)."""
        a = np.zeros((self.n, self.n))
        if self.num_edges:
            vals = self.weights if self.weights is not None else 1.0
            a[self.edges[:, 0], self.edges[:, 1]] = vals
            a[self.edges[:, 1], self.edges[:, 0]] = vals
        return a


@dataclass(frozen=True)
class WeightsMatrix:
    """Nonnegative n x n weights with zero diagonal and provenance metadata."""

    n: int
    entries: np.ndarray
    normalized: bool
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.entries, dtype=float)
        if w.shape != (self.n, self.n):
            raise DataError(f"expected {(self.n, self.n)} matrix, got {w.shape}")
        if (w < 0).any():
            raise DataError("negative weight entry")
        if np.abs(np.diag(w)).max(initial=0.0) > 0:
            raise DataError("nonzero diagonal entry")
        if self.normalized:
            rs = w.sum(axis=1)
            bad = ~(np.isclose(rs, 1.0, rtol=0, atol=1e-12) | (rs == 0.0))
            if bad.any():
                raise DataError("normalized flag set but a row sum is neither 1 nor 0")
        object.__setattr__(self, "entries", w)

    @property
    def isolated(self) -> np.ndarray:
        """Indices of zero rows (nodes receiving no network influence)."""
        return np.flatnonzero(self.entries.sum(axis=1) == 0)

    @property
    def inf_norm(self) -> float:
        return float(np.abs(self.entries).sum(axis=1).max(initial=0.0))


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric pairwise distances with zero diagonal; INF marks disconnection."""

    n: int
    entries: np.ndarray
    kind: str  # "geodesic" or "chebyshev-lattice"

    def __post_init__(self):
        d = np.asarray(self.entries, dtype=float)
        finite = d[np.isfinite(d)]
        if (finite < 0).any():
            raise DataError("negative distance")
        if np.abs(np.diag(d)).max(initial=0.0) > 0:
            raise DataError("nonzero diagonal distance")
        if not np.array_equal(d, d.T):
            raise DataError("distance matrix not symmetric")
        object.__setattr__(self, "entries", d)


@dataclass(frozen=True)
class LatticeConfig:
    """Regular grid in dim dimensions with side nodes per axis (n = side**dim).

    scheme "cutoff": uniform weight to all neighbours closer than d0.
    scheme "power": raw weight c0 * d**(-alpha), then row-normalized.
    """

    dim: int
    side: int
    scheme: str
    d0: float = 2.0
    base: float = 1.0
    c0: float = 1.0
    alpha: float = 3.0

    def __post_init__(self):
        if self.side < 2 or self.dim < 1:
            raise ParameterError("need side >= 2 and dim >= 1")
        if self.scheme == "cutoff":
            if not self.d0 > 1:
                raise ParameterError("cutoff radius must exceed 1")
        elif self.scheme == "power":
            if not self.alpha > self.dim:
                raise ParameterError("power scheme needs alpha > dim")
            if self.c0 <= 0:
                raise ParameterError("c0 must be positive")
        else:
            raise ParameterError(f"unknown lattice scheme {self.scheme!r}")

    @property
    def n(self) -> int:
        return self.side**self.dim


def _edges_from_mask(n, mask_upper):
    iu, ju = np.triu_indices(n, k=1)
    return np.column_stack([iu[mask_upper], ju[mask_upper]])


def gen_er(n: int, mean_degree: float, seed: int) -> Graph:
    """Erdos-Renyi graph: each pair linked independently with prob D/(n-1)."""
    if n < 2:
        raise ParameterError("gen_er needs n >= 2")
    if not 1 <= mean_degree <= n - 1:
        raise ParameterError("mean degree must lie in [1, n-1]")
    p = mean_degree / (n - 1)
    rng = substream(seed, "er")
    u = rng.random(n * (n - 1) // 2)
    return Graph(n, _edges_from_mask(n, u < p))


def _sample_trios(n, count, rng):
    """Draw `count` distinct unordered node trios uniformly at random."""
    trios = set()
    while len(trios) < count:
        cand = rng.integers(0, n, size=(count - len(trios) + 8, 3))
        for a, b, c in cand:
            if a != b and b != c and a != c:
                trios.add(tuple(sorted((int(a), int(b), int(c)))))
                if len(trios) == count:
                    break
    return sorted(trios)


def gen_triangle(n: int, mean_triangles: float, mean_degree: float, seed: int) -> Graph:
    """Triangle-closure model OR-ed with an independent ER graph.

    Each node trio closes into a triangle with probability T/C(n,3); the
    triangle stage consumes its own sub-stream, so T=0 reproduces gen_er
    bit-for-bit under the same seed.
    """
    if n < 3:
        raise ParameterError("gen_triangle needs n >= 3")
    if mean_triangles < 0:
        raise ParameterError("mean triangle count must be nonnegative")
    n_trios = comb(n, 3)
    p_tri = mean_triangles / n_trios
    if p_tri > 1:
        raise ParameterError("T/C(n,3) exceeds 1")
    er = gen_er(n, mean_degree, seed)
    adj = er.adjacency() > 0
    rng = substream(seed, "tri")
    k = int(rng.binomial(n_trios, p_tri))
    for a, b, c in _sample_trios(n, k, rng):
        adj[a, b] = adj[b, a] = True
        adj[b, c] = adj[c, b] = True
        adj[a, c] = adj[c, a] = True
    iu, ju = np.triu_indices(n, k=1)
    return Graph(n, _edges_from_mask(n, adj[iu, ju]))


def gen_sbm(n: int, blocks: int, deg_within: float, deg_between: float, seed: int) -> Graph:
    """Stochastic block model with uniform random block labels.

    Link probabilities are chosen so the expected within/between-block
    degrees equal deg_within/deg_between for the expected block size n/M.
    """
    if blocks < 1 or n < 2 * blocks:
        raise ParameterError("gen_sbm needs n >= 2*blocks >= 2")
    if blocks == 1:
        return gen_er(n, deg_within, seed)
    # under uniform random labels a node has (n-1)/M expected same-block peers
    p_w = deg_within * blocks / (n - 1)
    p_b = deg_between * blocks / ((n - 1) * (blocks - 1))
    if not (0 <= p_w <= 1 and 0 <= p_b <= 1):
        raise ParameterError("implied link probabilities outside [0, 1]")
    labels = substream(seed, "sbm-blocks").integers(0, blocks, size=n)
    rng = substream(seed, "sbm-edges")
    iu, ju = np.triu_indices(n, k=1)
    p_pair = np.where(labels[iu] == labels[ju], p_w, p_b)
    u = rng.random(len(iu))
    return Graph(n, _edges_from_mask(n, u < p_pair))


def lattice_distances(config: LatticeConfig) -> DistanceMatrix:
    """Chebyshev distances between all grid nodes."""
    axes = [np.arange(config.side)] * config.dim
    coords = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, config.dim)
    d = np.abs(coords[:, None, :] - coords[None, :, :]).max(axis=2).astype(float)
    return DistanceMatrix(config.n, d, "chebyshev-lattice")


def gen_lattice(config: LatticeConfig) -> tuple[WeightsMatrix, DistanceMatrix]:
    """Lattice weights under the cutoff or power-decay scheme."""
    dist = lattice_distances(config)
    d = dist.entries
    n = config.n
    provenance = {"model": "lattice", **config.__dict__}
    if config.scheme == "cutoff":
        inside = (d < config.d0) & (d > 0)
        counts = inside.sum(axis=1)
        w = np.zeros((n, n))
        nz = counts > 0
        w[nz] = inside[nz] * (config.base / counts[nz, None])
        return WeightsMatrix(n, w, normalized=config.base == 1.0, provenance=provenance), dist

    with np.errstate(divide="ignore"):
        raw = np.where(d > 0, config.c0 * d ** (-config.alpha), 0.0)
    rs = raw.sum(axis=1, keepdims=True)
    rs[rs == 0] = 1.0
    return WeightsMatrix(n, raw / rs, normalized=True, provenance=provenance), dist


def row_normalize(source, provenance=None) -> WeightsMatrix:
    """Divide each nonzero row by its sum; zero rows stay zero (isolated nodes)."""
    if isinstance(source, Graph):
        raw = source.adjacency()
        provenance = provenance or {"source": "graph", "n": source.n}
    elif isinstance(source, WeightsMatrix):
        raw = source.entries
        provenance = provenance or dict(source.provenance)
    else:
        raw = np.asarray(source, dtype=float)
        provenance = provenance or {"source": "array"}
    if (raw < 0).any():
        raise DataError("negative entry in row_normalize input")
    if np.abs(np.diag(raw)).max(initial=0.0) > 0:
        raise DataError("nonzero diagonal in row_normalize input")
    rs = raw.sum(axis=1, keepdims=True)
    isolated = np.flatnonzero(rs[:, 0] == 0)
    safe = np.where(rs == 0, 1.0, rs)
    w = raw / safe
    prov = dict(provenance)
    if isolated.size:
        prov["isolated_nodes"] = isolated.tolist()
    return WeightsMatrix(raw.shape[0], w, normalized=True, provenance=prov)


def geodesic_distances(g: Graph) -> DistanceMatrix:
    """BFS hop counts between all node pairs; INF for disconnected pairs."""
    adj = sp.csr_matrix((g.adjacency() > 0).astype(np.int8))
    d = shortest_path(adj, method="D", unweighted=True, directed=False)
    return DistanceMatrix(g.n, d, "geodesic")


def shell_sizes(dist: DistanceMatrix, node: int) -> np.ndarray:
    """Counts of nodes at exact distance 0, 1, 2, ... from `node` (INF excluded)."""
    row = dist.entries[node]
    finite = row[np.isfinite(row)].astype(np.int64)
    return np.bincount(finite)


def _parse_positive_int(tok, lineno, what):
    try:
        val = int(tok)
    except ValueError as exc:
        raise ParseError(f"bad {what} {tok!r}", line=lineno) from exc
    if val < 1:
        raise ParseError(f"{what} must be a 1-based positive id", line=lineno)
    return val


def _ingest_pairs(path, weighted):
    pairs = {}
    n_max = 0
    for lineno, fields in parse_edgelist_lines(path):
        want = 3 if weighted else 2
        if len(fields) < want:
            raise ParseError(f"expected {want} tab-separated fields", line=lineno)
        i = _parse_positive_int(fields[0], lineno, "node id") - 1
        j = _parse_positive_int(fields[1], lineno, "node id") - 1
        if i == j:
            raise DataError(f"line {lineno}: self-loop {i + 1}")
        key = (min(i, j), max(i, j))
        if key in pairs:
            raise DataError(f"line {lineno}: duplicate pair {key[0] + 1},{key[1] + 1}")
        if weighted:
            try:
                wgt = float(fields[2])
            except ValueError as exc:
                raise ParseError(f"bad weight {fields[2]!r}", line=lineno) from exc
            if wgt < 0:
                raise DataError(f"line {lineno}: negative weight")
        else:
            wgt = 1.0
        pairs[key] = wgt
        n_max = max(n_max, i + 1, j + 1)
    return pairs, n_max


def _ingest_fcap(path):
    """Build pairwise common-ownership weights from a fund holdings table.

    Record format: fund_id, stock_id, shares held, price, shares outstanding.
    The weight of a linked pair is the sum over funds holding both stocks of
    (S_i^f P_i + S_j^f P_j) / (S_i P_i + S_j P_j).
    """
    holdings = {}  # fund -> {stock: shares held}
    caps = {}  # stock -> market cap S_i * P_i
    n_max = 0
    for lineno, fields in parse_edgelist_lines(path):
        if len(fields) < 5:
            raise ParseError("expected 5 tab-separated fields", line=lineno)
        fund = fields[0]
        stock = _parse_positive_int(fields[1], lineno, "stock id") - 1
        try:
            held, price, outstanding = (float(t) for t in fields[2:5])
        except ValueError as exc:
            raise ParseError(f"bad numeric field: {exc}", line=lineno) from exc
        if held < 0 or price < 0 or outstanding <= 0:
            raise DataError(f"line {lineno}: negative or zero holdings data")
        cap = outstanding * price
        if stock in caps and not np.isclose(caps[stock], cap, rtol=1e-12):
            raise DataError(f"line {lineno}: inconsistent price/outstanding for stock {stock + 1}")
        caps[stock] = cap
        fund_book = holdings.setdefault(fund, {})
        if stock in fund_book:
            raise DataError(f"line {lineno}: duplicate holding ({fund}, {stock + 1})")
        fund_book[stock] = held * price  # position value S_i^f * P_i
        n_max = max(n_max, stock + 1)
    pairs = {}
    for fund_book in holdings.values():
        stocks = sorted(fund_book)
        for a_idx, i in enumerate(stocks):
            for j in stocks[a_idx + 1 :]:
                share = (fund_book[i] + fund_book[j]) / (caps[i] + caps[j])
                pairs[(i, j)] = pairs.get((i, j), 0.0) + share
    return pairs, n_max


def ingest_edgelist(path, schema: str = "binary", n: int | None = None) -> WeightsMatrix:
    """Read a network file into an (unnormalized) WeightsMatrix.

    schema "binary"/"weighted": TSV edge list, 1-based ids, '#' comments.
    schema "fcap": fund holdings table; pair weights follow the
    common-ownership formula (see _ingest_fcap).
    """
    if schema in ("binary", "weighted"):
        pairs, n_max = _ingest_pairs(path, weighted=schema == "weighted")
    elif schema == "fcap":
        pairs, n_max = _ingest_fcap(path)
    else:
        raise ParameterError(f"unknown ingestion schema {schema!r}")
    size = n if n is not None else n_max
    if size < n_max:
        raise DataError(f"node id {n_max} exceeds declared n={n}")
    w = np.zeros((size, size))
    for (i, j), wgt in pairs.items():
        w[i, j] = w[j, i] = wgt
    return WeightsMatrix(
        size, w, normalized=False, provenance={"source": str(path), "schema": schema}
    )


def graph_from_weights(w: WeightsMatrix) -> Graph:
    """Graph with an edge wherever the (symmetrized) weights are positive."""
    sym = (w.entries > 0) | (w.entries.T > 0)
    iu, ju = np.triu_indices(w.n, k=1)
    mask = sym[iu, ju]
    return Graph(w.n, np.column_stack([iu[mask], ju[mask]]))
