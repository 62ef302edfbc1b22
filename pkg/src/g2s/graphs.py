"""Immutable undirected graphs, generators, text IO, and hard-coded fixtures.

Vertices are dense 0-based integers; graphs are simple (no self-loops, no
duplicate edges).  Every generator is deterministic given its seed.
"""

from dataclasses import dataclass, field
import heapq

import numpy as np

from .errors import EdgeListParseError, GenerationError, ValidationError

FIXTURE_NAMES = ("r1", "r2", "lg-balanced", "lg-skewed")

RANDOM_KINDS = ("er", "regular", "bipartite", "tree", "planted-cover")
DETERMINISTIC_KINDS = ("grid", "greedy-worst") + tuple(
    "fixture-" + f for f in FIXTURE_NAMES
)
KINDS = RANDOM_KINDS + DETERMINISTIC_KINDS


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph in compressed-adjacency form."""

    n: int
    edges: tuple  # tuple of (u, v) pairs with u < v, sorted

    adjacency: tuple = field(init=False, compare=False, repr=False)
    nbr_flat: np.ndarray = field(init=False, compare=False, repr=False)
    nbr_starts: np.ndarray = field(init=False, compare=False, repr=False)
    degrees: np.ndarray = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        if self.n < 0:
            raise ValidationError("n: must be >= 0")
        seen = set()
        adj = [[] for _ in range(self.n)]
        for u, v in self.edges:
            if u == v:
                raise ValidationError(f"edges: self-loop at vertex {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValidationError(f"edges: vertex id out of range in ({u}, {v})")
            if u > v:
                raise ValidationError(f"edges: pair ({u}, {v}) not ordered u < v")
            if (u, v) in seen:
                raise ValidationError(f"edges: duplicate edge ({u}, {v})")
            seen.add((u, v))
            adj[u].append(v)
            adj[v].append(u)
        object.__setattr__(self, "edges", tuple(sorted(self.edges)))
        object.__setattr__(self, "adjacency", tuple(tuple(sorted(a)) for a in adj))
        deg = np.array([len(a) for a in self.adjacency], dtype=np.int64)
        flat = np.fromiter(
            (u for a in self.adjacency for u in a), dtype=np.int64, count=int(deg.sum())
        )
        starts = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(deg, out=starts[1:])
        object.__setattr__(self, "nbr_flat", flat)
        object.__setattr__(self, "nbr_starts", starts)
        object.__setattr__(self, "degrees", deg)

    @property
    def m(self):
        return len(self.edges)

    def neighbors(self, v):
        return self.adjacency[v]

    def max_degree(self):
        return int(self.degrees.max()) if self.n else 0


def from_edges(n, edges):
    """Build a Graph from an arbitrary iterable of pairs, normalizing order."""
    canon = tuple(sorted((u, v) if u < v else (v, u) for u, v in edges))
    return Graph(n, canon)


def dense_adjacency(g: Graph) -> np.ndarray:
    """Dense n-by-n 0/1 adjacency matrix, cached on the graph."""
    cached = g.__dict__.get("_dense_adj")
    if cached is None:
        cached = np.zeros((g.n, g.n))
        for u, v in g.edges:
            cached[u, v] = 1.0
            cached[v, u] = 1.0
        object.__setattr__(g, "_dense_adj", cached)
    return cached


def edge_array(g: Graph) -> np.ndarray:
    """Edges as an (m, 2) int array, cached on the graph."""
    cached = g.__dict__.get("_edge_arr")
    if cached is None:
        cached = (
            np.array(g.edges, dtype=np.int64)
            if g.edges
            else np.zeros((0, 2), dtype=np.int64)
        )
        object.__setattr__(g, "_edge_arr", cached)
    return cached


def neighbor_sums(g: Graph, x: np.ndarray) -> np.ndarray:
    """Sum x over each vertex's sorted neighbor list.

    Accumulation order within a vertex is fixed (ascending neighbor id), so
    results are reproducible and identical across vertices with identical
    neighbor multisets.
    """
    out = np.zeros_like(x)
    if g.m == 0:
        return out
    nz = g.degrees > 0
    out[nz] = np.add.reduceat(x[g.nbr_flat], g.nbr_starts[:-1][nz], axis=0)
    return out


# ---------------------------------------------------------------------------
# Generation


@dataclass(frozen=True)
class GenSpec:
    """Parameters for one graph draw; validated per kind."""

    kind: str
    n: int = None
    p: float = None
    degree: int = None
    rows: int = None
    cols: int = None
    k: int = None
    extra: int = None
    seed: int = None

    def validate(self):
        if self.kind not in KINDS:
            raise ValidationError(f"kind: unknown kind {self.kind!r}")
        if self.kind in RANDOM_KINDS and self.seed is None:
            raise ValidationError(f"seed: required for kind {self.kind!r}")
        if self.kind in ("er", "regular", "bipartite", "tree", "greedy-worst"):
            if self.n is None or self.n < 1:
                raise ValidationError("n: must be >= 1")
        if self.kind in ("er", "bipartite"):
            if self.p is None or not (0.0 <= self.p <= 1.0):
                raise ValidationError("p: must be in [0, 1]")
        if self.kind == "bipartite" and self.n % 2 != 0:
            raise ValidationError("n: bipartite generator needs even n")
        if self.kind == "regular":
            if self.degree is None or self.degree < 0 or self.degree >= self.n:
                raise ValidationError("degree: must satisfy 0 <= degree < n")
            if (self.n * self.degree) % 2 != 0:
                raise ValidationError("degree: n * degree must be even")
        if self.kind == "grid":
            if self.rows is None or self.rows < 1 or self.cols is None or self.cols < 1:
                raise ValidationError("rows/cols: must be >= 1")
        if self.kind == "planted-cover":
            if self.k is None or self.k < 1:
                raise ValidationError("k: must be >= 1")
            if self.extra is None or self.extra < 0:
                raise ValidationError("extra: must be >= 0")
            if self.p is not None and not (0.0 <= self.p <= 1.0):
                raise ValidationError("p: must be in [0, 1]")


def generate(spec: GenSpec) -> Graph:
    """Generate the graph described by spec; deterministic for equal specs."""
    spec.validate()
    kind = spec.kind
    if kind == "er":
        return _gen_er(spec.n, spec.p, spec.seed)
    if kind == "regular":
        return _gen_regular(spec.n, spec.degree, spec.seed)
    if kind == "bipartite":
        return _gen_bipartite(spec.n, spec.p, spec.seed)
    if kind == "grid":
        return _gen_grid(spec.rows, spec.cols)
    if kind == "tree":
        return _gen_tree(spec.n, spec.seed)
    if kind == "greedy-worst":
        return _gen_greedy_worst(spec.n)
    if kind == "planted-cover":
        inner = 0.3 if spec.p is None else spec.p
        return _gen_planted_cover(spec.k, spec.extra, inner, spec.seed)
    return fixture(kind[len("fixture-"):])


def _gen_er(n, p, seed):
    rng = np.random.default_rng(seed)
    iu, iv = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    return from_edges(n, zip(iu[keep].tolist(), iv[keep].tolist()))


def _gen_regular(n, d, seed, max_tries=1000):
    # Pairing model with full restart whenever the pairing produces a
    # self-loop or a duplicate edge; near-uniform at small sizes.
    rng = np.random.default_rng(seed)
    stubs = np.repeat(np.arange(n), d)
    for _ in range(max_tries):
        perm = rng.permutation(stubs)
        us, vs = perm[0::2], perm[1::2]
        if np.any(us == vs):
            continue
        lo, hi = np.minimum(us, vs), np.maximum(us, vs)
        pairs = set(zip(lo.tolist(), hi.tolist()))
        if len(pairs) == len(lo):
            return from_edges(n, pairs)
    raise GenerationError(
        f"regular generator: no simple {d}-regular pairing after {max_tries} tries"
    )


def _gen_bipartite(n, p, seed):
    rng = np.random.default_rng(seed)
    half = n // 2
    left = np.repeat(np.arange(half), half)
    right = np.tile(np.arange(half, n), half)
    keep = rng.random(len(left)) < p
    return from_edges(n, zip(left[keep].tolist(), right[keep].tolist()))


def _gen_grid(rows, cols):
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return from_edges(rows * cols, edges)


def _gen_tree(n, seed):
    # Uniform labeled tree via a random Pruefer sequence.
    if n == 1:
        return Graph(1, ())
    rng = np.random.default_rng(seed)
    if n == 2:
        return Graph(2, ((0, 1),))
    seq = rng.integers(0, n, size=n - 2)
    deg = np.ones(n, dtype=np.int64)
    for x in seq:
        deg[x] += 1
    edges = []
    leaves = [v for v in range(n) if deg[v] == 1]
    heapq.heapify(leaves)
    for x in seq:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, int(x)))
        deg[x] -= 1
        if deg[x] == 1:
            heapq.heappush(leaves, int(x))
    u = heapq.heappop(leaves)
    v = heapq.heappop(leaves)
    edges.append((u, v))
    return from_edges(n, edges)


def _gen_greedy_worst(n):
    # Bipartite family on which max-degree greedy overshoots the optimum
    # cover (the left part) by a log factor: for each i in 2..n, floor(n/i)
    # right vertices of degree i attached to consecutive disjoint blocks of
    # the n left vertices.
    edges = []
    nxt = n
    for i in range(2, n + 1):
        for j in range(n // i):
            for t in range(i):
                edges.append((j * i + t, nxt))
            nxt += 1
    return from_edges(nxt, edges)


def _gen_planted_cover(k, extra, inner_p, seed):
    # Planted set P = {0..k-1}.  Two private pendant leaves per planted
    # vertex force P into every minimum cover; extras attach only to P, so P
    # itself covers everything and is the unique minimum vertex cover.
    rng = np.random.default_rng(seed)
    edges = []
    for p_v in range(k):
        edges.append((p_v, k + 2 * p_v))
        edges.append((p_v, k + 2 * p_v + 1))
    if k >= 2 and inner_p > 0:
        iu, iv = np.triu_indices(k, k=1)
        keep = rng.random(len(iu)) < inner_p
        edges.extend(zip(iu[keep].tolist(), iv[keep].tolist()))
    base = 3 * k
    for j in range(extra):
        count = int(rng.integers(1, min(3, k) + 1))
        for t in rng.choice(k, size=count, replace=False):
            edges.append((int(t), base + j))
    return from_edges(base + extra, edges)


# ---------------------------------------------------------------------------
# Fixtures

_R1_EDGES = (
    (0, 3), (0, 5), (0, 6), (0, 7), (1, 2), (1, 4), (1, 6), (1, 7),
    (2, 3), (2, 5), (2, 6), (3, 4), (3, 5), (4, 5), (4, 7), (6, 7),
)
_R2_EDGES = (
    (0, 1), (0, 2), (0, 4), (0, 7), (1, 4), (1, 5), (1, 6), (2, 3),
    (2, 4), (2, 7), (3, 5), (3, 6), (3, 7), (4, 6), (5, 6), (5, 7),
)
# 7-node binary trees as parent->children maps: one balanced (depth 2), one
# fully skewed (depth 3).
_BALANCED_CHILDREN = {0: (1, 2), 1: (3, 4), 2: (5, 6)}
_SKEWED_CHILDREN = {0: (1, 2), 2: (3, 4), 4: (5, 6)}


def _chain_tree(children):
    # Replace every node i of the 7-node tree by the chain
    # head(3i) - mid(3i+1) - tail(3i+2); a child's head attaches to its
    # parent's tail.
    edges = []
    for i in range(7):
        edges.append((3 * i, 3 * i + 1))
        edges.append((3 * i + 1, 3 * i + 2))
    for parent, childs in children.items():
        for c in childs:
            edges.append((3 * c, 3 * parent + 2))
    return from_edges(21, edges)


def fixture(name: str) -> Graph:
    """Return one of the hard-coded fixture graphs by name."""
    if name == "r1":
        return Graph(8, _R1_EDGES)
    if name == "r2":
        return Graph(8, _R2_EDGES)
    if name == "lg-balanced":
        return _chain_tree(_BALANCED_CHILDREN)
    if name == "lg-skewed":
        return _chain_tree(_SKEWED_CHILDREN)
    raise ValidationError(f"name: unknown fixture {name!r}")


# ---------------------------------------------------------------------------
# Edge-list text IO


def write_edge_list(g: Graph) -> str:
    """Serialize as "n m" followed by one "u v" line per edge, u < v, sorted."""
    lines = [f"{g.n} {g.m}"]
    lines.extend(f"{u} {v}" for u, v in g.edges)
    return "\n".join(lines) + "\n"


def parse_edge_list(text: str) -> Graph:
    """Parse the edge-list format; raises EdgeListParseError with line numbers."""
    lines = text.splitlines()
    if not lines:
        raise EdgeListParseError("line 1: empty input")
    head = lines[0].split()
    if len(head) != 2:
        raise EdgeListParseError("line 1: expected 'n m'")
    try:
        n, m = int(head[0]), int(head[1])
    except ValueError:
        raise EdgeListParseError("line 1: expected two integers") from None
    if n < 0 or m < 0:
        raise EdgeListParseError("line 1: n and m must be non-negative")
    if len(lines) - 1 < m:
        raise EdgeListParseError(f"line {len(lines) + 1}: expected {m} edge lines")
    seen = set()
    edges = []
    for i in range(1, m + 1):
        parts = lines[i].split()
        if len(parts) != 2:
            raise EdgeListParseError(f"line {i + 1}: expected 'u v'")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListParseError(f"line {i + 1}: expected two integers") from None
        if u == v:
            raise EdgeListParseError(f"line {i + 1}: self-loop at vertex {u}")
        if not (0 <= u < n and 0 <= v < n):
            raise EdgeListParseError(f"line {i + 1}: vertex id out of range")
        if u > v:
            u, v = v, u
        if (u, v) in seen:
            raise EdgeListParseError(f"line {i + 1}: duplicate edge ({u}, {v})")
        seen.add((u, v))
        edges.append((u, v))
    for i in range(m + 1, len(lines)):
        if lines[i].strip():
            raise EdgeListParseError(f"line {i + 1}: trailing content after {m} edges")
    return Graph(n, tuple(sorted(edges)))
