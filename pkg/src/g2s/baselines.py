"""Classical heuristics and exact small-instance solvers for MVC, MC, MIS.

The exact solver is a memo-free branch-and-bound over bitmask vertex sets:
for cover problems it branches on a maximum-degree vertex (either it or its
whole neighborhood joins the cover) with a greedy-matching lower bound; for
max cut it branches on vertex side assignments with a remaining-edge bound.
"""

from dataclasses import dataclass
import time

import numpy as np

from .errors import ValidationError
from .graphs import Graph, neighbor_sums

DEFAULT_NODE_BUDGET = 10_000_000

PROBLEMS = ("mvc", "mc", "mis")


@dataclass
class OptResult:
    value: int
    solution: tuple
    exact: bool
    nodes: int
    wall_s: float


def _adj_masks(g: Graph):
    masks = [0] * g.n
    for u, v in g.edges:
        masks[u] |= 1 << v
        masks[v] |= 1 << u
    return masks


def _mask_to_tuple(mask):
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return tuple(out)


# ---------------------------------------------------------------------------
# Feasibility checkers (kept independent of the solvers that they audit)


def is_cover(g: Graph, s) -> bool:
    ss = set(s)
    return all(u in ss or v in ss for u, v in g.edges)


def is_independent(g: Graph, s) -> bool:
    ss = set(s)
    return not any(u in ss and v in ss for u, v in g.edges)


def cut_value(g: Graph, s) -> int:
    ss = set(s)
    return sum(1 for u, v in g.edges if (u in ss) != (v in ss))


# ---------------------------------------------------------------------------
# Greedy heuristics


def greedy(problem, g: Graph) -> OptResult:
    """Deterministic greedy construction; ties broken by lowest vertex id."""
    t0 = time.perf_counter()
    if problem == "mvc":
        sol = _greedy_cover(g)
        value = len(sol)
    elif problem == "mis":
        sol = _greedy_independent(g)
        value = len(sol)
    elif problem == "mc":
        sol = _greedy_cut(g)
        value = cut_value(g, sol)
    else:
        raise ValidationError(f"problem: unknown problem {problem!r}")
    return OptResult(value, tuple(sorted(sol)), False, 0, time.perf_counter() - t0)


def _greedy_cover(g):
    # unsel_deg[v] = uncovered edges incident to v while v itself is unselected
    unsel_deg = g.degrees.copy()
    selected = np.zeros(g.n, dtype=bool)
    sol = []
    while True:
        gains = np.where(selected, -1, unsel_deg)
        v = int(np.argmax(gains))
        if gains[v] <= 0:
            break
        selected[v] = True
        sol.append(v)
        for u in g.neighbors(v):
            if not selected[u]:
                unsel_deg[u] -= 1
    return sol

def _greedy_independent(g):
    alive = np.ones(g.n, dtype=bool)
    deg = g.degrees.copy()
    sol = []
    while alive.any():
        masked = np.where(alive, deg, g.n + 1)
        v = int(np.argmin(masked))
        sol.append(v)
        drop = [v] + [u for u in g.neighbors(v) if alive[u]]
        for w in drop:
            alive[w] = False
            for u in g.neighbors(w):
                if alive[u]:
                    deg[u] -= 1
    return sol

def _greedy_cut(g):
    in_s = np.zeros(g.n, dtype=bool)
    sel_nbrs = np.zeros(g.n, dtype=np.int64)
    sol = []
    while True:
        gains = np.where(in_s, -1, g.degrees - 2 * sel_nbrs)
        v = int(np.argmax(gains))
        if gains[v] <= 0:
            break
        in_s[v] = True
        sol.append(v)
        for u in g.neighbors(v):
            sel_nbrs[u] += 1
    return sol


def matching_mvc(g: Graph) -> OptResult:
    """2-approximation: both endpoints of a greedily built maximal matching."""
    t0 = time.perf_counter()
    matched = set()
    sol = []
    for u, v in g.edges:  # edges are sorted (u, v) with u < v
        if u not in matched and v not in matched:
            matched.add(u)
            matched.add(v)
            sol.extend((u, v))
    return OptResult(len(sol), tuple(sorted(sol)), False, 0, time.perf_counter() - t0)


def list_heuristic(problem, g: Graph, seed) -> OptResult:
    """One pass over a seeded random vertex order: a vertex joins the
    independent set iff none of its earlier-processed neighbors joined.
    MIS returns that set; MVC returns its complement (always a cover)."""
    if problem not in ("mvc", "mis"):
        raise ValidationError("problem: list heuristic supports mvc and mis only")
    t0 = time.perf_counter()
    order = np.random.default_rng(seed).permutation(g.n)
    joined = np.zeros(g.n, dtype=bool)
    for v in order:
        v = int(v)
        if not any(joined[u] for u in g.neighbors(v)):
            joined[v] = True
    ind = [v for v in range(g.n) if joined[v]]
    if problem == "mis":
        sol = ind
    else:
        sol = [v for v in range(g.n) if not joined[v]]
    return OptResult(len(sol), tuple(sol), False, 0, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# Tree algorithms


def _check_tree(g: Graph):
    if g.n == 0 or g.m != g.n - 1:
        raise ValidationError("graph: not a tree (need m == n - 1, connected)")
    seen = np.zeros(g.n, dtype=bool)
    stack = [0]
    seen[0] = True
    count = 1
    while stack:
        v = stack.pop()
        for u in g.neighbors(v):
            if not seen[u]:
                seen[u] = True
                count += 1
                stack.append(u)
    if count != g.n:
        raise ValidationError("graph: not a tree (disconnected)")


def tree_mvc_dp(g: Graph) -> int:
    """Exact minimum vertex cover size of a tree by the standard O(n) DP."""
    _check_tree(g)
    if g.n == 1:
        return 0
    parent = np.full(g.n, -1, dtype=np.int64)
    order = []
    stack = [0]
    seen = np.zeros(g.n, dtype=bool)
    seen[0] = True
    while stack:
        v = stack.pop()
        order.append(v)
        for u in g.neighbors(v):
            if not seen[u]:
                seen[u] = True
                parent[u] = v
                stack.append(u)
    take = np.ones(g.n, dtype=np.int64)  # min cover of subtree with v included
    skip = np.zeros(g.n, dtype=np.int64)  # ... with v excluded
    for v in reversed(order):
        p = parent[v]
        if p >= 0:
            take[p] += min(take[v], skip[v])
            skip[p] += take[v]
    return int(min(take[0], skip[0]))


def tree_mvc_heuristic(g: Graph, rounds: int):
    """Synchronous message-passing estimate of a tree's minimum vertex cover.

    Per-vertex state (x, y): x in {-eps, +1} marks active vertices, y in
    {-1, 0, +eps} marks cover membership decisions, eps = 1/(max degree + 1).
    Returns (raw aggregate, nearest integer); the aggregate converges to the
    exact cover size as rounds grows.
    """
    _check_tree(g)
    if rounds < 1:
        raise ValidationError("rounds: must be >= 1")
    eps = 1.0 / (g.max_degree() + 1)
    x = np.full(g.n, -eps)
    y = np.zeros(g.n)
    acc = np.zeros(g.n)
    for _ in range(rounds):
        sx = neighbor_sums(g, x)
        sy = neighbor_sums(g, y)
        active = sx >= -eps
        x = np.where(active, 1.0, -eps)
        y = np.where(active, np.where(sy < 0, eps, -1.0), 0.0)
        acc += (y + 1.0) / (1.0 + eps)
    raw = float((acc / rounds).sum())
    return raw, int(round(raw))


# ---------------------------------------------------------------------------
# Exact solvers


def exact(problem, g: Graph, node_budget=DEFAULT_NODE_BUDGET) -> OptResult:
    """Branch-and-bound optimum; falls back to the best incumbent (exact=False)
    if the node budget runs out."""
    if problem == "mc":
        return _exact_maxcut(g, node_budget)
    if problem not in ("mvc", "mis"):
        raise ValidationError(f"problem: unknown problem {problem!r}")
    res = _exact_mvc(g, node_budget)
    if problem == "mvc":
        return res
    cover = set(res.solution)
    ind = tuple(v for v in range(g.n) if v not in cover)
    return OptResult(g.n - res.value, ind, res.exact, res.nodes, res.wall_s)


def _matching_lb(adj, rem):
    # Greedy maximal matching on the remaining graph; each matched edge needs
    # at least one cover vertex.
    lb = 0
    avail = rem
    while avail:
        low = avail & -avail
        v = low.bit_length() - 1
        avail ^= low
        nb = adj[v] & avail
        if nb:
            avail &= ~(nb & -nb)
            lb += 1
    return lb


def _exact_mvc(g: Graph, node_budget) -> OptResult:
    t0 = time.perf_counter()
    n = g.n
    adj = _adj_masks(g)
    start = _greedy_cover(g)
    best_size = len(start)
    best_mask = 0
    for v in start:
        best_mask |= 1 << v
    state = {"nodes": 0, "exhausted": False, "best": best_size, "mask": best_mask}

    def visit(rem, cmask, csize):
        if state["exhausted"]:
            return
        state["nodes"] += 1
        if state["nodes"] > node_budget:
            state["exhausted"] = True
            return
        # Reductions: isolated vertices drop out; for a degree-1 vertex,
        # covering its neighbor is never worse than covering it.
        maxd = 0
        maxv = -1
        while True:
            if csize >= state["best"]:
                return
            maxd = 0
            maxv = -1
            redo = False
            r = rem
            while r:
                low = r & -r
                v = low.bit_length() - 1
                r ^= low
                nb = adj[v] & rem
                d = nb.bit_count()
                if d == 0:
                    rem ^= low
                elif d == 1:
                    u_bit = nb
                    cmask |= u_bit
                    csize += 1
                    rem &= ~(low | u_bit)
                    redo = True
                    break
                elif d > maxd:
                    maxd = d
                    maxv = v
            if not redo:
                break
        if maxd == 0:
            if csize < state["best"]:
                state["best"] = csize
                state["mask"] = cmask
            return
        if csize + _matching_lb(adj, rem) >= state["best"]:
            return
        v_bit = 1 << maxv
        nb = adj[maxv] & rem
        visit(rem & ~(v_bit | nb), cmask | nb, csize + nb.bit_count())
        visit(rem & ~v_bit, cmask | v_bit, csize + 1)

    visit((1 << n) - 1, 0, 0)
    return OptResult(
        state["best"],
        _mask_to_tuple(state["mask"]),
        not state["exhausted"],
        state["nodes"],
        time.perf_counter() - t0,
    )


def _exact_maxcut(g: Graph, node_budget) -> OptResult:
    t0 = time.perf_counter()
    n = g.n
    if n == 0:
        return OptResult(0, (), True, 0, time.perf_counter() - t0)
    adj = _adj_masks(g)
    # open_edges[i] = edges still undecided when vertices 0..i-1 are assigned
    # (an edge is decided once its larger endpoint is placed)
    by_max = [0] * (n + 1)
    for _, v in g.edges:
        by_max[v] += 1
    open_edges = [0] * (n + 1)
    for i in range(n - 1, -1, -1):
        open_edges[i] = open_edges[i + 1] + by_max[i]
    state = {"nodes": 0, "exhausted": False, "best": -1, "mask": 0}

    def visit(idx, side0, side1, cut):
        if state["exhausted"]:
            return
        state["nodes"] += 1
        if state["nodes"] > node_budget:
            state["exhausted"] = True
            return
        if idx == n:
            if cut > state["best"]:
                state["best"] = cut
                state["mask"] = side0
            return
        if cut + open_edges[idx] <= state["best"]:
            return
        bit = 1 << idx
        gain0 = (adj[idx] & side1).bit_count()
        gain1 = (adj[idx] & side0).bit_count()
        if gain0 >= gain1:
            visit(idx + 1, side0 | bit, side1, cut + gain0)
            visit(idx + 1, side0, side1 | bit, cut + gain1)
        else:
            visit(idx + 1, side0, side1 | bit, cut + gain1)
            visit(idx + 1, side0 | bit, side1, cut + gain0)

    # vertex 0 pinned to one side (complement symmetry)
    visit(1, 1, 0, 0)
    return OptResult(
        state["best"],
        _mask_to_tuple(state["mask"]),
        not state["exhausted"],
        state["nodes"],
        time.perf_counter() - t0,
    )


def exhaustive(problem, g: Graph) -> int:
    """Optimal value by direct enumeration of all 2^n subsets (oracle)."""
    if g.n > 22:
        raise ValidationError("n: exhaustive enumeration capped at n <= 22")
    n = g.n
    member = (
        (np.arange(1 << n, dtype=np.uint32)[:, None] >> np.arange(n, dtype=np.uint32))
        & 1
    ).astype(bool)
    sizes = member.sum(axis=1)
    if problem == "mc":
        cut = np.zeros(1 << n, dtype=np.int64)
        for u, v in g.edges:
            cut += member[:, u] ^ member[:, v]
        return int(cut.max())
    if problem == "mvc":
        ok = np.ones(1 << n, dtype=bool)
        for u, v in g.edges:
            ok &= member[:, u] | member[:, v]
        return int(sizes[ok].min())
    if problem == "mis":
        ok = np.ones(1 << n, dtype=bool)
        for u, v in g.edges:
            ok &= ~(member[:, u] & member[:, v])
        return int(sizes[ok].max())
    raise ValidationError(f"problem: unknown problem {problem!r}")
