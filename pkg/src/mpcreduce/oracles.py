"""Sequential reference solvers.  Ground truth for every reduction."""
from __future__ import annotations

import heapq
import itertools
from collections import deque
from fractions import Fraction

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .graphs import Answer, GraphInstance, PromiseViolation, SuccessorList


class WrongTag(ValueError):
    pass


class NegativeWeight(ValueError):
    pass


CONNECTIVITY_TAGS = ("connectivity", "st_connectivity", "num_cc", "cc_labels", "bipartiteness", "cycle_count")
PATH_TAGS = ("shortest_path", "sssp", "apsp", "diameter", "radius", "median", "betweenness", "st_reachability")
STRUCT_TAGS = ("msf", "mincut", "ord", "list_ranking")
TAGS = CONNECTIVITY_TAGS + PATH_TAGS + STRUCT_TAGS

# When set, every distance aggregate is re-derived from the APSP matrix.
CHECK_CONSISTENCY = False


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.count = n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if ra > rb:
            ra, rb = rb, ra
        self.parent[rb] = ra  # the smaller id stays root
        self.count -= 1
        return True


def components(g: GraphInstance) -> list[int]:
    """Label every node by the smallest id in its (weak) component."""
    uf = UnionFind(g.n)
    for u, v, _ in g.edges:
        uf.union(u, v)
    return [uf.find(v) for v in range(g.n)]


def two_coloring(g: GraphInstance) -> list[int] | None:
    color = [-1] * g.n
    adj = g.adjacency()
    for root in range(g.n):
        if color[root] >= 0:
            continue
        color[root] = 0
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v, _ in adj[u]:
                if color[v] < 0:
                    color[v] = 1 - color[u]
                    queue.append(v)
                elif color[v] == color[u]:
                    return None
        # self-loops: adjacency skips them for undirected graphs
    if any(u == v for u, v, _ in g.edges):
        return None
    return color


def cycle_count(g: GraphInstance) -> int:
    """Components of a 2-regular multigraph (a self-loop counts as a cycle)."""
    deg = [0] * g.n
    for u, v, _ in g.edges:
        deg[u] += 1
        deg[v] += 1
    if any(d != 2 for d in deg):
        raise PromiseViolation("graph is not 2-regular")
    return len(set(components(g)))


def oracle_connectivity_family(tag: str, g: GraphInstance) -> Answer:
    if tag not in CONNECTIVITY_TAGS:
        raise WrongTag(tag)
    if tag == "bipartiteness":
        return Answer.boolean(two_coloring(g) is not None)
    if tag == "cycle_count":
        return Answer.integer(cycle_count(g))
    if g.directed and tag == "st_connectivity":
        raise WrongTag("st_connectivity is for undirected graphs; use st_reachability")
    labels = components(g)
    if tag == "connectivity":
        return Answer.boolean(len(set(labels)) <= 1)
    if tag == "st_connectivity":
        return Answer.boolean(labels[g.s] == labels[g.t])
    if tag == "num_cc":
        return Answer.integer(len(set(labels)))
    return Answer.labels(labels)


# --------------------------------------------------------------------------
# Paths


def sentinel(g: GraphInstance) -> int:
    return g.n * g.M + 1


def _check_weights(g: GraphInstance):
    if any(w < 0 for _, _, w in g.edges):
        raise NegativeWeight("negative edge weight")


def dijkstra(g: GraphInstance, source: int, adj=None) -> list[int | None]:
    adj = adj if adj is not None else g.adjacency()
    dist: list[int | None] = [None] * g.n
    dist[source] = 0
    heap = [(0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, w in adj[u]:
            nd = d + w
            if dist[v] is None or nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def reachable(g: GraphInstance, source: int) -> list[bool]:
    seen = [False] * g.n
    seen[source] = True
    stack = [source]
    adj = g.adjacency()
    while stack:
        u = stack.pop()
        for v, _ in adj[u]:
            if not seen[v]:
                seen[v] = True
                stack.append(v)
    return seen


def floyd_warshall(g: GraphInstance) -> list[list[int]]:
    """Distance matrix with unreachable pairs set to the sentinel n*M+1."""
    _check_weights(g)
    inf = float("inf")
    d = [[inf] * g.n for _ in range(g.n)]
    for v in range(g.n):
        d[v][v] = 0
    for u, v, w in g.edges:
        if w < d[u][v]:
            d[u][v] = w
        if not g.directed and w < d[v][u]:
            d[v][u] = w
    for k in range(g.n):
        dk = d[k]
        for i in range(g.n):
            dik = d[i][k]
            if dik == inf:
                continue
            di = d[i]
            for j in range(g.n):
                if dik + dk[j] < di[j]:
                    di[j] = dik + dk[j]
    big = sentinel(g)
    return [[big if x == inf else int(x) for x in row] for row in d]


def eccentricities(matrix: list[list[int]]) -> list[int]:
    return [max(row) for row in matrix]


def distance_sums(matrix: list[list[int]]) -> list[int]:
    return [sum(row) for row in matrix]


def _apsp_by_dijkstra(g: GraphInstance) -> list[list[int]]:
    adj = g.adjacency()
    big = sentinel(g)
    return [[big if x is None else x for x in dijkstra(g, u, adj)] for u in range(g.n)]


def betweenness(g: GraphInstance) -> list[Fraction]:
    """Brandes' algorithm with exact path counts and rational dependencies.

    Sums over ordered pairs (s, t) with s != t; for undirected graphs every
    unordered pair is therefore counted twice, and the result is halved.
    Zero-weight arcs are allowed as long as they close no zero-weight cycle.
    """
    _check_weights(g)
    adj = g.adjacency()
    n = g.n
    bc = [Fraction(0)] * n
    for src in range(n):
        dist = dijkstra(g, src, adj)
        preds: list[list[int]] = [[] for _ in range(n)]
        succs: list[list[int]] = [[] for _ in range(n)]
        for u in range(n):
            if dist[u] is None:
                continue
            for v, w in adj[u]:
                if v != u and dist[u] + w == dist[v]:
                    preds[v].append(u)
                    succs[u].append(v)
        indeg = [len(p) for p in preds]
        order, stack = [], [src]
        while stack:
            u = stack.pop()
            order.append(u)
            for v in succs[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    stack.append(v)
        if len(order) != sum(d is not None for d in dist):
            raise ValueError("zero-weight cycle: shortest paths are not finite")
        sigma = [0] * n
        sigma[src] = 1
        for v in order[1:]:
            sigma[v] = sum(sigma[u] for u in preds[v])
        exact = any(x > 1 for x in sigma)
        delta = [Fraction(0) if exact else 0] * n
        for v in reversed(order):
            for u in preds[v]:
                if exact:
                    delta[u] += Fraction(sigma[u], sigma[v]) * (1 + delta[v])
                else:
                    delta[u] += 1 + delta[v]
            if v != src:
                bc[v] += delta[v]
    if not g.directed:
        bc = [x / 2 for x in bc]
    return bc


def oracle_path_family(tag: str, g: GraphInstance) -> Answer:
    if tag not in PATH_TAGS:
        raise WrongTag(tag)
    _check_weights(g)
    if tag == "st_reachability":
        return Answer.boolean(reachable(g, g.s)[g.t])
    if tag in ("shortest_path", "sssp"):
        dist = dijkstra(g, g.s)
        big = sentinel(g)
        if tag == "sssp":
            return Answer.values(big if x is None else x for x in dist)
        return Answer.integer(big if dist[g.t] is None else dist[g.t])
    if tag == "betweenness":
        return Answer.values(betweenness(g))
    matrix = _apsp_by_dijkstra(g)
    if CHECK_CONSISTENCY:
        assert matrix == floyd_warshall(g), "Dijkstra and Floyd-Warshall disagree"
    if tag == "apsp":
        return Answer.values(tuple(tuple(row) for row in matrix))
    ecc = eccentricities(matrix)
    if tag == "diameter":
        value = max(ecc) if g.n else 0
        if CHECK_CONSISTENCY:
            assert value == max((x for row in matrix for x in row), default=0)
        return Answer.integer(value)
    if tag == "radius":
        value = min(ecc) if g.n else 0
        if CHECK_CONSISTENCY:
            assert all(value <= e for e in ecc) and value in ecc
        return Answer.integer(value)
    sums = distance_sums(matrix)
    value = min(sums) if g.n else 0
    if CHECK_CONSISTENCY:
        assert value == min(sum(row) for row in floyd_warshall(g))
    return Answer.integer(value)


# --------------------------------------------------------------------------
# Structural problems


def msf_order(g: GraphInstance) -> list[int]:
    """Edge indices sorted by the strict order (w, min endpoint, max endpoint, index)."""
    return sorted(range(g.m), key=lambda i: (g.edges[i][2], min(g.edges[i][:2]), max(g.edges[i][:2]), i))


def kruskal(g: GraphInstance) -> list[tuple[int, int, int]]:
    uf = UnionFind(g.n)
    return [g.edges[i] for i in msf_order(g) if uf.union(g.edges[i][0], g.edges[i][1])]


def cut_value(g: GraphInstance, side) -> int:
    return sum(w for u, v, w in g.edges if side[u] != side[v])


def stoer_wagner(g: GraphInstance) -> tuple[int, list[int]]:
    """Global minimum cut; returns (value, side bits with node 0 on side 0)."""
    n = g.n
    if n < 2:
        raise ValueError("min cut needs at least two nodes")
    labels = components(g)
    if len(set(labels)) > 1:
        return 0, [0 if x == labels[0] else 1 for x in labels]
    w = [[0] * n for _ in range(n)]
    for u, v, c in g.edges:
        if u != v:
            w[u][v] += c
            w[v][u] += c
    groups = [[v] for v in range(n)]
    alive = list(range(n))
    best, best_set = None, None
    while len(alive) > 1:
        weights = {v: 0 for v in alive}
        added: list[int] = []
        remaining = set(alive)
        while remaining:
            last = max(remaining, key=lambda v: (weights[v], -v))
            remaining.remove(last)
            added.append(last)
            for v in remaining:
                weights[v] += w[last][v]
        t, s_ = added[-1], added[-2]
        if best is None or weights[t] < best:
            best, best_set = weights[t], list(groups[t])
        groups[s_] += groups[t]
        for v in alive:
            w[s_][v] += w[t][v]
            w[v][s_] = w[s_][v]
        w[s_][s_] = 0
        alive.remove(t)
    side = [0] * n
    for v in best_set:
        side[v] = 1
    if side[0]:
        side = [1 - x for x in side]
    return best, side


def brute_force_mincut(g: GraphInstance) -> int:
    best = None
    for mask in range(1 << (g.n - 1)):
        side = [0] + [(mask >> i) & 1 for i in range(g.n - 1)]
        if not any(side):
            continue
        c = cut_value(g, side)
        best = c if best is None else min(best, c)
    return best


def ranks(sl: SuccessorList) -> list[int]:
    rank = [0] * sl.n
    for i, v in enumerate(sl.order()):
        rank[v] = i
    return rank


def precedes(sl: SuccessorList, a: int, b: int) -> bool:
    r = ranks(sl)
    return r[a] < r[b]


def oracle_struct_family(tag: str, inst) -> Answer:
    if tag not in STRUCT_TAGS:
        raise WrongTag(tag)
    if tag == "ord":
        return Answer.boolean(precedes(inst, inst.a, inst.b))
    if tag == "list_ranking":
        return Answer.values(ranks(inst))
    if tag == "msf":
        return Answer.edges(kruskal(inst))
    value, side = stoer_wagner(inst)
    return Answer.partition(value, side)


def solve(tag: str, inst) -> Answer:
    if tag in CONNECTIVITY_TAGS:
        return oracle_connectivity_family(tag, inst)
    if tag in PATH_TAGS:
        return oracle_path_family(tag, inst)
    return oracle_struct_family(tag, inst)


# --------------------------------------------------------------------------
# Brute force cross-checks


def brute_force_betweenness(g: GraphInstance) -> list[Fraction]:
    """Enumerate every simple path; only for tiny graphs."""
    adj = g.adjacency()
    matrix = _apsp_by_dijkstra(g)
    big = sentinel(g)
    bc = [Fraction(0)] * g.n
    for s_, t in itertools.permutations(range(g.n), 2):
        if matrix[s_][t] == big:
            continue
        target = matrix[s_][t]
        paths = []

        def walk(u, length, path):
            if length > target:
                return
            if u == t:
                if length == target:
                    paths.append(list(path))
                return
            for v, w in adj[u]:
                if v not in path:
                    path.append(v)
                    walk(v, length + w, path)
                    path.pop()

        walk(s_, 0, [s_])
        for p in paths:
            for v in p[1:-1]:
                bc[v] += Fraction(1, len(paths))
    if not g.directed:
        bc = [x / 2 for x in bc]
    return bc


# --------------------------------------------------------------------------
# Batched front end used as the default target solver


def _union_labels(sizes: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Min-id component labels (global ids) of a disjoint union of graphs."""
    total = int(sizes.sum())
    graph = coo_matrix((np.ones(len(u), np.int8), (u, v)), shape=(total, total))
    _, comp = connected_components(graph, directed=False)
    low = np.full(comp.max() + 1 if total else 0, total, np.int64)
    np.minimum.at(low, comp, np.arange(total, dtype=np.int64))
    return low[comp]


def solve_many(tag: str, heads: np.ndarray, edges: np.ndarray, directed: bool = False,
               weighted: bool = True) -> list[np.ndarray]:
    """Answer a batch of target instances given as flat arrays.

    ``heads`` rows are (instance, n, s, t, k) ordered by instance, with -1 for
    absent fields; ``edges`` rows are (instance, u, v, w) grouped by instance.
    Successor-list targets ("ord") store (i, succ_i) in the u, v columns and
    the query pair in s, t.  Each answer is an integer vector.
    """
    heads = np.asarray(heads, np.int64).reshape(-1, 5)
    edges = np.asarray(edges, np.int64).reshape(-1, 4)
    count = len(heads)
    sizes = heads[:, 1]
    bounds = np.searchsorted(edges[:, 0], np.arange(count + 1))
    if len(edges) and (np.any(edges[:, 1:3] < 0) or np.any(edges[:, 1:3] >= sizes[edges[:, 0], None])):
        if tag != "ord":
            raise ValueError("target edge endpoint out of range")

    if tag in ("cc_labels", "st_connectivity", "connectivity", "num_cc", "cycle_count", "bipartiteness"):
        if directed:
            raise WrongTag(f"{tag} is for undirected targets")
        offset = np.r_[0, np.cumsum(sizes)[:-1]].astype(np.int64)
        base = offset[edges[:, 0]]
        u, v = base + edges[:, 1], base + edges[:, 2]
        if tag == "bipartiteness":
            total = int(sizes.sum())
            lab = _union_labels(np.array([2 * total]), np.r_[u, u + total], np.r_[v + total, v])
            odd = lab[:total] == lab[total:]
            return [np.array([int(not odd[offset[i]:offset[i] + sizes[i]].any())]) for i in range(count)]
        if tag == "cycle_count":
            deg = np.bincount(np.r_[u, v], minlength=int(sizes.sum()))
            if np.any(deg != 2):
                raise PromiseViolation("target is not a union of cycles")
        lab = _union_labels(sizes, u, v)
        local = lab - np.repeat(offset, sizes)
        out = []
        for i in range(count):
            li = local[offset[i]:offset[i] + sizes[i]]
            roots = int(np.count_nonzero(li == np.arange(sizes[i])))
            if tag == "cc_labels":
                out.append(li.copy())
            elif tag == "st_connectivity":
                out.append(np.array([int(li[heads[i, 2]] == li[heads[i, 3]])]))
            elif tag == "connectivity":
                out.append(np.array([int(roots <= 1)]))
            else:
                out.append(np.array([roots]))
        return out

    cache: dict = {}
    out = []
    for i in range(count):
        body = edges[bounds[i]:bounds[i + 1], 1:]
        n = int(sizes[i])
        key = (n, body.tobytes())
        if key not in cache:
            rows = tuple(map(tuple, body.tolist()))
            if tag == "ord":
                succ = [-1] * n
                for a, b, _ in rows:
                    succ[a] = b
                cache[key] = [SuccessorList(n, tuple(succ)), {}]
            else:
                cache[key] = [GraphInstance(n, rows, directed=directed, weighted=weighted), {}]
        inst, memo = cache[key]
        q = int(heads[i, 2])
        if tag == "ord":
            if "rank" not in memo:
                memo["rank"] = ranks(inst)
            r = memo["rank"]
            out.append(np.array([int(r[heads[i, 2]] < r[heads[i, 3]])]))
        elif tag in ("shortest_path", "sssp", "st_reachability"):
            if q not in memo:
                memo[q] = dijkstra(inst, q)
            dist = memo[q]
            big = sentinel(inst)
            if tag == "sssp":
                out.append(np.array([big if x is None else x for x in dist], np.int64))
            else:
                d = dist[heads[i, 3]]
                out.append(np.array([int(d is not None) if tag == "st_reachability"
                                     else (big if d is None else d)], np.int64))
        elif tag == "betweenness":
            if "bc" not in memo:
                memo["bc"] = np.array([x.numerator // x.denominator for x in betweenness(inst)], np.int64)
            bc = memo["bc"]
            out.append(bc[[q]] if q >= 0 else bc.copy())
        elif tag in ("diameter", "radius", "median"):
            if tag not in memo:
                memo[tag] = oracle_path_family(tag, inst).value
            out.append(np.array([memo[tag]], np.int64))
        else:
            raise WrongTag(f"no batched solver for {tag}")
    return out
