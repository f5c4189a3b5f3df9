"""Reductions inside the shortest-path class.

The distance-aggregate reductions share one gadget G': the input graph plus
an apex joined to every node with weight nM and two chains of 2n weight-M
edges hanging off s and t.  Node ids in G':

    0 .. n-1        input nodes
    n               apex
    n+1 .. 3n       chain at s, ending in a = 3n
    3n+1 .. 5n      chain at t, ending in b = 5n

The longest shortest path of G' runs from a to b and has length 4nM + alpha
with alpha = min(d(s, t), 2nM).  For directed inputs the chains carry weight
M only in the direction that walks away from the input graph, and weight 0
back, so the far ends stay mutually reachable without creating a longer
pair in the reverse direction.
"""
from __future__ import annotations

import numpy as np

from .. import oracles
from ..engine import Send, Table
from ..graphs import Answer, BadParams, GraphInstance
from ..primitives import aggregate, lookup
from .base import (EDGE_W, Answers, TargetBatch, UniquenessFailure, append, edge_rows, fan_out,
                   generate, grid_records, head_rows, normalize, ordered_pair_index)
from .core import Reduction


def _query(inst: GraphInstance):
    if inst.s is None or inst.t is None:
        raise BadParams("the query needs s and t")


def gadget(n: int, s: int, t: int, M: int, directed: bool, scale: int = 1,
           balanced: bool = False) -> np.ndarray:
    """Rows (u, v, w) of G' beyond the input edges.

    ``balanced`` gives directed chains weight M both ways, which keeps
    distance sums symmetric around the glue node of G''.
    """
    v = np.arange(n, dtype=np.int64)
    apex = np.full(n, n, np.int64)
    cs = np.r_[s, np.arange(n + 1, 3 * n + 1)]
    ct = np.r_[t, np.arange(3 * n + 1, 5 * n + 1)]
    rows = [np.column_stack([apex, v, np.full(n, n * M * scale)])]
    if directed:
        rows.append(np.column_stack([v, apex, np.full(n, n * M * scale)]))
        rows.append(np.column_stack([cs[1:], cs[:-1], np.full(2 * n, M * scale)]))
        back = np.full(2 * n, M * scale if balanced else 0, np.int64)
        rows.append(np.column_stack([cs[:-1], cs[1:], back]))
        rows.append(np.column_stack([ct[:-1], ct[1:], np.full(2 * n, M * scale)]))
        rows.append(np.column_stack([ct[1:], ct[:-1], back]))
    else:
        rows.append(np.column_stack([cs[:-1], cs[1:], np.full(2 * n, M * scale)]))
        rows.append(np.column_stack([ct[:-1], ct[1:], np.full(2 * n, M * scale)]))
    return np.vstack(rows).astype(np.int64)


def mirror(x, n: int):
    """Node x of the second copy inside G'': its a is glued to b of the first copy."""
    x = np.asarray(x, np.int64)
    return np.where(x < 3 * n, 5 * n + 1 + x, np.where(x == 3 * n, 5 * n, 5 * n + x))


def double_gadget(n, s, t, M, directed, balanced=False) -> np.ndarray:
    """Gadget rows of G'': copy 1 (transposed if directed) and the mirrored copy 2."""
    g = gadget(n, s, t, M, directed, balanced=balanced)
    first = g[:, [1, 0, 2]] if directed else g
    second = np.column_stack([mirror(g[:, 0], n), mirror(g[:, 1], n), g[:, 2]])
    return np.vstack([first, second])


def unpack_alpha(total: int, n: int, M: int) -> int:
    """Distance from a far-end length 4nM + alpha; sentinel when only the apex links s and t."""
    alpha = total - 4 * n * M
    return alpha if alpha <= (n - 1) * M else n * M + 1


def _rows_generator(rows: np.ndarray, copies: int, inst_of=lambda c: c):
    L = len(rows)

    def fn(r):
        c = r // L
        e = rows[r % L]
        return edge_rows(inst_of(c), e[:, 0], e[:, 1], e[:, 2])
    return L * copies, fn


class _GadgetReduction(Reduction):
    source = "shortest_path"
    directed = None

    def check(self, inst):
        super().check(inst)
        _query(inst)

    def demand(self, inst):
        return 400 * (inst.words + 12 * inst.n) + 256

    def _body(self, run, E=1, K=1, out_words=EDGE_W, name="body"):
        lay = normalize(run.cl, "edges", run.in_machines, 1, out_words=out_words)
        run.cl.drop("head")
        grid = fan_out(run.cl, [name], lay.body, E=E, K=K, degree=self.degree)
        return lay, grid


class SpToDiameter(_GadgetReduction):
    tag = "sp-to-diameter"
    target = "diameter"

    def transform(self, run):
        cl, g = run.cl, run.inst
        n, M = g.n, g.M
        _, grid = self._body(run)
        bt, _, _, _ = grid_records(cl, "body", grid, 4)
        cl.drop("body")
        append(cl, "t_edges", Table(EDGE_W, bt.mach, edge_rows(0, bt.col(0), bt.col(1), bt.col(2))))
        count, fn = _rows_generator(gadget(n, g.s, g.t, M, g.directed), 1)
        generate(cl, "t_edges", count, EDGE_W, fn)
        generate(cl, "t_head", 1, 5, lambda r: head_rows(r, 5 * n + 1))
        return TargetBatch("diameter", 1, directed=g.directed)

    def extract(self, run, answers):
        g = run.inst
        return Answer.integer(unpack_alpha(int(run.cl["t_answer"].col(2)[0]), g.n, g.M))


def _double_body(cl, g, grid, copies):
    """Input edges of G'' for every copy: lane 0 is copy 1, lane 1 the mirror."""
    bt, c, lane, _ = grid_records(cl, "body", grid, 4)
    cl.drop("body")
    u, v, w = bt.col(0), bt.col(1), bt.col(2)
    if g.directed:
        u, v = np.where(lane == 0, v, u), np.where(lane == 0, u, v)
    u = np.where(lane == 1, mirror(u, g.n), u)
    v = np.where(lane == 1, mirror(v, g.n), v)
    append(cl, "t_edges", Table(EDGE_W, bt.mach, edge_rows(copies(c), u, v, w)))


class SpToRadius(_GadgetReduction):
    """G'' glues b of one copy of G' to a of another; the glue node is the
    center and its eccentricity equals the diameter of G'."""

    tag = "sp-to-radius"
    target = "radius"

    def transform(self, run):
        cl, g = run.cl, run.inst
        n, M = g.n, g.M
        _, grid = self._body(run, E=2)
        _double_body(cl, g, grid, lambda c: c)
        count, fn = _rows_generator(double_gadget(n, g.s, g.t, M, g.directed), 1)
        generate(cl, "t_edges", count, EDGE_W, fn)
        generate(cl, "t_head", 1, 5, lambda r: head_rows(r, 10 * n + 1))
        return TargetBatch("radius", 1, directed=g.directed)

    def extract(self, run, answers):
        g = run.inst
        return Answer.integer(unpack_alpha(int(run.cl["t_answer"].col(2)[0]), g.n, g.M))


def median_extras(n: int, M: int) -> np.ndarray:
    """Pendant nodes of G''' at the two far ends of G'', both directions."""
    a2, b2 = 10 * n + 1, 10 * n + 2
    far_a, far_b = 3 * n, int(mirror(5 * n, n))
    return np.array([[far_a, a2, M], [a2, far_a, M], [far_b, b2, M], [b2, far_b, M]], np.int64)


class SpToMedian(_GadgetReduction):
    tag = "sp-to-median"
    target = "median"

    def transform(self, run):
        cl, g = run.cl, run.inst
        n, M = g.n, g.M
        _, grid = self._body(run, E=2, K=2)
        _double_body(cl, g, grid, lambda c: c)
        count, fn = _rows_generator(double_gadget(n, g.s, g.t, M, g.directed, balanced=True), 2)
        generate(cl, "t_edges", count, EDGE_W, fn)
        extra = median_extras(n, M)
        if not g.directed:
            extra = extra[::2]
        count, fn = _rows_generator(extra, 1, lambda c: c + 1)
        generate(cl, "t_edges", count, EDGE_W, fn)
        generate(cl, "t_head", 2, 5, lambda r: head_rows(r, 10 * n + 1 + 2 * r))
        return TargetBatch("median", 2, directed=g.directed)

    def extract(self, run, answers):
        cl, g = run.cl, run.inst
        t = cl["t_answer"]
        # the G''' value joins the G'' value on its machine
        second = t.where(t.col(0) == 1)
        home = int(answers.machine(0, 0))
        cl.exchange([Send("_median", second.mach, np.full(len(second), home), second.data[:, 2:3])])
        low = int(t.col(2)[t.col(0) == 0][0])
        high = int(cl["_median"].col(0)[0])
        cl.drop("_median")
        # the center reaches both pendants at distance diam(G') + M
        diam = (high - low) // 2 - g.M
        return Answer.integer(unpack_alpha(diam, g.n, g.M))


# --------------------------------------------------------------------------
# Betweenness


def perturbation_scale(n: int) -> tuple[int, int]:
    """(S, top): weights become S*w + offset with offset in [1, top]."""
    n = max(n, 2)
    return n ** 7, n ** 5


class SpToBetweenness(_GadgetReduction):
    """Random offsets make every shortest path unique; the input nodes whose
    betweenness in G' reaches 4n^2 are then exactly the s-t path."""

    tag = "sp-to-betweenness"
    target = "betweenness"

    def demand(self, inst):
        return 400 * inst.n * (inst.words + 12 * inst.n) + 256

    def transform(self, run):
        cl, g = run.cl, run.inst
        n, M = g.n, g.M
        S, top = perturbation_scale(n)
        lay = normalize(cl, "edges", run.in_machines, 1, out_words=2 * EDGE_W)
        cl.drop("head")
        body = cl["body"]
        off = cl.rng(0xBE7).integers(1, top + 1, size=len(body), dtype=np.int64)
        data = body.data.copy()
        data[:, 2] = data[:, 2] * S + off
        cl.local({"body": Table(4, body.mach, data)})
        grid = fan_out(cl, ["body"], lay.body, K=n, degree=self.degree)
        bt, c, _, _ = grid_records(cl, "body", grid, 4)
        cl.drop("body")
        cl.local({"orig": bt.where(c == 0)})
        append(cl, "t_edges", Table(EDGE_W, bt.mach, edge_rows(c, bt.col(0), bt.col(1), bt.col(2))))
        count, fn = _rows_generator(gadget(n, g.s, g.t, M, g.directed, scale=S), n)
        generate(cl, "t_edges", count, EDGE_W, fn)
        generate(cl, "t_head", n, 5, lambda r: head_rows(r, 5 * n + 1, r))
        run.state["body"] = lay.body
        return TargetBatch("betweenness", n, directed=g.directed)

    def extract(self, run, answers):
        cl, g = run.cl, run.inst
        n = g.n
        S, _ = perturbation_scale(n)
        t = cl["t_answer"]
        flag = (t.col(2) >= 4 * n * n).astype(np.int64)
        cl.local({"_flags": Table(2, t.mach, np.column_stack([t.col(0), flag]))})
        rmach = lookup(cl, cl["_flags"], n, "orig", run.state["body"], (0, 1), "_ends", self.degree)
        ends = cl["_ends"]
        cl.drop("_flags", "orig", "_ends")
        both = ends.col(4) & ends.col(5)
        base, leaves = answers.base, rmach.stop - answers.base
        recs = Table.build(np.r_[ends.mach, t.mach], np.vstack([
            np.column_stack([np.zeros(len(ends), np.int64), ends.mach - base, both * (ends.col(2) // S), both,
                             np.zeros(len(ends), np.int64)]),
            np.column_stack([np.zeros(len(t), np.int64), t.mach - base, np.zeros((len(t), 2), np.int64), flag])]))
        # n answer vectors of length 5n+1 span about n^2 leaves
        aggregate(cl, recs, ["sum", "sum", "sum"], 1, leaves, "_path", 2.0)
        _, length, edges, nodes = (int(x) for x in cl["_path"].data[0])
        cl.drop("_path")
        if g.s == g.t:
            return Answer.integer(0)
        if edges == 0:
            return Answer.integer(oracles.sentinel(g))
        if edges != nodes - 1:
            raise UniquenessFailure(f"{nodes} marked nodes but {edges} edges among them")
        return Answer.integer(length)


def betweenness_promise(g: GraphInstance) -> bool:
    """Whether the marking step provably isolates the s-t path on ``g``.

    Requires a unique, chordless shortest s-t path (or none), and every
    other input node to lie on fewer than 4n^2 shortest paths of G' even
    counting ties, which bounds its betweenness under any perturbation.
    """
    n, s, t = g.n, g.s, g.t
    if s == t:
        return True
    dist = oracles.dijkstra(g, s)
    if dist[t] is None:
        # the apex route marks s and t, so any arc between them would be summed
        path = {s, t}
        if any({u, v} == path for u, v, _ in g.edges):
            return False
    else:
        back = oracles.dijkstra(_transpose(g), t)
        on = [v for v in range(n) if dist[v] is not None and back[v] is not None and dist[v] + back[v] == dist[t]]
        by_depth = sorted(on, key=lambda v: dist[v])
        if len({dist[v] for v in on}) != len(on):
            return False
        path = set(on)
        steps = {(by_depth[i], by_depth[i + 1]) for i in range(len(by_depth) - 1)}
        for u, v, _ in g.edges:
            if u in path and v in path and (u, v) not in steps and ((v, u) not in steps or g.directed):
                return False
    gp = GraphInstance(5 * n + 1, tuple(map(tuple, np.vstack([np.array(g.edges, np.int64).reshape(-1, 3),
                                                                gadget(n, s, t, g.M, g.directed)]).tolist())),
                       directed=g.directed, weighted=True)
    D = np.array(oracles._apsp_by_dijkstra(gp), np.int64)
    big = oracles.sentinel(gp)
    off_diag = ~np.eye(gp.n, dtype=bool)
    for u in range(n):
        if u in path:
            continue
        hit = (D[:, u, None] + D[None, u, :] == D) & (D < big) & off_diag
        hit[u, :] = hit[:, u] = False
        through = int(hit.sum()) if g.directed else int(hit.sum()) // 2
        if through >= 4 * n * n:
            return False
    return True


def _transpose(g: GraphInstance) -> GraphInstance:
    if not g.directed:
        return g
    return GraphInstance(g.n, tuple((v, u, w) for u, v, w in g.edges), directed=True, weighted=g.weighted,
                         s=g.s, t=g.t)


# --------------------------------------------------------------------------
# Layered reachability constructions


class StreachToSp(Reduction):
    """Layer i holds a copy v_i = i*n + v of every node; arcs step one layer
    forward and every node may idle to its next-layer copy.  t is reachable
    from s exactly when d(s_0, t_{n-1}) = n - 1."""

    tag = "streach-to-sp"
    source = "st_reachability"
    target = "shortest_path"
    directed = None

    def check(self, inst):
        super().check(inst)
        _query(inst)

    def demand(self, inst):
        return 200 * inst.n * (inst.words + inst.n) + 256

    def transform(self, run):
        cl, g = run.cl, run.inst
        n = g.n
        lay = normalize(cl, "edges", run.in_machines, 1, out_words=EDGE_W)
        cl.drop("head")
        # lane 1 carries the reversed arcs; directed inputs build it too and
        # discard it, so both orientations share one schedule
        grid = fan_out(cl, ["body"], lay.body, E=2, K=max(1, n - 1), degree=self.degree)
        bt, i, lane, _ = grid_records(cl, "body", grid, 4)
        cl.drop("body")
        u = np.where(lane == 0, bt.col(0), bt.col(1))
        v = np.where(lane == 0, bt.col(1), bt.col(0))
        keep = (u != v) & (n > 1) & ((lane == 0) | (not g.directed))
        append(cl, "t_edges", Table(EDGE_W, bt.mach[keep],
                                    edge_rows(0, i[keep] * n + u[keep], (i[keep] + 1) * n + v[keep], 1)))
        generate(cl, "t_edges", n * (n - 1), EDGE_W, lambda r: edge_rows(0, r, r + n, 1))
        generate(cl, "t_head", 1, 5, lambda r: head_rows(r, n * n, g.s, (n - 1) * n + g.t))
        return TargetBatch("shortest_path", 1, weighted=False)

    def extract(self, run, answers):
        return Answer.boolean(int(run.cl["t_answer"].col(2)[0]) == run.inst.n - 1)


class SpToStreach(Reduction):
    """Does d(s, t) equal the bound b (the k field)?  Instance 0 has b + 1
    layers and answers d <= b, instance 1 has b layers and answers d <= b - 1."""

    tag = "sp-to-streach"
    source = "shortest_path"
    target = "st_reachability"

    def check(self, inst):
        super().check(inst)
        _query(inst)
        if inst.weighted and any(w != 1 for _, _, w in inst.edges):
            raise BadParams("the layered construction counts hops; weights must be 1")
        if inst.k is None or not 1 <= inst.k <= max(1, inst.n - 1):
            raise BadParams("the bound b must lie in [1, n-1]")

    def expected(self, inst):
        d = oracles.dijkstra(inst, inst.s)[inst.t]
        return Answer.boolean(d == inst.k)

    def demand(self, inst):
        return 200 * inst.n * (inst.words + inst.n) + 256

    def transform(self, run):
        cl, g = run.cl, run.inst
        n, b = g.n, g.k
        lay = normalize(cl, "edges", run.in_machines, 1, out_words=EDGE_W)
        cl.drop("head")
        grid = fan_out(cl, ["body"], lay.body, E=2, K=2 * b - 1, degree=self.degree)
        bt, c, lane, _ = grid_records(cl, "body", grid, 4)
        cl.drop("body")
        u = np.where(lane == 0, bt.col(0), bt.col(1))
        v = np.where(lane == 0, bt.col(1), bt.col(0))
        inst = (c >= b).astype(np.int64)
        layer = c - inst * b
        append(cl, "t_edges", Table(EDGE_W, bt.mach, edge_rows(inst, layer * n + u, (layer + 1) * n + v, 1)))
        # idle arcs: b*n of them in instance 0, (b-1)*n in instance 1
        generate(cl, "t_edges", (2 * b - 1) * n, EDGE_W,
                 lambda r: edge_rows((r >= b * n).astype(np.int64), r - (r >= b * n) * b * n,
                                     r - (r >= b * n) * b * n + n, 1))
        generate(cl, "t_head", 2, 5,
                 lambda r: head_rows(r, (b + 1 - r) * n, g.s, (b - r) * n + g.t))
        return TargetBatch("st_reachability", 2, directed=True, weighted=False)

    def extract(self, run, answers):
        cl = run.cl
        t = cl["t_answer"]
        home = int(answers.machine(0, 0))
        second = t.where(t.col(0) == 1)
        cl.exchange([Send("_r1", second.mach, np.full(len(second), home), second.data[:, 2:3])])
        r0 = int(t.col(2)[t.col(0) == 0][0])
        r1 = int(cl["_r1"].col(0)[0])
        cl.drop("_r1")
        return Answer.boolean(r0 == 1 and r1 == 0)


# --------------------------------------------------------------------------
# All pairs


class ApspViaSp(Reduction):
    tag = "apsp-via-sp"
    source = "apsp"
    target = "shortest_path"
    directed = None
    degree = 2.0

    def check(self, inst):
        super().check(inst)
        if inst.n < 2:
            raise BadParams("all pairs needs n >= 2")

    def demand(self, inst):
        return 60 * inst.n * inst.n * (inst.words + 8) + 256

    def transform(self, run):
        cl, g = run.cl, run.inst
        n = g.n
        K = n * (n - 1)
        lay = normalize(cl, "edges", run.in_machines, 1, out_words=EDGE_W)
        cl.drop("head")
        grid = fan_out(cl, ["body"], lay.body, K=K, degree=self.degree)
        bt, c, _, _ = grid_records(cl, "body", grid, 4)
        cl.drop("body")
        append(cl, "t_edges", Table(EDGE_W, bt.mach, edge_rows(c, bt.col(0), bt.col(1), bt.col(2))))
        generate(cl, "t_head", K, 5, lambda r: head_rows(r, n, *ordered_pair_index(r, n)))
        return TargetBatch("shortest_path", K, directed=g.directed, weighted=g.weighted)

    def extract(self, run, answers):
        # the answers already sit in row-major pair order; reading them is local
        n = run.inst.n
        t = run.cl["t_answer"]
        u, v = ordered_pair_index(t.col(0), n)
        mat = np.zeros((n, n), np.int64)
        mat[u, v] = t.col(2)
        return Answer.values(tuple(tuple(int(x) for x in row) for row in mat))
