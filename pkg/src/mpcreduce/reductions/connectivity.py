"""Reductions inside the undirected connectivity class."""
from __future__ import annotations

import math

import numpy as np

from .. import oracles
from ..engine import Cluster, MpcConfig, Send, Table
from ..graphs import Answer, BadParams, GraphInstance, SuccessorList, distribute
from ..primitives import aggregate, broadcast, random_permutation, replicate
from .base import (EDGE_W, NONE, Answers, TargetBatch, grid_records, append, edge_rows, fan_out,
                   generate, head_rows, normalize, pair_index)
from .core import Reduction, Run, solve_targets


# --------------------------------------------------------------------------
# ORD -> one cycle vs two cycles


def ord_to_cycles_program(cl: Cluster, n: int, a: np.ndarray, b: np.ndarray, in_machines: int) -> TargetBatch:
    """Transform a batch of ORD instances, instance i on its own input machines.

    Removing the arcs into a and b, forgetting directions and adding
    {source, a}, {pred a, pred b}, {b, sink} leaves two cycles exactly when
    a precedes b.  Source, sink and predecessors come from one aggregation.
    """
    I = len(a)
    lay = normalize(cl, "succ", in_machines, I, out_words=EDGE_W)
    body = cl["body"]
    rel = body.mach - lay.body.start
    inst = rel // lay.B
    i, nxt = body.col(0), body.col(1)
    vals = np.column_stack([
        np.where(nxt >= 0, nxt, 0),
        np.where(nxt == a[inst], i, NONE),
        np.where(nxt == b[inst], i, NONE),
        np.where(nxt < 0, i, NONE)])
    recs = Table(6, body.mach, np.column_stack([inst, rel % lay.B, vals]))
    agg = aggregate(cl, recs, ["sum", "max", "max", "max"], I, lay.B, "_ordagg", 1.0,
                    empty=[0, NONE, NONE, NONE])
    info = cl["_ordagg"]
    cl.exchange([Send("_ordinfo", info.mach, lay.heads.start + info.col(0), info.data[:, 1:])],
                replace={"_ordagg": None})
    got = cl["_ordinfo"]
    head = cl["head"]
    src = n * (n - 1) // 2 - got.col(0)
    merged = np.column_stack([head.data, src, got.data[:, 1:]])
    cl.local({"_ordinfo": None, "head": Table(7, head.mach, merged)})

    grid = fan_out(cl, ["head", "body"], lay.span, E=4)
    h, _, lane, x = grid_records(cl, "head", grid, 7)
    d = h.data
    hi = x  # head x belongs to instance x
    # head words: n, a, b, source, pred a, pred b, sink
    a_src, b_src = d[:, 1] == d[:, 3], d[:, 2] == d[:, 3]
    # a at the source: {a, pred b} closes a..pred b; b at the source:
    # {pred a, sink} joins b..pred a and a..sink into one cycle
    ends = {1: (d[:, 3], d[:, 1], ~a_src),
            2: (np.where(a_src, d[:, 1], d[:, 4]), d[:, 5], ~b_src),
            3: (np.where(b_src, d[:, 4], d[:, 2]), d[:, 6], np.ones(len(d), bool))}
    rows = []
    for j, (p, q, ok) in ends.items():
        sel = (lane == j) & ok
        rows.append(Table(EDGE_W, h.mach[sel], edge_rows(hi[sel], p[sel], q[sel], 1)))
    sel = lane == 0
    heads_t = Table(5, h.mach[sel], head_rows(hi[sel], n))
    bt, _, blane, bx = grid_records(cl, "body", grid, 3)
    binst = (bx - I) // lay.B
    keep = (blane == 0) & (bt.col(1) >= 0) & (bt.col(1) != a[binst]) & (bt.col(1) != b[binst])
    rows.append(Table(EDGE_W, bt.mach[keep], edge_rows(binst[keep], bt.col(0)[keep], bt.col(1)[keep], 1)))
    cl.drop("head", "body")
    append(cl, "t_head", heads_t)
    for r in rows:
        append(cl, "t_edges", r)
    return TargetBatch("cycle_count", I, weighted=False)


def ord_answers(cl: Cluster, answers: Answers) -> np.ndarray:
    """Local on each answer machine: two cycles means a precedes b."""
    t = cl["t_answer"]
    out = np.zeros(answers.count, bool)
    out[t.col(0)] = t.col(2) == 2
    return out


class OrdToCycles(Reduction):
    tag = "ord-to-cycles"
    source = "ord"
    target = "cycle_count"
    kind = "successor"

    def check(self, inst):
        super().check(inst)
        inst.order()
        if inst.n < 3 or inst.a is None or inst.b is None:
            raise BadParams("ORD needs n >= 3 and both a and b")
        if inst.a == inst.b:
            raise BadParams("a and b must differ")

    def demand(self, inst):
        return 400 * inst.words

    def transform(self, run):
        sl = run.inst
        return ord_to_cycles_program(run.cl, sl.n, np.array([sl.a]), np.array([sl.b]), run.in_machines)

    def extract(self, run, answers):
        return Answer.boolean(ord_answers(run.cl, answers)[0])


# --------------------------------------------------------------------------
# List ranking via ORD


class ListRankingViaOrd(Reduction):
    tag = "list-ranking-via-ord"
    source = "list_ranking"
    target = "ord"
    kind = "successor"
    degree = 2.0

    def check(self, inst):
        super().check(inst)
        inst.order()
        if inst.n < 2:
            raise BadParams("list ranking needs n >= 2")

    def demand(self, inst):
        n = inst.n
        return 40 * (n * (n - 1) // 2 + 1) * (3 * n + 8)

    def transform(self, run):
        cl, n = run.cl, run.inst.n
        lay = normalize(cl, "succ", run.in_machines, 1, out_words=EDGE_W)
        K = n * (n - 1) // 2
        grid = fan_out(cl, ["head", "body"], lay.span, K=K, degree=self.degree)
        run.state["K"] = K
        h, c, _, _ = grid_records(cl, "head", grid, 3)
        pa, pb = pair_index(c, n)
        bt, bc, _, _ = grid_records(cl, "body", grid, 3)
        cl.drop("head", "body")
        append(cl, "t_head", Table(5, h.mach, head_rows(c, n, pa, pb)))
        append(cl, "t_edges", Table(EDGE_W, bt.mach, edge_rows(bc, bt.col(0), bt.col(1), 0)))
        return TargetBatch("ord", K, directed=True, weighted=False)

    def extract(self, run, answers):
        cl, n, K = run.cl, run.inst.n, run.state["K"]
        t = cl["t_answer"]
        c, yes = t.col(0), t.col(2)
        a, b = pair_index(c, n)
        recs = Table.build(np.r_[t.mach, t.mach],
                           np.column_stack([np.r_[b, a], np.r_[c, c], np.r_[yes, 1 - yes]]))
        aggregate(cl, recs, ["sum"], n, K, "ranks", self.degree)
        r = cl["ranks"]
        ranks = np.zeros(n, np.int64)
        ranks[r.col(0)] = r.col(1)
        return Answer.values(tuple(int(x) for x in ranks))


# --------------------------------------------------------------------------
# st-connectivity <-> bipartiteness


class StconnToBipartiteness(Reduction):
    tag = "stconn-to-bipartiteness"
    source = "st_connectivity"
    target = "bipartiteness"

    def check(self, inst):
        super().check(inst)
        if inst.s is None or inst.t is None:
            raise BadParams("st-connectivity needs s and t")

    def demand(self, inst):
        return 120 * inst.words + 64

    def transform(self, run):
        cl, g = run.cl, run.inst
        n = g.n
        lay = normalize(cl, "edges", run.in_machines, 1, out_words=EDGE_W)
        S = lay.slots
        grid = fan_out(cl, ["head", "body"], lay.span, E=4)
        bt, _, lane, _ = grid_records(cl, "body", grid, 4)
        u, v, gid = bt.col(0), bt.col(1), bt.col(3)
        e, e2 = 2 * n + gid, 2 * n + S + gid
        ends = np.select([lane == 0, lane == 1, lane == 2], [u, e, n + u], e2)
        other = np.select([lane == 0, lane == 1, lane == 2], [e, v, e2], n + v)
        w_node = 2 * n + 2 * S
        h, _, hlane, _ = grid_records(cl, "head", grid, 2)
        x = np.select([hlane == 1, hlane == 2], [g.s, g.t], n + g.t)
        y = np.select([hlane == 1, hlane == 2], [n + g.s, w_node], w_node)
        first = hlane == 0
        cl.drop("head", "body")
        append(cl, "t_head", Table(5, h.mach[first], head_rows(np.zeros(1, np.int64), w_node + 1)))
        append(cl, "t_edges", Table(EDGE_W, bt.mach, edge_rows(0, ends, other, 1)))
        append(cl, "t_edges", Table(EDGE_W, h.mach[~first], edge_rows(0, x[~first], y[~first], 1)))
        return TargetBatch("bipartiteness", 1, weighted=False)

    def extract(self, run, answers):
        # an odd cycle exists exactly when s reaches t
        return Answer.boolean(run.cl["t_answer"].col(2)[0] == 0)


class BipartitenessToStconn(Reduction):
    tag = "bipartiteness-to-stconn"
    source = "bipartiteness"
    target = "st_connectivity"

    def demand(self, inst):
        return 80 * (inst.n + 1) * inst.words + 64

    def transform(self, run):
        cl, g = run.cl, run.inst
        n = g.n
        lay = normalize(cl, "edges", run.in_machines, 1, out_words=EDGE_W)
        grid = fan_out(cl, ["body"], lay.body, E=2, K=n, degree=self.degree)
        bt, c, lane, _ = grid_records(cl, "body", grid, 4)
        u, v = bt.col(0), bt.col(1)
        # copy 0 of x is x, copy 1 is n + x; replica c joins s = 2n to c and t = 2n + 1 to n + c
        ends = np.where(lane == 0, u, n + u)
        other = np.where(lane == 0, n + v, v)
        cl.drop("body", "head")
        append(cl, "t_edges", Table(EDGE_W, bt.mach, edge_rows(c, ends, other, 1)))
        generate(cl, "t_head", n, 5, lambda r: head_rows(r, 2 * n + 2, 2 * n, 2 * n + 1))
        generate(cl, "t_edges", 2 * n, EDGE_W,
                 lambda r: edge_rows(r // 2, np.where(r % 2 == 0, 2 * n, 2 * n + 1),
                                     np.where(r % 2 == 0, r // 2, n + r // 2), 1))
        return TargetBatch("st_connectivity", n, weighted=False)

    def extract(self, run, answers):
        cl, n = run.cl, run.inst.n
        t = cl["t_answer"]
        recs = Table(3, t.mach, np.column_stack([np.zeros(len(t), np.int64), t.col(0), t.col(2)]))
        aggregate(cl, recs, ["max"], 1, n, "odd", self.degree)
        return Answer.boolean(cl["odd"].col(1)[0] == 0)


# --------------------------------------------------------------------------
# Connected components via st-connectivity


class CcViaStconn(Reduction):
    tag = "cc-via-stconn"
    source = "cc_labels"
    target = "st_connectivity"
    degree = 2.0

    def demand(self, inst):
        return 60 * inst.n ** 2 * (inst.words + 8) + 64

    def transform(self, run):
        cl, g = run.cl, run.inst
        n = g.n
        lay = normalize(cl, "edges", run.in_machines, 1, out_words=EDGE_W)
        grid = fan_out(cl, ["body"], lay.body, K=n * n, degree=self.degree)
        bt, c, _, _ = grid_records(cl, "body", grid, 4)
        cl.drop("body", "head")
        append(cl, "t_edges", Table(EDGE_W, bt.mach, edge_rows(c, bt.col(0), bt.col(1), 1)))
        generate(cl, "t_head", n * n, 5, lambda r: head_rows(r, n, r // n, r % n))
        return TargetBatch("st_connectivity", n * n, weighted=False)

    def extract(self, run, answers):
        cl, n = run.cl, run.inst.n
        t = cl["t_answer"]
        c = t.col(0)
        u, x = c // n, c % n
        recs = Table(3, t.mach, np.column_stack([u, x, np.where(t.col(2) == 1, x, n)]))
        aggregate(cl, recs, ["min"], n, n, "labels", self.degree)
        lab = cl["labels"]
        out = np.zeros(n, np.int64)
        out[lab.col(0)] = lab.col(1)
        return Answer.labels(out)


# --------------------------------------------------------------------------
# Minimum spanning forest via st-connectivity


def _lighter(rec: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Strict order (w, min end, max end, slot) of rec below q, row-wise."""
    a = np.column_stack([rec[:, 2], np.minimum(rec[:, 0], rec[:, 1]), np.maximum(rec[:, 0], rec[:, 1]), rec[:, 3]])
    b = np.column_stack([q[:, 2], np.minimum(q[:, 0], q[:, 1]), np.maximum(q[:, 0], q[:, 1]), q[:, 3]])
    less = np.zeros(len(a), bool)
    equal = np.ones(len(a), bool)
    for j in range(4):
        less |= equal & (a[:, j] < b[:, j])
        equal &= a[:, j] == b[:, j]
    return less


class MsfViaStconn(Reduction):
    tag = "msf-via-stconn"
    source = "msf"
    target = "st_connectivity"

    def demand(self, inst):
        return 80 * (inst.m + 2) * (inst.words + 16) + 64

    def transform(self, run):
        cl, g = run.cl, run.inst
        n = g.n
        # a body machine of copy 0 ends up holding its input edges and its target edges
        lay = normalize(cl, "edges", run.in_machines, 1, out_words=2 * EDGE_W, reserve=EDGE_W)
        S, per = lay.slots, lay.per
        grid = fan_out(cl, ["head", "body"], lay.span, K=S, degree=self.degree)
        run.state.update(lay=lay, grid=grid)
        # copy c asks about slot c: its owner sends it to query machine c, which
        # then broadcasts it to the head and body machines of copy c
        bt, c, _, x = grid_records(cl, "body", grid, 4)
        mine = bt.col(3) == c
        Q = cl.provision(S)
        cl.exchange([Send("query", bt.mach[mine], Q.start + c[mine], bt.data[mine])])
        W = grid.width
        targets = grid.machine(np.arange(S)[None, :], 0, np.arange(W)[:, None])
        replicate(cl, ["query"], Q, W + 1, self.degree, targets=targets)
        qt = cl.get("query", 4)
        qt = qt.where(grid.contains(qt.mach))
        cl.local({"query": None})
        qc, _, qx = grid.locate(qt.mach)
        have = np.zeros(S, bool)
        qrow = np.zeros((S, 4), np.int64)
        # each machine reads the query it received; the arrays below are just
        # a vectorized lookup of "the query on my machine"
        on_body = qx > 0
        have[qc[on_body]] = True
        qrow[qc[on_body]] = qt.data[on_body]
        keep = _lighter(bt.data, qrow[c]) & have[c]
        h, hc, _, _ = grid_records(cl, "head", grid, 2)
        hq = qt.data[~on_body]
        hq_c = qc[~on_body]
        qs = np.zeros(S, np.int64)
        qd = np.zeros(S, np.int64)
        qs[hq_c], qd[hq_c] = hq[:, 0], hq[:, 1]
        cl.drop("head", "body")
        # copy 0 keeps its own edge list for the final output
        cl.local({"orig": Table(4, bt.mach[c == 0], bt.data[c == 0])})
        append(cl, "t_head", Table(5, h.mach, head_rows(hc, n, qs[hc], qd[hc])))
        append(cl, "t_edges", Table(EDGE_W, bt.mach[keep], edge_rows(c[keep], bt.col(0)[keep], bt.col(1)[keep], 1)))
        return TargetBatch("st_connectivity", S, weighted=False)

    def extract(self, run, answers):
        cl = run.cl
        lay, grid = run.state["lay"], run.state["grid"]
        t = cl["t_answer"]
        c = t.col(0)
        owner = grid.machine(0, 0, 1 + c // lay.per)
        cl.exchange([Send("chosen", t.mach, owner, np.column_stack([c, 1 - t.col(2)]))])
        ch = cl["chosen"]
        pick = np.zeros(lay.slots, bool)
        pick[ch.col(0)] = ch.col(1) == 1
        orig = cl["orig"]
        sel = pick[orig.col(3)]
        cl.drop("orig", "chosen")
        return Answer.edges(tuple(map(tuple, orig.data[sel, :3].tolist())))


# --------------------------------------------------------------------------
# Minimum cut via connected components (parallel Karger)


def default_trials(n: int) -> int:
    return max(1, math.ceil(n * n * math.log(n))) if n > 1 else 1


class MincutViaCc(Reduction):
    tag = "mincut-via-cc"
    source = "mincut"
    target = "cc_labels"
    degree = 4.0

    def __init__(self, trials: int | None = None):
        self.trials = trials

    def check(self, inst):
        super().check(inst)
        if inst.n < 2:
            raise BadParams("min cut needs n >= 2")
        if any(w != 1 for _, _, w in inst.edges):
            raise BadParams("contraction counts edges; weighted inputs are not supported")

    def T(self, inst) -> int:
        return self.trials if self.trials is not None else default_trials(inst.n)

    def demand(self, inst):
        T, m, n = self.T(inst), inst.m, inst.n
        return 40 * T * (m + 1) * (3 * m + 2 * n + 8) + 400 * T * (m + 2) ** 2 + 4096

    def expected(self, inst):
        value, side = oracles.stoer_wagner(inst)
        return Answer.partition(value, side)

    def matches(self, inst, answer, expected):
        # several sides can achieve the minimum; any of them is a correct answer
        value, side = answer.value
        return (answer.kind == "partition" and value == expected.value[0]
                and 0 < sum(side) < inst.n and oracles.cut_value(inst, side) == value)

    def transform(self, run):
        cl, g = run.cl, run.inst
        n, m, T = g.n, g.m, self.T(g)
        lay = normalize(cl, "edges", run.in_machines, 1, out_words=7)
        cl.drop("head")
        trials = fan_out(cl, ["body"], lay.body, K=T, degree=self.degree)
        assert trials.start == trials.origin + trials.width
        tm = range(trials.origin, trials.stop)
        random_permutation(cl, "body", tm, "ranked", groups=T, size=max(m, 1),
                           degree=self.degree, per_machine=lay.per)
        B = lay.B
        grid = fan_out(cl, ["ranked"], tm, E=3, K=m + 1, degree=self.degree)
        rt, j, lane, x = grid_records(cl, "ranked", grid, 5)
        cl.drop("ranked")
        n_pad = n + (n % 2)
        S = lay.slots
        inst = (x // B) * (m + 1) + j
        u, v, gid, rank = rt.col(0), rt.col(1), rt.col(3), rt.col(4)
        xe = n_pad + 2 * gid
        ye = xe + 1
        prefix = rank < j
        a = np.select([lane == 0, lane == 1], [u, np.where(prefix, xe, v)], ye)
        b = np.select([lane == 0, lane == 1], [xe, ye], v)
        keep = (lane < 2) | prefix
        append(cl, "t_edges", Table(EDGE_W, rt.mach[keep], edge_rows(inst[keep], a[keep], b[keep], 1)))
        count = T * (m + 1)
        nodes = n_pad + 2 * S
        generate(cl, "t_head", count, 5, lambda r: head_rows(r, nodes))
        run.state.update(n_pad=n_pad, count=count, m=m, T=T)
        return TargetBatch("cc_labels", count, weighted=False)

    def extract(self, run, answers):
        cl, n = run.cl, run.inst.n
        n_pad, count, m = run.state["n_pad"], run.state["count"], run.state["m"]
        t = cl["t_answer"]
        inst, pos, lab = t.col(0), t.col(1), t.col(2)
        leaf = (t.mach - answers.base) % answers.R
        root = ((pos < n) & (lab == pos)).astype(np.int64)
        # x and y of an edge node pair share a machine: positions n_pad + 2e, n_pad + 2e + 1
        is_x = (pos >= n_pad) & ((pos - n_pad) % 2 == 0)
        nxt = np.r_[lab[1:], 0]
        nxt_pos = np.r_[pos[1:], -1]
        cross = (is_x & (nxt_pos == pos + 1) & (nxt != lab) & (nxt != nxt_pos)).astype(np.int64)
        recs = Table(4, t.mach, np.column_stack([inst, leaf, root, cross]))
        agg = aggregate(cl, recs, ["sum", "sum"], count, answers.R, "_cut", self.degree)
        res = cl["_cut"]
        seg, comps, cut = res.col(0), res.col(1), res.col(2)
        j = seg % (m + 1)
        cand = (comps == 2) | ((j == m) & (comps >= 2))
        key = np.where(cand, cut * count + seg, np.iinfo(np.int64).max)
        out_leaf = res.mach - agg.machines.start
        recs = Table(3, res.mach, np.column_stack([np.zeros(len(res), np.int64), out_leaf, key]))
        cl.drop("_cut")
        aggregate(cl, recs, ["min"], 1, len(agg.machines), "_best", self.degree)
        top = cl["_best"]
        win = int(top.col(1)[0])
        value, i_star = divmod(win, count)
        targets = answers.machine(i_star, 0) + np.arange(answers.R, dtype=np.int64)
        broadcast(cl, "_best", int(top.mach[0]), targets, 1.0, into="_win")
        cl.drop("_best")
        got = cl["_win"]
        cl.drop("_win")
        mine = np.isin(t.mach, got.mach) & (pos < n)
        h2 = max(1, cl.s // 2)
        out = cl.provision(-(-n // h2))
        cl.exchange([Send("side", t.mach[mine], out.start + pos[mine] // h2,
                          np.column_stack([pos[mine], (lab[mine] != 0).astype(np.int64)]))])
        sd = cl["side"]
        side = np.zeros(n, np.int64)
        side[sd.col(0)] = sd.col(1)
        return Answer.partition(value, side)


def run_ord_batch(succ: np.ndarray, a: np.ndarray, b: np.ndarray, epsilon: float = 0.5,
                  solver=None) -> tuple[np.ndarray, object]:
    """Decide "a precedes b" for many successor lists of one length at once.

    Every instance gets its own round-robin input block, and the ORD program
    runs on all of them side by side; the memory bound is that of a single
    instance.  Returns the answers and the shared cost report.
    """
    succ = np.asarray(succ, np.int64)
    I, n = succ.shape
    one = SuccessorList(n, tuple(int(x) for x in succ[0]), int(a[0]), int(b[0]))
    N = one.words
    config = MpcConfig.sized(N, epsilon, 400 * N * I)
    template = distribute(one, config)
    beta = template.machines
    head_at = int(template.tables["header"].mach[0])
    succ_at = template.tables["succ"].mach
    base = np.arange(I, dtype=np.int64) * beta
    header = Table.build(base + head_at, np.column_stack([np.full(I, n), a, b]))
    rows = Table.build((base[:, None] + succ_at[None, :]).reshape(-1),
                       np.column_stack([np.tile(np.arange(n), I), succ.reshape(-1)]))
    cl = Cluster(config, 0)
    cl.load({"header": header, "succ": rows}, I * beta)
    batch = ord_to_cycles_program(cl, n, np.asarray(a, np.int64), np.asarray(b, np.int64), beta)
    answers, _ = solve_targets(cl, batch, solver)
    return ord_answers(cl, answers), cl.report()
