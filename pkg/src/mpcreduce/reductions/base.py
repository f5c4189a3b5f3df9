"""Shared plumbing for reductions: layouts, fan-out, target batches, answers.

A reduction run moves through fixed stages, all on one Cluster:

1. ``normalize`` puts each instance header on its own machine and the body
   records (edges or successor pairs) on clean machines, each record tagged
   with a global slot id.
2. ``fan_out`` makes copies of that layout; every machine can tell from
   its id which copy and which expansion lane it is.
3. A local step turns the copies into target records ``t_head`` =
   (instance, n, s, t, k) and ``t_edges`` = (instance, u, v, w).
4. The target problem is solved by a pluggable solver (no rounds), which
   leaves ``t_answer`` = (instance, position, value) records laid out
   positionally on fresh machines.
5. An extraction program maps those answers back to the source answer.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..engine import Cluster, MalformedProgram, Send, Table
from ..primitives import replicate

HEAD_W = 5
EDGE_W = 4
ANS_W = 3
NONE = -1


class UniquenessFailure(RuntimeError):
    """Perturbed weights left a tie between shortest paths."""


@dataclass
class Layout:
    """Instance headers and bodies after normalization.

    Machines ``heads`` (one per instance) are followed directly by ``body``
    (``B`` machines per instance, instance-major).  Body slot ``gid`` of an
    instance lives on body machine ``gid // per``.
    """

    heads: range
    body: range
    B: int
    per: int
    slots: int
    instances: int

    @property
    def span(self) -> range:
        return range(self.heads.start, self.body.stop)

    @property
    def width(self) -> int:
        return len(self.heads) + len(self.body)


def append(cl: Cluster, name: str, table: Table | None) -> None:
    if table is None or not len(table):
        return
    old = cl.tables.get(name)
    if old is not None and len(old):
        table = Table.build(np.concatenate([old.mach, table.mach]),
                            np.vstack([old.data, table.data]), old.width)
    cl.local({name: table})


def normalize(cl: Cluster, body_name: str, in_machines: int, instances: int = 1,
              out_words: int = EDGE_W, reserve: int = 0) -> Layout:
    """Two rounds: headers to head machines, body records to clean machines.

    Input instance ``i`` occupies machines [i*in_machines, (i+1)*in_machines).
    Each body record gains a trailing slot id.  ``per`` is chosen so that a
    body machine can later hold one ``out_words`` record per body record,
    plus ``reserve`` spare words.
    """
    s = cl.s
    head = cl["header"]
    body = cl.get(body_name, 2)
    w = body.width
    cap = max(1, s // w)
    per = max(1, (s - reserve) // max(w + 1, out_words))
    slots = in_machines * cap
    B = -(-slots // per)
    heads = cl.provision(instances)
    bm = cl.provision(instances * B)
    inst = body.mach // in_machines
    gid = (body.mach % in_machines) * cap + body.slot()
    dst = bm.start + inst * B + gid // per
    data = np.column_stack([body.data, gid])
    # the slot id inflates a full machine past s words, so odd slots wait a round
    odd = body.slot() % 2 == 1
    cl.exchange(
        [Send("head", head.mach, heads.start + head.mach // in_machines, head.data),
         Send("body", body.mach[~odd], dst[~odd], data[~odd])],
        replace={"header": None, body_name: Table(w, body.mach[odd], body.data[odd])})
    cl.exchange([Send("body", body.mach[odd], dst[odd], data[odd])], replace={body_name: None})
    return Layout(heads, bm, B, per, slots, instances)


@dataclass
class Grid:
    """Where every machine of a replicated, expanded layout sits.

    Block ``b = copy * E + lane`` is a run of ``width`` machines: block 0 is
    the original layout at ``origin`` and blocks 1.. follow each other from
    ``start``.
    """

    origin: int
    start: int
    width: int
    E: int
    K: int

    @property
    def stop(self) -> int:
        return self.start + (self.K * self.E - 1) * self.width

    def contains(self, mach: np.ndarray) -> np.ndarray:
        mach = np.asarray(mach, np.int64)
        return ((mach >= self.origin) & (mach < self.origin + self.width)) | \
            ((mach >= self.start) & (mach < self.stop))

    def locate(self, mach: np.ndarray):
        mach = np.asarray(mach, np.int64)
        home = (mach >= self.origin) & (mach < self.origin + self.width)
        rel = np.where(home, mach - self.origin, mach - self.start + self.width)
        block = rel // self.width
        return block // self.E, block % self.E, rel % self.width

    def machine(self, copy, lane, x):
        block = np.asarray(copy) * self.E + np.asarray(lane)
        return np.where(block == 0, self.origin + np.asarray(x),
                        self.start + (block - 1) * self.width + np.asarray(x))


def fan_out(cl: Cluster, names: list[str], machines: range, E: int = 1, K: int = 1,
            degree: float | None = None) -> Grid:
    """Expand ``machines`` into E lanes, then replicate the result K times.

    The whole grid is reserved up front and both steps are ``replicate``
    calls aimed at it.
    """
    width = len(machines)
    rest = cl.provision((K * E - 1) * width)
    grid = Grid(machines.start, rest.start, width, E, K)
    x = np.arange(width, dtype=np.int64)
    if E > 1:
        lanes = grid.machine(0, np.arange(1, E)[:, None], x[None, :])
        replicate(cl, names, machines, E, None, targets=lanes)
    if K > 1:
        lane = np.arange(E)[:, None]
        src = grid.machine(0, lane, x[None, :]).reshape(-1)
        copies = grid.machine(np.arange(1, K)[:, None, None], lane[None], x[None, None, :]).reshape(K - 1, -1)
        replicate(cl, names, src, K, degree, targets=copies)
    return grid


def grid_records(cl: Cluster, name: str, grid: Grid, width: int):
    """Records of ``name`` on the grid with their (copy, lane, x)."""
    t = cl.get(name, width)
    t = t.where(grid.contains(t.mach))
    return (t, *grid.locate(t.mach))


def generate(cl: Cluster, name: str, count: int, width: int,
             fn: Callable[[np.ndarray], np.ndarray]) -> range:
    """Create ``count`` constant-derived records on fresh machines (no round).

    Record ``r`` is ``fn(r)`` and lives on machine ``start + r // (s // width)``;
    every machine can compute its own records from the program constants.
    """
    per = max(1, cl.s // width)
    machines = cl.provision(-(-count // per)) if count else range(cl.pool.next_free, cl.pool.next_free)
    if count:
        r = np.arange(count, dtype=np.int64)
        data = np.asarray(fn(r), np.int64).reshape(count, width)
        append(cl, name, Table(width, machines.start + r // per, data))
    return machines


def pair_index(c: np.ndarray, n: int):
    """Unordered pair (a < b) number ``c`` in row-major order."""
    a, b = np.triu_indices(n, 1)
    return a[c], b[c]


def ordered_pair_index(c: np.ndarray, n: int):
    """Ordered pair (u != v) number ``c`` in row-major order."""
    u = c // (n - 1)
    r = c % (n - 1)
    return u, r + (r >= u)


def edge_rows(inst, u, v, w) -> np.ndarray:
    inst, u, v, w = np.broadcast_arrays(*(np.asarray(x, np.int64) for x in (inst, u, v, w)))
    return np.column_stack([inst.reshape(-1), u.reshape(-1), v.reshape(-1), w.reshape(-1)])


def head_rows(inst, n, s=NONE, t=NONE, k=NONE) -> np.ndarray:
    cols = np.broadcast_arrays(*(np.asarray(x, np.int64) for x in (inst, n, s, t, k)))
    return np.column_stack([c.reshape(-1) for c in cols])


# --------------------------------------------------------------------------
# Targets and answers


@dataclass
class TargetBatch:
    """The target sub-instances a transform left on the cluster."""

    tag: str
    count: int
    directed: bool = False
    weighted: bool = True
    lengths: np.ndarray | None = None   # answer words per instance, if known
    meta: dict = field(default_factory=dict)


@dataclass
class Answers:
    """``t_answer`` layout: position ``j`` of instance ``i`` sits on
    machine ``base + i * R + j // h``."""

    base: int
    R: int
    h: int
    count: int

    def machine(self, inst, pos):
        return self.base + np.asarray(inst) * self.R + np.asarray(pos) // self.h

    @property
    def machines(self) -> range:
        return range(self.base, self.base + self.count * self.R)


def collect_targets(cl: Cluster, batch: TargetBatch):
    """Target heads (count x 5, by instance) and edges sorted by instance."""
    heads = cl.get("t_head", HEAD_W).data
    if len(heads) != batch.count or not np.array_equal(np.sort(heads[:, 0]), np.arange(batch.count)):
        raise MalformedProgram("every target instance needs exactly one head record")
    heads = heads[np.argsort(heads[:, 0], kind="stable")]
    edges = cl.get("t_edges", EDGE_W).data
    edges = edges[np.lexsort((edges[:, 3], edges[:, 2], edges[:, 1], edges[:, 0]))] if len(edges) else edges
    return heads, edges


def place_answers(cl: Cluster, values: list[np.ndarray]) -> Answers:
    """Install solver output as positional ``t_answer`` records (no round)."""
    # two words stay free on every answer machine for control messages
    h = max(2, 2 * ((cl.s - 2) // (2 * ANS_W)))
    longest = max((len(v) for v in values), default=1)
    R = max(1, -(-longest // h))
    base = cl.provision(len(values) * R).start
    lens = np.array([len(v) for v in values], np.int64)
    inst = np.repeat(np.arange(len(values), dtype=np.int64), lens)
    pos = np.arange(int(lens.sum()), dtype=np.int64) - np.repeat(np.cumsum(lens) - lens, lens)
    vals = np.concatenate([np.asarray(v, np.int64) for v in values]) if len(values) else np.zeros(0, np.int64)
    ans = Answers(base, R, h, len(values))
    cl.local({"t_head": None, "t_edges": None,
              "t_answer": Table(ANS_W, ans.machine(inst, pos), np.column_stack([inst, pos, vals]))})
    return ans
