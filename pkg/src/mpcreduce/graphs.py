"""Graph and successor-list instances, generators, text formats, distribution."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .engine import MpcConfig, OutOfMemory, Table


class BadParams(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class RangeError(ParseError):
    pass


class PromiseViolation(ValueError):
    pass


Edge = tuple[int, int, int]


@dataclass(frozen=True)
class GraphInstance:
    n: int
    edges: tuple[Edge, ...] = ()
    directed: bool = False
    weighted: bool = False
    s: int | None = None
    t: int | None = None
    k: int | None = None

    def __post_init__(self):
        canon = []
        for e in self.edges:
            u, v = int(e[0]), int(e[1])
            w = int(e[2]) if len(e) > 2 else 1
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise BadParams(f"edge ({u},{v}) out of range for n={self.n}")
            if w < 0:
                raise BadParams("negative weights are not supported")
            if not self.weighted:
                w = 1
            if not self.directed and u > v:
                u, v = v, u
            canon.append((u, v, w))
        canon.sort()
        object.__setattr__(self, "edges", tuple(canon))
        for name in ("s", "t"):
            x = getattr(self, name)
            if x is not None and not 0 <= x < self.n:
                raise BadParams(f"{name}={x} out of range for n={self.n}")

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def M(self) -> int:
        return max([1] + [w for _, _, w in self.edges])

    @property
    def c(self) -> int:
        """Smallest integer exponent with M <= n**c."""
        if self.M <= 1 or self.n <= 1:
            return 0 if self.M <= 1 else 1
        return max(0, math.ceil(math.log(self.M) / math.log(self.n) - 1e-12))

    @property
    def words(self) -> int:
        return 2 + 3 * self.m

    def with_query(self, s=None, t=None, k=None) -> "GraphInstance":
        return replace(self, s=s, t=t, k=k)

    def adjacency(self) -> list[list[tuple[int, int]]]:
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n)]
        for u, v, w in self.edges:
            adj[u].append((v, w))
            if not self.directed and u != v:
                adj[v].append((u, w))
        return adj


@dataclass(frozen=True)
class SuccessorList:
    n: int
    succ: tuple[int, ...]
    a: int | None = None
    b: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "succ", tuple(int(x) for x in self.succ))
        if len(self.succ) != self.n:
            raise BadParams(f"successor array has length {len(self.succ)}, expected {self.n}")
        for x in self.succ:
            if not -1 <= x < self.n:
                raise BadParams(f"successor {x} out of range")

    @property
    def words(self) -> int:
        return 3 + 2 * self.n

    def order(self) -> list[int]:
        """Nodes in path order; raises PromiseViolation unless one simple path covers all."""
        indeg = [0] * self.n
        for x in self.succ:
            if x >= 0:
                indeg[x] += 1
        sources = [v for v in range(self.n) if indeg[v] == 0]
        sinks = [v for v in range(self.n) if self.succ[v] < 0]
        if self.n == 0:
            return []
        if len(sources) != 1 or len(sinks) != 1 or any(d > 1 for d in indeg):
            raise PromiseViolation("successor relation is not a single path")
        seq, v, seen = [], sources[0], set()
        while v >= 0:
            if v in seen:
                raise PromiseViolation("successor relation has a cycle")
            seen.add(v)
            seq.append(v)
            v = self.succ[v]
        if len(seq) != self.n:
            raise PromiseViolation("path does not cover every node")
        return seq

    @property
    def source(self) -> int:
        return self.order()[0]

    @property
    def sink(self) -> int:
        return self.order()[-1]


@dataclass(frozen=True)
class Answer:
    """Tagged result.  ``kind`` is one of the constructors below."""

    kind: str
    value: object

    @classmethod
    def boolean(cls, x) -> "Answer":
        return cls("boolean", bool(x))

    @classmethod
    def integer(cls, x) -> "Answer":
        return cls("integer", int(x))

    @classmethod
    def labels(cls, xs) -> "Answer":
        return cls("labels", tuple(int(x) for x in xs))

    @classmethod
    def values(cls, xs) -> "Answer":
        return cls("values", tuple(xs))

    @classmethod
    def edges(cls, es) -> "Answer":
        return cls("edges", tuple(sorted(tuple(int(x) for x in e) for e in es)))

    @classmethod
    def partition(cls, cut: int, side: Sequence[int]) -> "Answer":
        side = tuple(int(x) for x in side)
        if side and side[0]:
            side = tuple(1 - x for x in side)
        return cls("partition", (int(cut), side))

    def text(self) -> str:
        v = self.value
        if self.kind == "boolean":
            return "1" if v else "0"
        if self.kind == "integer":
            return str(v)
        if self.kind in ("labels", "values"):
            return ",".join(str(x) for x in v)
        if self.kind == "edges":
            return ";".join(" ".join(map(str, e)) for e in v)
        cut, side = v
        return f"{cut}|" + "".join(map(str, side))


def partition_key(labels: Sequence[int]) -> tuple[int, ...]:
    """Relabel so that two labelings inducing the same partition compare equal."""
    first: dict[int, int] = {}
    return tuple(first.setdefault(x, len(first)) for x in labels)


# --------------------------------------------------------------------------
# Generators


FAMILIES = ("one_cycle", "two_cycles", "union_of_cycles", "successor_path", "gnp",
            "gnm_weighted", "grid", "bipartite_double_cover_test")


def _cycle_edges(nodes: Sequence[int]) -> list[Edge]:
    k = len(nodes)
    return [(nodes[i], nodes[(i + 1) % k], 1) for i in range(k)]


def _cycles(sizes: Sequence[int], rng: random.Random) -> GraphInstance:
    n = sum(sizes)
    perm = list(range(n))
    rng.shuffle(perm)
    edges, at = [], 0
    for size in sizes:
        edges += _cycle_edges(perm[at:at + size])
        at += size
    return GraphInstance(n, tuple(edges))


def generate(family: str, seed: int = 0, **params):
    rng = random.Random(seed)
    if family not in FAMILIES:
        raise BadParams(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    n = params.get("n")
    if n is None and family != "grid":
        raise BadParams(f"{family} needs n")

    if family == "one_cycle":
        if n < 3:
            raise BadParams("cycles need n >= 3")
        return _cycles([n], rng)

    if family == "two_cycles":
        split = params.get("split")
        if n < 4:
            raise BadParams("two cycles need n >= 4")
        if split is None:
            split = rng.randint(2, n - 2)
        if not 2 <= split <= n - 2:
            raise BadParams("each cycle needs at least two nodes")
        return _cycles([split, n - split], rng)

    if family == "union_of_cycles":
        k = params.get("k", 2)
        if k < 1 or n < 3 * k:
            raise BadParams("union_of_cycles needs n >= 3k")
        sizes = [3] * k
        for _ in range(n - 3 * k):
            sizes[rng.randrange(k)] += 1
        return _cycles(sizes, rng)

    if family == "successor_path":
        if n < 1:
            raise BadParams("successor_path needs n >= 1")
        perm = list(range(n))
        rng.shuffle(perm)
        succ = [-1] * n
        for x, y in zip(perm, perm[1:]):
            succ[x] = y
        a, b = params.get("a"), params.get("b")
        if a is None and b is None and n >= 3:
            a, b = rng.sample(perm, 2)
        return SuccessorList(n, tuple(succ), a, b)

    directed = bool(params.get("directed", False))
    if family == "gnp":
        p = params.get("p", 0.3)
        if not 0 <= p <= 1:
            raise BadParams("p must lie in [0,1]")
        M = params.get("M")
        pairs = ([(u, v) for u in range(n) for v in range(n) if u != v] if directed
                 else [(u, v) for u in range(n) for v in range(u + 1, n)])
        edges = [(u, v, rng.randint(1, M) if M else 1) for u, v in pairs if rng.random() < p]
        return GraphInstance(n, tuple(edges), directed=directed, weighted=bool(M))

    if family == "gnm_weighted":
        m = params.get("m", 2 * n)
        M = params.get("M", n)
        lo = params.get("min_weight", 1)
        if M < 1 or lo < 0 or lo > M:
            raise BadParams("weights need 0 <= min_weight <= M, M >= 1")
        limit = n * (n - 1) if directed else n * (n - 1) // 2
        if m > limit:
            raise BadParams(f"m={m} exceeds the {limit} possible simple edges")
        chosen: set[tuple[int, int]] = set()
        while len(chosen) < m:
            u, v = rng.randrange(n), rng.randrange(n)
            if u == v:
                continue
            if not directed:
                u, v = min(u, v), max(u, v)
            chosen.add((u, v))
        edges = [(u, v, rng.randint(lo, M)) for u, v in sorted(chosen)]
        return GraphInstance(n, tuple(edges), directed=directed, weighted=True)

    if family == "grid":
        rows, cols = params.get("rows"), params.get("cols")
        if rows is None or cols is None or rows < 1 or cols < 1:
            raise BadParams("grid needs rows, cols >= 1")
        idx = lambda r, c: r * cols + c
        edges = [(idx(r, c), idx(r, c + 1), 1) for r in range(rows) for c in range(cols - 1)]
        edges += [(idx(r, c), idx(r + 1, c), 1) for r in range(rows - 1) for c in range(cols)]
        return GraphInstance(rows * cols, tuple(edges))

    # bipartite_double_cover_test: a random bipartite graph, optionally spoiled
    # by one edge inside a side, which closes an odd cycle when it lands in a
    # connected part.
    p = params.get("p", 0.4)
    odd = params.get("odd")
    if odd is None:
        odd = rng.random() < 0.5
    side = [rng.randrange(2) for _ in range(n)]
    edges = [(u, v, 1) for u in range(n) for v in range(u + 1, n)
             if side[u] != side[v] and rng.random() < p]
    if odd:
        same = [(u, v) for u in range(n) for v in range(u + 1, n) if side[u] == side[v]]
        if same:
            u, v = rng.choice(same)
            edges.append((u, v, 1))
    return GraphInstance(n, tuple(edges))


def validate_family(family: str, inst, **params) -> bool:
    """Check the promise a generated family member must satisfy."""
    from . import oracles

    if family == "one_cycle":
        return all(d == 2 for d in degrees(inst)) and oracles.cycle_count(inst) == 1
    if family == "two_cycles":
        return all(d == 2 for d in degrees(inst)) and oracles.cycle_count(inst) == 2
    if family == "union_of_cycles":
        return all(d == 2 for d in degrees(inst)) and oracles.cycle_count(inst) == params.get("k", 2)
    if family == "successor_path":
        try:
            inst.order()
        except PromiseViolation:
            return False
        return True
    if isinstance(inst, GraphInstance):
        return all(0 <= w <= inst.M for _, _, w in inst.edges)
    return False


def degrees(g: GraphInstance) -> list[int]:
    deg = [0] * g.n
    for u, v, _ in g.edges:
        deg[u] += 1
        deg[v] += 1
    return deg


# --------------------------------------------------------------------------
# Text formats


def save_graph(g: GraphInstance) -> str:
    lines = [f"{g.n} {g.m} {int(g.directed)} {int(g.weighted)}"]
    for u, v, w in g.edges:
        lines.append(f"{u} {v} {w}" if g.weighted else f"{u} {v}")
    for key in ("s", "t", "k"):
        if getattr(g, key) is not None:
            lines.append(f"{key} {getattr(g, key)}")
    return "\n".join(lines) + "\n"


def _ints(line: str, lineno: int) -> list[int]:
    try:
        return [int(x) for x in line.split()]
    except ValueError:
        raise ParseError(lineno, f"expected integers, got {line!r}") from None


def load_graph(text: str) -> GraphInstance:
    rows = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    rows = [(i, ln) for i, ln in rows if ln and not ln.startswith("#")]
    if not rows:
        raise ParseError(1, "missing header")
    lineno, head = rows[0]
    fields = _ints(head, lineno)
    if len(fields) != 4 or fields[2] not in (0, 1) or fields[3] not in (0, 1) or min(fields[:2]) < 0:
        raise ParseError(lineno, "header must be 'n m D W' with D, W in {0,1}")
    n, m, directed, weighted = fields
    if len(rows) < 1 + m:
        raise ParseError(rows[-1][0] + 1, f"expected {m} edge lines")
    edges = []
    for lineno, ln in rows[1:1 + m]:
        xs = _ints(ln, lineno)
        if len(xs) != (3 if weighted else 2) and not (not weighted and len(xs) == 3):
            raise ParseError(lineno, "edge line must be 'u v' or 'u v w'")
        u, v = xs[0], xs[1]
        w = xs[2] if len(xs) == 3 else 1
        if not (0 <= u < n and 0 <= v < n):
            raise RangeError(lineno, f"node id out of range [0,{n})")
        if w < 0:
            raise RangeError(lineno, "negative weight")
        edges.append((u, v, w))
    query = {}
    for lineno, ln in rows[1 + m:]:
        parts = ln.split()
        if len(parts) != 2 or parts[0] not in ("s", "t", "k"):
            raise ParseError(lineno, f"unexpected line {ln!r}")
        query[parts[0]] = _ints(parts[1], lineno)[0]
        if parts[0] in ("s", "t") and not 0 <= query[parts[0]] < n:
            raise RangeError(lineno, f"{parts[0]} out of range")
    return GraphInstance(n, tuple(edges), bool(directed), bool(weighted), **query)


def save_successor(sl: SuccessorList) -> str:
    lines = [str(sl.n)] + [f"{i} {x}" for i, x in enumerate(sl.succ)]
    for key in ("a", "b"):
        if getattr(sl, key) is not None:
            lines.append(f"{key} {getattr(sl, key)}")
    return "\n".join(lines) + "\n"


def load_successor(text: str) -> SuccessorList:
    rows = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    rows = [(i, ln) for i, ln in rows if ln and not ln.startswith("#")]
    if not rows:
        raise ParseError(1, "missing header")
    lineno, head = rows[0]
    xs = _ints(head, lineno)
    if len(xs) != 1 or xs[0] < 0:
        raise ParseError(lineno, "header must be 'n'")
    n = xs[0]
    succ = [None] * n
    extra = {}
    for lineno, ln in rows[1:]:
        parts = ln.split()
        if parts and parts[0] in ("a", "b"):
            if len(parts) != 2:
                raise ParseError(lineno, "expected 'a <id>' or 'b <id>'")
            extra[parts[0]] = _ints(parts[1], lineno)[0]
            continue
        xs = _ints(ln, lineno)
        if len(xs) != 2:
            raise ParseError(lineno, "expected 'i s_i'")
        i, x = xs
        if not 0 <= i < n or not -1 <= x < n:
            raise RangeError(lineno, "id out of range")
        succ[i] = x
    if any(x is None for x in succ):
        raise ParseError(rows[-1][0], "missing successor lines")
    return SuccessorList(n, tuple(succ), **extra)


# --------------------------------------------------------------------------
# Word encodings and distribution


def encode_graph(g: GraphInstance) -> list[int]:
    words = [g.n, g.m]
    for e in g.edges:
        words.extend(e)
    return words


def encode_successor(sl: SuccessorList) -> list[int]:
    return [sl.n, *sl.succ]


@dataclass
class Distributed:
    """Input tables placed on machines [0, machines)."""

    tables: dict[str, Table]
    machines: int
    words: int
    header_machine: int


DIST_MODES = ("round_robin", "shuffle")


def distribute(inst, config: MpcConfig, mode: str = "round_robin", seed: int = 0) -> Distributed:
    """Spread atomic records round-robin over the fewest machines that fit.

    Graphs use a 2-word header unit plus one (u, v, w) triple per edge.
    Successor lists use an (n, a, b) header plus (i, succ_i) pairs, since an
    adversarial placement would otherwise erase positional node ids.
    """
    if mode not in DIST_MODES:
        raise BadParams(f"unknown distribution mode {mode!r}")
    if isinstance(inst, GraphInstance):
        header = np.array([[inst.n, inst.m]], np.int64)
        body = np.array(inst.edges, np.int64).reshape(-1, 3)
        names = ("header", "edges")
    else:
        q = [-1 if x is None else x for x in (inst.a, inst.b)]
        header = np.array([[inst.n, *q]], np.int64)
        body = np.column_stack([np.arange(inst.n), np.array(inst.succ, np.int64)]).reshape(-1, 2)
        names = ("header", "succ")
    hw, bw = header.shape[1], body.shape[1]
    total = hw + bw * len(body)
    if total > config.capacity:
        raise OutOfMemory(f"instance needs {total} words, capacity is {config.capacity}")
    units = 1 + len(body)
    s = config.s
    beta = max(1, -(-total // s))
    while True:
        per = -(-units // beta)
        if hw + (per - 1) * bw <= s and per * bw <= s:
            break
        beta += 1
    if beta > config.p:
        raise OutOfMemory("not enough machines for the input")
    order = np.arange(units)
    slots = np.arange(beta)
    if mode == "shuffle":
        rng = np.random.default_rng([seed, 7])
        order = rng.permutation(units)
        slots = rng.permutation(beta)
    owner = np.empty(units, np.int64)
    owner[order] = slots[np.arange(units) % beta]
    tables = {
        names[0]: Table.build(owner[:1], header),
        names[1]: Table.build(owner[1:], body, bw),
    }
    return Distributed(tables, beta, total, int(owner[0]))
