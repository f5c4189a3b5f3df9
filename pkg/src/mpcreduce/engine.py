"""Simulated MPC machines with exact per-round word accounting.

Two execution paths share one cost tracker:

* ``run_program`` drives generic per-machine step functions over plain word
  lists.  It is the reference semantics and is used for small programs.
* ``Cluster`` stores machine memory as fixed-width record tables in numpy
  arrays so that reductions with millions of words stay fast.  Every round is
  still an explicit exchange of records between machine ids, and every
  budget is checked per machine.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np


class MpcError(Exception):
    """Base class for engine failures."""


class BudgetViolation(MpcError):
    def __init__(self, machine: int, round_index: int, kind: str, amount: int, limit: int):
        self.machine = machine
        self.round = round_index
        self.kind = kind
        self.amount = amount
        self.limit = limit
        super().__init__(
            f"machine {machine} exceeded its {kind} budget in round {round_index}: "
            f"{amount} words > {limit}"
        )


class MalformedProgram(MpcError):
    pass


class OutOfMemory(MpcError):
    pass


def ceil_power(base: float, exponent: float) -> int:
    """Ceiling of base**exponent that is not fooled by float noise at exact powers."""
    x = float(base) ** exponent
    c = math.ceil(x)
    if c - 1 >= 1 and abs((c - 1) - x) <= 1e-9 * x:
        return c - 1
    return c


@dataclass(frozen=True)
class MpcConfig:
    input_size: int
    epsilon: float
    gamma: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0,1), got {self.epsilon}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        if self.input_size < 1:
            raise ValueError("input size must be positive")

    @cached_property
    def s(self) -> int:
        return max(8, ceil_power(self.input_size, 1.0 - self.epsilon))

    @cached_property
    def p(self) -> int:
        total = 4.0 * float(self.input_size) ** (1.0 + self.gamma)
        p = math.ceil(total / self.s - 1e-9 * total / self.s)
        while p * self.s < 4 * self.input_size:
            p += 1
        return p

    @property
    def capacity(self) -> int:
        return self.p * self.s

    @classmethod
    def sized(cls, input_size: int, epsilon: float, words: int) -> "MpcConfig":
        """Smallest gamma (on a 1e-3 grid) whose capacity p*s covers ``words``."""
        n = max(2, input_size)
        need = max(0.0, math.log(max(words, 1) / 4.0) / math.log(n) - 1.0)
        gamma = math.ceil(need * 1000) / 1000
        cfg = cls(n, epsilon, gamma)
        while cfg.capacity < words:
            gamma += 0.001
            cfg = cls(n, epsilon, gamma)
        return cfg


@dataclass
class CostReport:
    rounds: int = 0
    max_sent: int = 0
    max_received: int = 0
    machines_used: int = 0
    total_words: int = 0

    KEYS = ("rounds", "max_sent", "max_received", "machines_used", "total_words")

    def to_text(self, prefix: str = "") -> str:
        return "".join(f"{prefix}{k}={getattr(self, k)}\n" for k in self.KEYS)

    @classmethod
    def from_text(cls, text: str, prefix: str = "") -> "CostReport":
        values = {}
        for line in text.splitlines():
            key, _, val = line.partition("=")
            if key.startswith(prefix) and key[len(prefix):] in cls.KEYS:
                values[key[len(prefix):]] = int(val)
        return cls(**values)


@dataclass
class RoundTrace:
    round: int
    max_sent: int
    max_received: int
    max_memory: int   # over machines whose memory changed that round


class CostTracker:
    """Accumulates the quantities a CostReport exposes, one round at a time."""

    def __init__(self, config: MpcConfig):
        self.config = config
        self.rounds = 0
        self.max_sent = 0
        self.max_received = 0
        self.peak_words = 0
        self.max_machine = -1
        self.trace: list[RoundTrace] = []

    def check_memory(self, ids: np.ndarray, words: np.ndarray, round_index: int,
                     total: int | None = None, top: int | None = None):
        """``ids``/``words`` cover at least every machine whose memory changed;
        ``total`` and ``top`` (all words, highest busy id) default to theirs."""
        if len(words):
            i = int(np.argmax(words))
            if words[i] > self.config.s:
                raise BudgetViolation(int(ids[i]), round_index, "memory", int(words[i]), self.config.s)
        total = int(words.sum()) if total is None else total
        top = (int(ids.max()) if len(ids) else -1) if top is None else top
        self.peak_words = max(self.peak_words, total)
        self.max_machine = max(self.max_machine, top)

    def record_round(self, sent_ids, sent, recv_ids, recv, mem_ids, mem, total=None, top=None):
        r = self.rounds + 1
        s = self.config.s
        if len(sent):
            i = int(np.argmax(sent))
            if sent[i] > s:
                raise BudgetViolation(int(sent_ids[i]), r, "send", int(sent[i]), s)
            self.max_machine = max(self.max_machine, int(sent_ids.max()))
        if len(recv):
            i = int(np.argmax(recv))
            if recv[i] > s:
                raise BudgetViolation(int(recv_ids[i]), r, "receive", int(recv[i]), s)
        self.check_memory(mem_ids, mem, r, total, top)
        self.rounds = r
        ms = int(sent.max()) if len(sent) else 0
        mr = int(recv.max()) if len(recv) else 0
        self.max_sent = max(self.max_sent, ms)
        self.max_received = max(self.max_received, mr)
        self.trace.append(RoundTrace(r, ms, mr, int(mem.max()) if len(mem) else 0))

    def report(self) -> CostReport:
        return CostReport(self.rounds, self.max_sent, self.max_received,
                          self.max_machine + 1, self.peak_words)


class MachinePool:
    """Hands out contiguous, never reused machine id ranges below the cap p."""

    def __init__(self, config: MpcConfig):
        self.config = config
        self.next_free = 0

    def provision_machines(self, count: int) -> range:
        if count < 0:
            raise ValueError("negative machine count")
        if self.next_free + count > self.config.p:
            raise OutOfMemory(
                f"need {self.next_free + count} machines, cap is p={self.config.p} "
                f"(capacity {self.config.capacity} words)"
            )
        lo = self.next_free
        self.next_free += count
        return range(lo, lo + count)

    def provision(self, demand: int) -> range:
        """Machines for ``demand`` words packed s per machine."""
        if demand > self.config.capacity:
            raise OutOfMemory(f"demand {demand} exceeds p*s = {self.config.capacity}")
        return self.provision_machines(-(-demand // self.config.s))


def provision_machines(demand: int, config: MpcConfig, pool: MachinePool | None = None) -> range:
    return (pool or MachinePool(config)).provision(demand)


# --------------------------------------------------------------------------
# Generic per-machine programs


Outbox = list[tuple[int, list[int]]]
StepFn = Callable[[int, list[int], random.Random], tuple[list[int], Outbox]]


@dataclass
class Step:
    fn: StepFn
    machines: Iterable[int] | None = None  # None: every machine holding words


def deliver_round(outboxes: Mapping[int, Sequence[tuple[int, Sequence[int]]]],
                  config: MpcConfig, round_index: int = 1) -> dict[int, list[int]]:
    """Route payloads to inboxes ordered by (sender id, emission order)."""
    inboxes: dict[int, list[int]] = {}
    for sender in sorted(outboxes):
        sent = 0
        for dest, payload in outboxes[sender]:
            if not 0 <= dest < config.p:
                raise MalformedProgram(f"machine {sender} addressed machine {dest} outside [0, {config.p})")
            sent += len(payload)
            inboxes.setdefault(dest, []).extend(payload)
        if sent > config.s:
            raise BudgetViolation(sender, round_index, "send", sent, config.s)
    for dest in sorted(inboxes):
        if len(inboxes[dest]) > config.s:
            raise BudgetViolation(dest, round_index, "receive", len(inboxes[dest]), config.s)
    return inboxes


def machine_rng(seed: int, round_index: int, machine: int) -> random.Random:
    return random.Random(f"{seed}:{round_index}:{machine}")


def run_program(program: Sequence[Step | StepFn], inputs: Mapping[int, Sequence[int]],
                config: MpcConfig, seed: int = 0, outputs: Iterable[int] | None = None,
                order_seed: int | None = None) -> tuple[dict[int, list[int]], CostReport]:
    """Execute steps as synchronous rounds; a step with no messages costs no round.

    ``order_seed`` shuffles the order in which machines run inside each step;
    results never depend on it.
    """
    tracker = CostTracker(config)
    memory = {m: list(w) for m, w in inputs.items() if len(w)}
    for m in memory:
        if not 0 <= m < config.p:
            raise MalformedProgram(f"input placed on machine {m} outside [0, {config.p})")
    if memory:
        ids = np.fromiter(memory, dtype=np.int64)
        tracker.check_memory(ids, np.array([len(memory[m]) for m in ids]), 0)
    order_rng = random.Random(order_seed) if order_seed is not None else None

    for index, step in enumerate(program):
        if not isinstance(step, Step):
            step = Step(step)
        r = tracker.rounds + 1
        active = sorted(set(memory) | set(step.machines or ()))
        if order_rng is not None:
            order_rng.shuffle(active)
        kept: dict[int, list[int]] = {}
        outboxes: dict[int, Outbox] = {}
        for m in active:
            words, out = step.fn(m, list(memory.get(m, ())), machine_rng(seed, index, m))
            if words:
                kept[m] = list(words)
            if out:
                outboxes[m] = [(int(d), list(p)) for d, p in out]
        real = {m: [(d, p) for d, p in out if p] for m, out in outboxes.items()}
        if not any(real.values()):
            memory = kept
            if memory:
                ids = np.fromiter(memory, dtype=np.int64)
                tracker.check_memory(ids, np.array([len(memory[m]) for m in ids]), r)
            continue
        inboxes = deliver_round(real, config, r)
        memory = kept
        for dest, words in inboxes.items():
            memory.setdefault(dest, []).extend(words)
        sent_ids = np.fromiter(real, dtype=np.int64)
        sent = np.array([sum(len(p) for _, p in real[m]) for m in sent_ids], dtype=np.int64)
        recv_ids = np.fromiter(inboxes, dtype=np.int64)
        recv = np.array([len(inboxes[m]) for m in recv_ids], dtype=np.int64)
        mem_ids = np.fromiter(memory, dtype=np.int64)
        mem = np.array([len(memory[m]) for m in mem_ids], dtype=np.int64)
        tracker.record_round(sent_ids, sent, recv_ids, recv, mem_ids, mem)

    wanted = memory.keys() if outputs is None else outputs
    return {m: memory.get(m, []) for m in wanted}, tracker.report()


# --------------------------------------------------------------------------
# Vectorised cluster


@dataclass
class Table:
    """Fixed-width records, each owned by one machine; sorted by machine id."""

    width: int
    mach: np.ndarray
    data: np.ndarray

    @classmethod
    def empty(cls, width: int) -> "Table":
        return cls(width, np.zeros(0, np.int64), np.zeros((0, width), np.int64))

    @classmethod
    def build(cls, mach, data, width: int | None = None) -> "Table":
        mach = np.asarray(mach, dtype=np.int64).reshape(-1)
        data = np.asarray(data, dtype=np.int64)
        if data.ndim == 1:
            data = data.reshape(len(mach), -1) if len(mach) else data.reshape(0, width or 1)
        if width is not None and data.shape[1] != width:
            raise ValueError(f"expected width {width}, got {data.shape[1]}")
        order = np.argsort(mach, kind="stable")
        return cls(data.shape[1], mach[order], data[order])

    def __len__(self) -> int:
        return len(self.mach)

    @property
    def words(self) -> int:
        return len(self.mach) * self.width

    def col(self, j: int) -> np.ndarray:
        return self.data[:, j]

    def where(self, mask: np.ndarray) -> "Table":
        return Table(self.width, self.mach[mask], self.data[mask])

    def between(self, lo: int, hi: int) -> "Table":
        a, b = np.searchsorted(self.mach, [lo, hi])
        return Table(self.width, self.mach[a:b], self.data[a:b])

    def slot(self) -> np.ndarray:
        """Position of each record among the records of its machine."""
        n = len(self.mach)
        if n == 0:
            return np.zeros(0, np.int64)
        starts = np.r_[0, np.flatnonzero(np.diff(self.mach)) + 1]
        first = np.repeat(starts, np.diff(np.r_[starts, n]))
        return np.arange(n, dtype=np.int64) - first

    @staticmethod
    def concat(tables: Sequence["Table"]) -> "Table":
        tables = [t for t in tables if len(t)]
        if not tables:
            raise ValueError("concat of nothing")
        return Table.build(np.concatenate([t.mach for t in tables]),
                           np.concatenate([t.data for t in tables]))


class Send(NamedTuple):
    into: str
    src: np.ndarray
    dst: np.ndarray
    data: np.ndarray


class Cluster:
    """Machines whose memory is a set of named record tables.

    Tables are owned by machines; a machine's memory is the concatenation of
    its records over all tables in insertion order of the table names.
    """

    def __init__(self, config: MpcConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        self.pool = MachinePool(config)
        self.tracker = CostTracker(config)
        self.tables: dict[str, Table] = {}

    @property
    def s(self) -> int:
        return self.config.s

    @property
    def rounds(self) -> int:
        return self.tracker.rounds

    def provision(self, count: int) -> range:
        return self.pool.provision_machines(count)

    def report(self) -> CostReport:
        return self.tracker.report()

    def rng(self, purpose: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, self.tracker.rounds, purpose])

    def __getitem__(self, name: str) -> Table:
        return self.tables[name]

    def get(self, name: str, width: int) -> Table:
        return self.tables.get(name) or Table.empty(width)

    def _memory(self, changed):
        """Memory of every machine holding a record of a changed table."""
        parts = [t for t in self.tables.values() if len(t)]
        total = sum(t.words for t in parts)
        top = max((int(t.mach[-1]) for t in parts), default=-1)
        touched = [t.mach for name in changed if (t := self.tables.get(name)) is not None and len(t)]
        if not touched:
            return np.zeros(0, np.int64), np.zeros(0, np.int64), total, top
        lo = min(int(m[0]) for m in touched)
        hi = max(int(m[-1]) for m in touched) + 1
        if hi - lo > 4 * sum(len(m) for m in touched):
            ids = np.unique(np.concatenate([m[np.r_[True, m[1:] != m[:-1]]] for m in touched]))
            words = np.zeros(len(ids), np.int64)
            for t in parts:
                words += (np.searchsorted(t.mach, ids, "right") - np.searchsorted(t.mach, ids, "left")) * t.width
            return ids, words, total, top
        words = np.zeros(hi - lo, np.int64)
        for t in parts:
            a, b = np.searchsorted(t.mach, [lo, hi])
            if b > a:
                words += np.bincount(t.mach[a:b] - lo, minlength=hi - lo) * t.width
        ids = np.flatnonzero(words)
        return ids + lo, words[ids], total, top

    def _check_ids(self, mach: np.ndarray):
        if len(mach) and (mach.min() < 0 or mach.max() >= self.config.p):
            bad = int(mach.max() if mach.max() >= self.config.p else mach.min())
            raise MalformedProgram(f"machine id {bad} outside [0, {self.config.p})")

    def local(self, updates: Mapping[str, Table | None]):
        """Replace tables by locally computed ones; costs no round."""
        for name, table in updates.items():
            if table is None:
                self.tables.pop(name, None)
            else:
                self._check_ids(table.mach)
                self.tables[name] = table
        ids, words, total, top = self._memory(updates)
        self.tracker.check_memory(ids, words, self.tracker.rounds, total, top)

    def load(self, tables: Mapping[str, Table], machines: int) -> range:
        """Install input tables on machines [0, machines), reserving them."""
        if self.pool.next_free:
            raise MalformedProgram("input must be loaded before any allocation")
        placed = self.provision(machines)
        for t in tables.values():
            if len(t) and t.mach.max() >= machines:
                raise MalformedProgram("input record outside the reserved machines")
        self.local(dict(tables))
        return placed

    def barrier(self):
        """A round in which nothing moves; fixed schedules use it to stay in step."""
        none = np.zeros(0, np.int64)
        self.tracker.record_round(none, none, none, none, none, none)

    def drop(self, *names: str):
        for n in names:
            self.tables.pop(n, None)

    def exchange(self, sends: Sequence[Send], replace: Mapping[str, Table | None] | None = None):
        """One synchronous round.

        ``replace`` installs each machine's post-computation tables; the
        records in ``sends`` then travel to their destinations and are
        appended behind local records, ordered by (sender, emission order).
        """
        replace = dict(replace or {})
        sent_parts, recv_parts, delivered = [], [], {}
        for into, src, dst, data in sends:
            src = np.asarray(src, np.int64)
            dst = np.asarray(dst, np.int64)
            data = np.asarray(data, np.int64)
            if len(dst) == 0:
                continue
            self._check_ids(dst)
            width = data.shape[1]
            moving = dst != src
            sent_parts.append((src[moving], width))
            recv_parts.append((dst[moving], width))
            delivered.setdefault(into, []).append((src, dst, data))
        counted = any(len(m) for m, _ in sent_parts)

        for name, table in replace.items():
            if table is None:
                self.tables.pop(name, None)
            else:
                self._check_ids(table.mach)
                self.tables[name] = table
        for into, parts in delivered.items():
            src = np.concatenate([p[0] for p in parts])
            dst = np.concatenate([p[1] for p in parts])
            data = np.concatenate([p[2] for p in parts])
            # stable: sender, then emission order, break ties
            key = dst * self.config.p + src
            order = np.argsort(key, kind="stable") if np.any(key[1:] < key[:-1]) else slice(None)
            incoming = Table(data.shape[1], dst[order], data[order])
            old = self.tables.get(into)
            if old is not None and len(old):
                if old.width != incoming.width:
                    raise MalformedProgram(f"table {into}: width {incoming.width} != {old.width}")
                merged = np.concatenate([old.mach, incoming.mach])
                order = np.argsort(merged, kind="stable")
                incoming = Table(old.width, merged[order],
                                 np.concatenate([old.data, incoming.data])[order])
            self.tables[into] = incoming

        ids, words, total, top = self._memory(set(replace) | set(delivered))
        if not counted:
            self.tracker.check_memory(ids, words, self.tracker.rounds, total, top)
            return
        sent_ids, sent = _tally(sent_parts)
        recv_ids, recv = _tally(recv_parts)
        self.tracker.record_round(sent_ids, sent, recv_ids, recv, ids, words, total, top)


def _tally(parts):
    """Words per machine id, over the ids that occur."""
    parts = [(m, w) for m, w in parts if len(m)]
    if not parts:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    lo = min(int(m.min()) for m, _ in parts)
    hi = max(int(m.max()) for m, _ in parts) + 1
    if hi - lo <= 4 * sum(len(m) for m, _ in parts):
        acc = np.zeros(hi - lo, np.int64)
        for m, w in parts:
            acc += np.bincount(m - lo, minlength=hi - lo) * w
        ids = np.flatnonzero(acc)
        return ids + lo, acc[ids]
    mach = np.concatenate([m for m, _ in parts])
    words = np.concatenate([np.full(len(m), w, np.int64) for m, w in parts])
    ids, inv = np.unique(mach, return_inverse=True)
    return ids, np.bincount(inv, weights=words).astype(np.int64)
