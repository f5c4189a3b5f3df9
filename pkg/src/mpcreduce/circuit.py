"""Bounded fan-in Boolean circuits and their gate-per-machine MPC simulation."""
from __future__ import annotations

import math
import random
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property

from .engine import CostReport, MpcConfig, OutOfMemory, Step, run_program
from .graphs import ParseError


class CircuitError(ValueError):
    pass


class CyclicCircuit(CircuitError):
    pass


class FanInViolation(CircuitError):
    pass


class DanglingInput(CircuitError):
    pass


ARITY = {"INPUT": 0, "NOT": 1, "AND": 2, "OR": 2}


@dataclass(frozen=True)
class Gate:
    id: int
    kind: str
    inputs: tuple[int, ...] = ()


@dataclass
class Circuit:
    gates: list[Gate]
    index: dict[int, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {}
        for i, g in enumerate(self.gates):
            if g.kind not in ARITY:
                raise CircuitError(f"unknown gate kind {g.kind}")
            if len(g.inputs) != ARITY[g.kind]:
                raise FanInViolation(f"gate {g.id}: {g.kind} takes {ARITY[g.kind]} inputs, got {len(g.inputs)}")
            if g.id in self.index:
                raise CircuitError(f"duplicate gate id {g.id}")
            self.index[g.id] = i
        for g in self.gates:
            for x in g.inputs:
                if x not in self.index:
                    raise DanglingInput(f"gate {g.id} reads undeclared gate {x}")
        self.topo  # raises on cycles

    @property
    def size(self) -> int:
        return len(self.gates)

    @cached_property
    def input_ids(self) -> list[int]:
        return [g.id for g in self.gates if g.kind == "INPUT"]

    @property
    def n_inputs(self) -> int:
        return len(self.input_ids)

    @cached_property
    def consumers(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = defaultdict(list)
        for g in self.gates:
            for x in g.inputs:
                out[x].append(g.id)
        return out

    @cached_property
    def output_ids(self) -> list[int]:
        """Sink gates, in id order."""
        return sorted(g.id for g in self.gates if not self.consumers.get(g.id))

    @property
    def n_outputs(self) -> int:
        return len(self.output_ids)

    @cached_property
    def topo(self) -> list[int]:
        indeg = {g.id: len(g.inputs) for g in self.gates}
        ready = [g.id for g in self.gates if not g.inputs]
        order = []
        while ready:
            x = ready.pop()
            order.append(x)
            for y in self.consumers.get(x, ()):
                indeg[y] -= 1
                if indeg[y] == 0:
                    ready.append(y)
        if len(order) != len(self.gates):
            raise CyclicCircuit("circuit has a cycle")
        return order

    @cached_property
    def level(self) -> dict[int, int]:
        """Nodes on the longest path ending at each gate; inputs sit at level 1."""
        lv: dict[int, int] = {}
        for x in self.topo:
            g = self.gate(x)
            lv[x] = 1 + max((lv[y] for y in g.inputs), default=0)
        return lv

    @property
    def depth(self) -> int:
        return max(self.level.values(), default=0)

    def gate(self, gid: int) -> Gate:
        return self.gates[self.index[gid]]


def apply_gate(kind: str, args) -> int:
    if kind == "AND":
        return args[0] & args[1]
    if kind == "OR":
        return args[0] | args[1]
    if kind == "NOT":
        return 1 - args[0]
    raise CircuitError(kind)


def evaluate(circuit: Circuit, bits) -> list[int]:
    """Direct topological evaluation; returns the sink values in id order."""
    if len(bits) != circuit.n_inputs:
        raise CircuitError(f"expected {circuit.n_inputs} input bits, got {len(bits)}")
    value = dict(zip(circuit.input_ids, (int(b) & 1 for b in bits)))
    for x in circuit.topo:
        g = circuit.gate(x)
        if g.kind != "INPUT":
            value[x] = apply_gate(g.kind, [value[y] for y in g.inputs])
    return [value[x] for x in circuit.output_ids]


def load_circuit(text: str) -> Circuit:
    gates = []
    seen_logic = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 2:
            raise ParseError(lineno, "expected 'id KIND [in1] [in2]'")
        kind = parts[1].upper()
        if kind not in ARITY:
            raise ParseError(lineno, f"unknown gate kind {parts[1]!r}")
        try:
            gid = int(parts[0])
            ins = tuple(int(x) for x in parts[2:])
        except ValueError:
            raise ParseError(lineno, "gate ids must be integers") from None
        if kind == "INPUT" and seen_logic:
            raise ParseError(lineno, "INPUT gates must be declared first")
        seen_logic |= kind != "INPUT"
        if len(ins) != ARITY[kind]:
            raise FanInViolation(f"line {lineno}: {kind} takes {ARITY[kind]} inputs, got {len(ins)}")
        gates.append(Gate(gid, kind, ins))
    return Circuit(gates)


def save_circuit(circuit: Circuit) -> str:
    return "".join(f"{g.id} {g.kind}" + "".join(f" {x}" for x in g.inputs) + "\n" for g in circuit.gates)


def random_circuit(n_inputs: int, size: int, depth: int, seed: int = 0) -> Circuit:
    """Random layered circuit with exactly ``depth`` levels and ``size`` gates."""
    if depth < 1 or size < n_inputs + depth - 1 or n_inputs < 1:
        raise CircuitError("size must cover the inputs plus one gate per level")
    rng = random.Random(seed)
    gates = [Gate(i, "INPUT") for i in range(n_inputs)]
    levels = [list(range(n_inputs))]
    per_level = [1] * (depth - 1)
    for _ in range(size - n_inputs - (depth - 1)):
        if depth > 1:
            per_level[rng.randrange(depth - 1)] += 1
    next_id = n_inputs
    earlier = list(range(n_inputs))
    for count in per_level:
        prev = levels[-1]
        layer = []
        for _ in range(count):
            kind = rng.choice(("AND", "OR", "NOT", "AND", "OR"))
            first = rng.choice(prev)  # pins the level
            ins = (first,) if kind == "NOT" else (first, rng.choice(earlier))
            gates.append(Gate(next_id, kind, ins))
            layer.append(next_id)
            next_id += 1
        earlier += layer
        levels.append(layer)
    return Circuit(gates)


# --------------------------------------------------------------------------
# MPC simulation


@dataclass
class CircuitPlan:
    slab_depth: int
    slabs: int
    machine_of: dict[tuple[int, int], int]     # (gate, replica) -> machine
    frontier: dict[int, list[int]]             # gate -> frontier gates, sorted by sender
    cone: dict[int, list[int]]                 # gate -> in-slab cone in topological order
    senders: dict[tuple[int, int], list[tuple[int, int]]]  # (gate, replica) -> [(gate, replica)] it reads
    targets: dict[tuple[int, int], list[int]]  # (gate, replica) -> consumer machines
    out_machines: range
    per_out: int


def plan_circuit(circuit: Circuit, s: int) -> CircuitPlan:
    L = max(1, int(math.floor(math.log2(s))))
    level = circuit.level
    slab = {x: -(-level[x] // L) for x in level}
    S = max(slab.values(), default=0)

    cone: dict[int, list[int]] = {}
    frontier: dict[int, list[int]] = {}
    for x in circuit.topo:
        g = circuit.gate(x)
        if g.kind == "INPUT":
            cone[x], frontier[x] = [], []
            continue
        members, front, stack = set(), set(), [x]
        while stack:
            y = stack.pop()
            if y in members:
                continue
            members.add(y)
            for z in circuit.gate(y).inputs:
                gz = circuit.gate(z)
                if slab[z] == slab[x] and gz.kind != "INPUT":
                    stack.append(z)
                else:
                    front.add(z)
        cone[x] = [y for y in circuit.topo if y in members]
        frontier[x] = sorted(front)

    # replicas, decided from the last slab backwards
    cap = s - 1
    outputs = set(circuit.output_ids)
    demand: dict[int, list[tuple[int, int]]] = defaultdict(list)
    replicas: dict[int, int] = {}
    for x in sorted(level, key=lambda y: 1 if circuit.gate(y).kind == "INPUT" else -slab[y]):
        need = len(demand[x]) + (1 if x in outputs else 0)
        replicas[x] = max(1, -(-need // cap))
        for r in range(replicas[x]):
            for f in frontier[x]:
                demand[f].append((x, r))

    machine_of, nxt = {}, 0
    for g in circuit.gates:
        for r in range(replicas[g.id]):
            machine_of[(g.id, r)] = nxt
            nxt += 1
    per_out = max(1, s // 2)
    out_machines = range(nxt, nxt + -(-len(outputs) // per_out))

    targets: dict[tuple[int, int], list[int]] = defaultdict(list)
    senders: dict[tuple[int, int], list[tuple[int, int]]] = defaultdict(list)
    for f, users in demand.items():
        skip = 1 if f in outputs else 0
        for i, user in enumerate(users):
            r = (i + skip) // cap
            targets[(f, r)].append(machine_of[user])
            senders[user].append((f, r))
    for user, lst in senders.items():
        # arrival order: by sending round, then by sender machine
        lst.sort(key=lambda fr: (0 if circuit.gate(fr[0]).kind == "INPUT" else slab[fr[0]], machine_of[fr]))
    return CircuitPlan(L, S, machine_of, frontier, cone, senders, targets, out_machines, per_out)


def simulate_circuit(circuit: Circuit, bits, config: MpcConfig, seed: int = 0,
                     order_seed: int | None = None) -> tuple[list[int], CostReport]:
    """Evaluate the circuit as S + 1 rounds: input delivery, then one per slab."""
    if len(bits) != circuit.n_inputs:
        raise CircuitError(f"expected {circuit.n_inputs} input bits, got {len(bits)}")
    plan = plan_circuit(circuit, config.s)
    if plan.out_machines.stop > config.p:
        raise OutOfMemory(f"circuit needs {plan.out_machines.stop} machines, cap is p={config.p}")
    gate_at = {m: gr for gr, m in plan.machine_of.items()}
    out_pos = {x: i for i, x in enumerate(circuit.output_ids)}
    level = circuit.level
    slab = {x: -(-level[x] // plan.slab_depth) for x in level}
    inputs = {plan.machine_of[(x, r)]: [int(b) & 1]
              for x, b in zip(circuit.input_ids, bits) for r in range(_replicas(plan, x))}

    def emit(gr, value):
        out = [(m, [value]) for m in plan.targets.get(gr, ())]
        x, r = gr
        if r == 0 and x in out_pos:
            p = out_pos[x]
            out.append((plan.out_machines.start + p // plan.per_out, [p, value]))
        return out

    def make_step(sigma):
        def step(machine, memory, rng):
            gr = gate_at.get(machine)
            if gr is None:
                return memory, []
            x, _ = gr
            g = circuit.gate(x)
            if g.kind == "INPUT":
                return ([], emit(gr, memory[0])) if sigma == 0 else (memory, [])
            if sigma == 0 or slab[x] != sigma:
                return memory, []
            srcs = plan.senders.get(gr, [])
            value = dict(zip((f for f, _ in srcs), memory))
            for y in plan.cone[x]:
                gy = circuit.gate(y)
                value[y] = apply_gate(gy.kind, [value[z] for z in gy.inputs])
            return [], emit(gr, value[x])
        return step

    program = [Step(make_step(sigma), machines=()) for sigma in range(plan.slabs + 1)]
    memory, report = run_program(program, inputs, config, seed=seed,
                                 outputs=plan.out_machines, order_seed=order_seed)
    result = [0] * circuit.n_outputs
    for words in memory.values():
        for p, v in zip(words[::2], words[1::2]):
            result[p] = v
    return result, report


def _replicas(plan: CircuitPlan, x: int) -> int:
    r = 0
    while (x, r) in plan.machine_of:
        r += 1
    return r


def round_bound(circuit: Circuit, s: int) -> int:
    return -(-circuit.depth // max(1, int(math.floor(math.log2(s))))) + 2


def config_for(s: int, machines: int) -> MpcConfig:
    """A configuration whose word budget is exactly s and whose cap p covers ``machines``."""
    cfg = MpcConfig(s * s, 0.5)
    gamma = 0.0
    while cfg.p < machines:
        gamma += 0.05
        cfg = MpcConfig(s * s, 0.5, gamma)
    return cfg
