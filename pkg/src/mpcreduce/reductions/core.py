"""Reduction interface and the end-to-end runner."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import oracles
from ..engine import Cluster, CostReport, MpcConfig, OutOfMemory
from ..graphs import Answer, BadParams, GraphInstance, SuccessorList, distribute
from .base import Answers, TargetBatch, UniquenessFailure, collect_targets, place_answers

Solver = Callable[[TargetBatch, np.ndarray, np.ndarray], list]


def oracle_solver(batch: TargetBatch, heads: np.ndarray, edges: np.ndarray) -> list:
    return oracles.solve_many(batch.tag, heads, edges, batch.directed, batch.weighted)


@dataclass
class Run:
    """Everything a transform or extract program may consult.

    ``inst`` supplies the program constants (n, m, M, s, t, k and flags),
    which every machine knows; graph content is only reachable through the
    cluster tables.
    """

    cl: Cluster
    inst: object
    in_machines: int
    state: dict = field(default_factory=dict)

    @property
    def s(self) -> int:
        return self.cl.s


@dataclass
class Outcome:
    tag: str
    answer: Answer
    rounds_transform: int
    rounds_extract: int
    report: CostReport
    config: MpcConfig
    target: str
    instances: int
    target_nodes: int
    target_edges: int
    target_weight: int
    seed: int


class Reduction:
    tag = ""
    source = ""          # oracle tag answering the source problem
    target = ""          # target problem tag
    kind = "graph"       # or "successor"
    directed: bool | None = False   # None: both orientations accepted
    degree = 1.0         # declared copy-count degree: copies <= N**degree

    def check(self, inst) -> None:
        if self.kind == "graph":
            if not isinstance(inst, GraphInstance):
                raise BadParams(f"{self.tag} takes a graph")
            if self.directed is not None and inst.directed != self.directed:
                raise BadParams(f"{self.tag} takes {'directed' if self.directed else 'undirected'} graphs")
        elif not isinstance(inst, SuccessorList):
            raise BadParams(f"{self.tag} takes a successor list")

    def demand(self, inst) -> int:
        """Rough total-memory need in words, used to size gamma."""
        return 64 * inst.words

    def expected(self, inst) -> Answer:
        return oracles.solve(self.source, inst)

    def matches(self, inst, answer: Answer, expected: Answer) -> bool:
        return answer == expected

    def transform(self, run: Run) -> TargetBatch:
        raise NotImplementedError

    def extract(self, run: Run, answers: Answers) -> Answer:
        raise NotImplementedError


def solve_targets(cl: Cluster, batch: TargetBatch, solver: Solver | None = None):
    heads, edges = collect_targets(cl, batch)
    values = (solver or oracle_solver)(batch, heads, edges)
    nodes = int(heads[:, 1].max()) if len(heads) else 0
    weight = int(edges[:, 3].max()) if len(edges) else 0
    per_inst = np.bincount(edges[:, 0], minlength=batch.count) if len(edges) else np.zeros(1, int)
    return place_answers(cl, values), (nodes, int(per_inst.max()), weight)


def execute(red: Reduction, inst, config: MpcConfig, mode: str = "round_robin", seed: int = 0,
            solver: Solver | None = None) -> Outcome:
    red.check(inst)
    dist = distribute(inst, config, mode, seed)
    cl = Cluster(config, seed)
    cl.load(dist.tables, dist.machines)
    run = Run(cl, inst, dist.machines)
    batch = red.transform(run)
    r_transform = cl.rounds
    answers, (nodes, edges, weight) = solve_targets(cl, batch, solver)
    answer = red.extract(run, answers)
    return Outcome(red.tag, answer, r_transform, cl.rounds - r_transform, cl.report(), config,
                   batch.tag, batch.count, nodes, edges, weight, seed)


def input_size(inst) -> int:
    if isinstance(inst, GraphInstance):
        return max(inst.words, inst.n)
    return inst.words


def run_reduction(red: Reduction, inst, epsilon: float = 0.5, gamma: float | None = None,
                  mode: str = "round_robin", seed: int = 0, solver: Solver | None = None,
                  attempts: int = 6) -> Outcome:
    """Run with gamma sized from the demand estimate, growing it on OutOfMemory.

    A UniquenessFailure reruns with the next seed; the outcome records the
    seed that succeeded.
    """
    N = input_size(inst)
    words = red.demand(inst)
    for attempt in range(attempts):
        config = MpcConfig(N, epsilon, gamma) if gamma is not None else MpcConfig.sized(N, epsilon, words)
        try:
            return execute(red, inst, config, mode, seed, solver)
        except OutOfMemory:
            if gamma is not None or attempt == attempts - 1:
                raise
            words *= 4
        except UniquenessFailure:
            if attempt == attempts - 1:
                raise
            seed += 1
    raise AssertionError("unreachable")
