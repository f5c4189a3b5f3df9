"""Experiment driver: sample instances, run reductions, compare, report.

Reports are flat ``key=value`` lines in a fixed order so two runs of the
same configuration produce byte-identical text.
"""
from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import graphs, oracles
from .circuit import config_for, evaluate, random_circuit, round_bound, simulate_circuit
from .engine import BudgetViolation, Cluster, MpcConfig, OutOfMemory, Table
from .graphs import Answer, BadParams, GraphInstance, SuccessorList
from .primitives import replicate
from .reductions import REDUCTIONS, betweenness_promise, get, run_reduction
from .reductions.base import TargetBatch

SOLVERS = ("oracle", "chained")

# Growth constants checked on every run.
C1 = 10    # sp-to-diameter: added nodes and edges <= C1 * n
C2 = 1     # sp-to-diameter: largest target weight <= C2 * n * M
C3 = 8     # apsp-via-sp: total words <= C3 * n^2 * (n + m)


@dataclass
class ExperimentConfig:
    tag: str
    family: str | None = None
    params: dict = field(default_factory=dict)
    seed: int = 0
    epsilon: float = 0.5
    gamma: float | None = None
    trials: int = 1
    solver: str = "oracle"
    dist: str = "round_robin"
    n_min: int = 4
    n_max: int = 16

    def __post_init__(self):
        if self.tag not in REDUCTIONS:
            raise BadParams(f"unknown reduction {self.tag!r}")
        if self.family is not None and self.family not in graphs.FAMILIES:
            raise BadParams(f"unknown family {self.family!r}")
        if self.trials < 1:
            raise BadParams("trials must be >= 1")
        if self.solver not in SOLVERS:
            raise BadParams(f"solver must be one of {SOLVERS}")
        if self.dist not in graphs.DIST_MODES:
            raise BadParams(f"distribution must be one of {graphs.DIST_MODES}")
        if not 0 < self.epsilon < 1:
            raise BadParams("epsilon must lie in (0, 1)")
        if self.gamma is not None and self.gamma <= 0:
            raise BadParams("gamma must be positive")
        if not 2 <= self.n_min <= self.n_max:
            raise BadParams("need 2 <= n_min <= n_max")

    def lines(self) -> list[str]:
        params = ",".join(f"{k}:{v}" for k, v in sorted(self.params.items()))
        return [f"config.tag={self.tag}", f"config.family={self.family or 'default'}",
                f"config.params={params}", f"config.seed={self.seed}",
                f"config.epsilon={self.epsilon}",
                f"config.gamma={'auto' if self.gamma is None else self.gamma}",
                f"config.trials={self.trials}", f"config.solver={self.solver}",
                f"config.dist={self.dist}", f"config.n_range={self.n_min}..{self.n_max}"]


# --------------------------------------------------------------------------
# Instances


def _query(g: GraphInstance, rng: random.Random, **extra) -> GraphInstance:
    return g.with_query(s=rng.randrange(g.n), t=rng.randrange(g.n), **extra)


def _default_instance(tag: str, n: int, seed: int):
    rng = random.Random(seed)
    if tag in ("ord-to-cycles", "list-ranking-via-ord"):
        return graphs.generate("successor_path", seed=seed, n=max(n, 3))
    if tag == "bipartiteness-to-stconn":
        return graphs.generate("bipartite_double_cover_test", seed=seed, n=n,
                               p=min(1.0, 3.0 / n))
    if tag in ("stconn-to-bipartiteness", "cc-via-stconn"):
        g = graphs.generate("gnp", seed=seed, n=n, p=min(1.0, rng.uniform(0.5, 2.5) / n))
        return _query(g, rng)
    if tag == "mincut-via-cc":
        return graphs.generate("gnp", seed=seed, n=n, p=min(1.0, rng.uniform(1.5, 4.0) / n))
    if tag == "sp-to-streach":
        g = graphs.generate("gnp", seed=seed, n=n, p=min(1.0, rng.uniform(1.0, 3.0) / n))
        s, t = rng.sample(range(n), 2)
        d = oracles.dijkstra(g, s)[t]
        # half the time ask about the true distance, so both answers occur
        k = d if d is not None and rng.random() < 0.5 else rng.randint(1, n - 1)
        return g.with_query(s=s, t=t, k=k)
    directed = rng.random() < 0.5
    if tag == "streach-to-sp":
        g = graphs.generate("gnp", seed=seed, n=n, p=min(1.0, rng.uniform(0.5, 2.0) / n), directed=directed)
        return _query(g, rng)
    directed = directed and tag != "msf-via-stconn"
    limit = n * (n - 1) // (1 if directed else 2)
    m = min(limit, rng.randint(n // 2, 2 * n))
    lo = rng.choice([0, 1]) if tag != "msf-via-stconn" else 1
    g = graphs.generate("gnm_weighted", seed=seed, n=n, m=m, M=rng.choice([1, 3, n]),
                        min_weight=lo, directed=directed)
    return _query(g, rng)


def sample_instance(tag: str, n: int, seed: int, family: str | None = None, params: dict | None = None):
    """A seeded instance the reduction accepts.

    Betweenness inputs are redrawn until they meet the unique-path promise.
    """
    red = get(tag)
    for attempt in range(200):
        s = seed * 1000 + attempt if attempt else seed
        if family is None:
            inst = _default_instance(tag, n, s)
        else:
            inst = graphs.generate(family, seed=s, **{"n": n, **(params or {})})
            if isinstance(inst, GraphInstance) and inst.s is None:
                inst = _query(inst, random.Random(s))
        if tag == "sp-to-betweenness" and not betweenness_promise(inst):
            continue
        red.check(inst)
        return inst
    raise BadParams(f"no {tag} instance met the promise after 200 draws")


# --------------------------------------------------------------------------
# Chained solving: answer a target by one more reduction hop


CHAIN_MAX_N = 64
CHAIN_MAX_COUNT = 8
_CHAIN = {r.source: tag for tag, r in REDUCTIONS.items()
          if r.source in ("st_connectivity", "bipartiteness", "cc_labels", "ord", "st_reachability")}
_CHAIN["shortest_path"] = "sp-to-diameter"


def _as_vector(answer: Answer) -> np.ndarray:
    if answer.kind == "boolean":
        return np.array([int(answer.value)], np.int64)
    if answer.kind == "integer":
        return np.array([answer.value], np.int64)
    return np.asarray(answer.value, np.int64)


def chained_solver(batch: TargetBatch, heads: np.ndarray, edges: np.ndarray) -> list:
    """Solve each target instance by running a reduction whose source it is.

    The inner run uses the oracle for its own targets.  Targets with no such
    reduction, large batches and instances the inner reduction rejects fall
    back to the oracle.
    """
    tag = _CHAIN.get(batch.tag)
    if tag is None or batch.count > CHAIN_MAX_COUNT or int(heads[:, 1].max()) > CHAIN_MAX_N:
        return oracles.solve_many(batch.tag, heads, edges, batch.directed, batch.weighted)
    red = get(tag)
    bounds = np.searchsorted(edges[:, 0], np.arange(batch.count + 1))
    out = []
    for i, (_, n, s, t, k) in enumerate(heads.tolist()):
        rows = edges[bounds[i]:bounds[i + 1], 1:]
        opt = lambda x: None if x < 0 else x
        if batch.tag == "ord":
            succ = [-1] * n
            for a, b, _ in rows.tolist():
                succ[a] = b
            inst = SuccessorList(n, tuple(succ), opt(s), opt(t))
        else:
            inst = GraphInstance(n, tuple(map(tuple, rows.tolist())), directed=batch.directed,
                                 weighted=batch.weighted, s=opt(s), t=opt(t), k=opt(k))
        try:
            red.check(inst)
        except BadParams:
            out.extend(oracles.solve_many(batch.tag, heads[i:i + 1], _renumber(rows, 0),
                                          batch.directed, batch.weighted))
            continue
        out.append(_as_vector(run_reduction(red, inst, 0.5).answer))
    return out


def _renumber(rows: np.ndarray, inst: int) -> np.ndarray:
    return np.column_stack([np.full(len(rows), inst, np.int64), rows]).reshape(-1, 4)


# --------------------------------------------------------------------------
# Growth bounds


def growth_violations(tag: str, inst, outcome) -> list[str]:
    """Bounds on target size and weight, checked on every run."""
    bad = []
    if tag == "sp-to-diameter":
        n, M = inst.n, inst.M
        if outcome.target_nodes - n > C1 * n:
            bad.append("nodes")
        if outcome.target_edges - inst.m > C1 * n:
            bad.append("edges")
        if outcome.target_weight > C2 * n * M:
            bad.append("weight")
    elif tag in ("streach-to-sp", "sp-to-streach"):
        if outcome.target_nodes > inst.n * inst.n:
            bad.append("layers")
    elif tag == "apsp-via-sp":
        if outcome.report.total_words > C3 * inst.n ** 2 * (inst.n + inst.m):
            bad.append("words")
    return bad


# --------------------------------------------------------------------------
# Trials and reports


@dataclass
class TrialRecord:
    index: int
    n: int
    m: int
    rounds_transform: int = 0
    rounds_extract: int = 0
    max_sent: int = 0
    max_received: int = 0
    machines_used: int = 0
    total_words: int = 0
    answer: str = ""
    oracle_answer: str = ""
    match: bool = False
    growth: str = "ok"
    violation: str = ""

    FIELDS = ("n", "m", "rounds_transform", "rounds_extract", "max_sent", "max_received",
              "machines_used", "total_words", "answer", "oracle_answer", "match", "growth")

    def lines(self) -> list[str]:
        out = []
        for k in self.FIELDS:
            v = getattr(self, k)
            out.append(f"trial.{self.index}.{k}={int(v) if isinstance(v, bool) else v}")
        if self.violation:
            out.append(f"trial.{self.index}.violation={self.violation}")
        return out

    @property
    def rounds(self) -> int:
        return self.rounds_transform + self.rounds_extract


@dataclass
class Report:
    config: ExperimentConfig
    trials: list[TrialRecord]

    @property
    def passed(self) -> int:
        return sum(t.match for t in self.trials)

    @property
    def violations(self) -> int:
        return sum(bool(t.violation) for t in self.trials)

    @property
    def histogram(self) -> dict[int, int]:
        return dict(sorted(Counter(t.rounds for t in self.trials if not t.violation).items()))

    @property
    def exit_code(self) -> int:
        if self.violations:
            return 2
        return 0 if self.passed == len(self.trials) else 1

    def text(self) -> str:
        lines = self.config.lines()
        for t in self.trials:
            lines += t.lines()
        lines += [f"summary.trials={len(self.trials)}", f"summary.pass={self.passed}",
                  f"summary.violations={self.violations}"]
        lines += [f"summary.rounds.{r}={c}" for r, c in self.histogram.items()]
        return "\n".join(lines) + "\n"


def trial_seed(cfg: ExperimentConfig, index: int) -> tuple[int, int]:
    """(n, instance seed) for trial ``index``."""
    rng = random.Random(f"{cfg.tag}/{cfg.seed}/{index}")
    n = cfg.params.get("n") or rng.randint(cfg.n_min, cfg.n_max)
    return int(n), rng.getrandbits(31)


def run_trial(cfg: ExperimentConfig, index: int, inst=None) -> TrialRecord:
    n, seed = trial_seed(cfg, index)
    if inst is None:
        params = {k: v for k, v in cfg.params.items() if k != "n"}
        inst = sample_instance(cfg.tag, n, seed, cfg.family, params)
    red = get(cfg.tag)
    rec = TrialRecord(index, inst.n, getattr(inst, "m", inst.n - 1))
    expected = red.expected(inst)
    rec.oracle_answer = expected.text()
    solver = chained_solver if cfg.solver == "chained" else None
    try:
        out = run_reduction(red, inst, cfg.epsilon, cfg.gamma, cfg.dist, seed, solver)
    except (BudgetViolation, OutOfMemory) as e:
        rec.violation = str(e).replace("\n", " ")
        return rec
    rep = out.report
    rec.rounds_transform, rec.rounds_extract = out.rounds_transform, out.rounds_extract
    rec.max_sent, rec.max_received = rep.max_sent, rep.max_received
    rec.machines_used, rec.total_words = rep.machines_used, rep.total_words
    rec.answer = out.answer.text()
    bad = growth_violations(cfg.tag, inst, out)
    rec.growth = ",".join(bad) or "ok"
    s = out.config.s
    if rep.max_sent > s or rep.max_received > s:
        rec.violation = f"traffic above s={s}"
    rec.match = red.matches(inst, out.answer, expected) and not bad
    return rec


def cmd_verify(cfg: ExperimentConfig, instances=None) -> Report:
    """Run every trial in index order; ``instances`` overrides sampling."""
    if instances is not None:
        instances = list(instances)
        cfg.trials = len(instances)
    records = [run_trial(cfg, i, None if instances is None else instances[i]) for i in range(cfg.trials)]
    return Report(cfg, records)


def cmd_reduce(tag: str, inst, epsilon: float = 0.5, gamma: float | None = None, dist: str = "round_robin",
               seed: int = 0, solver: str = "oracle"):
    red = get(tag)
    red.check(inst)
    return run_reduction(red, inst, epsilon, gamma, dist, seed,
                         chained_solver if solver == "chained" else None)


# --------------------------------------------------------------------------
# Benchmarks


@dataclass
class BenchTable:
    subject: str
    epsilon: float
    rows: list[tuple[int, int, int]]     # (size, rounds, extra)
    monotone: bool = False               # circuits: rounds may fall, never rise

    @property
    def flagged(self) -> list[int]:
        first = self.rows[0][1]
        out = []
        for i, (size, r, _) in enumerate(self.rows):
            if self.monotone:
                if i and r > self.rows[i - 1][1]:
                    out.append(size)
            elif r != first:
                out.append(size)
        return out

    @property
    def exit_code(self) -> int:
        return 1 if self.flagged else 0

    def text(self) -> str:
        lines = [f"bench.subject={self.subject}", f"bench.epsilon={self.epsilon}"]
        for size, r, extra in self.rows:
            lines += [f"bench.{size}.rounds={r}", f"bench.{size}.check={extra}"]
        lines.append(f"bench.flagged={','.join(map(str, self.flagged)) or 'none'}")
        return "\n".join(lines) + "\n"


def replicate_run(N: int, epsilon: float = 0.5, k: int | None = None, seed: int = 0):
    """Replicate N words k (default N) times; returns (rounds, all copies identical)."""
    k = N if k is None else k
    config = MpcConfig.sized(N, epsilon, 3 * N * k + 4 * N)
    cl = Cluster(config, seed)
    per = cl.s
    words = np.random.default_rng(seed).integers(0, 1 << 30, size=N, dtype=np.int64)
    B = -(-N // per)
    cl.load({"x": Table(1, np.arange(N, dtype=np.int64) // per, words[:, None])}, B)
    rs = replicate(cl, ["x"], range(B), k, degree=1.0)
    t = cl["x"]
    order = np.argsort(t.mach, kind="stable")
    mach, vals = t.mach[order], t.data[order, 0]
    flat = rs.places.reshape(-1)
    loc = np.argsort(flat)
    copy = loc[np.searchsorted(flat[loc], mach)] // B
    ok = len(vals) == N * k
    if ok:
        grouped = vals[np.argsort(copy, kind="stable")].reshape(k, N)
        ok = bool((grouped == words[None, :]).all())
    return cl.rounds, bool(ok)


def cmd_bench(subject: str, sizes: list[int], epsilon: float = 0.5, seed: int = 0,
              trials: int | None = None) -> BenchTable:
    """Round counts per size.

    ``subject`` is a reduction tag (sizes are n), ``replicate`` (sizes are N,
    k = N) or ``circuit`` (sizes are s, fixed depth; rounds may only fall).
    """
    if len(sizes) < 2:
        raise BadParams("bench needs at least two sizes")
    rows = []
    if subject == "replicate":
        for N in sizes:
            r, ok = replicate_run(N, epsilon, seed=seed)
            rows.append((N, r, int(ok)))
        return BenchTable(subject, epsilon, rows)
    if subject == "circuit":
        circ = random_circuit(16, 400, 24, seed)
        bits = [random.Random(seed).randrange(2) for _ in range(circ.n_inputs)]
        want = evaluate(circ, bits)
        for s in sizes:
            got, rep = simulate_circuit(circ, bits, config_for(s, 4 * circ.size + 8), seed)
            rows.append((s, rep.rounds, int(got == want and rep.rounds <= round_bound(circ, s))))
        return BenchTable(subject, epsilon, rows, monotone=True)
    if subject not in REDUCTIONS:
        raise BadParams(f"unknown bench subject {subject!r}")
    red = get(subject, **({"trials": trials} if trials and subject == "mincut-via-cc" else {}))
    for n in sizes:
        inst = sample_instance(subject, n, seed)
        out = run_reduction(red, inst, epsilon, seed=seed)
        rows.append((n, out.rounds_transform + out.rounds_extract, int(red.matches(inst, out.answer, red.expected(inst)))))
    return BenchTable(subject, epsilon, rows)
