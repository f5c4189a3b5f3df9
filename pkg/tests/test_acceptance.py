"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Slow by design (about half an hour on one core); the sweep behind
criteria 1, 3 and 5 is shared.
"""
import itertools
import random
import time

import networkx as nx
import numpy as np
import pytest

from mpcreduce import graphs, oracles
from mpcreduce.circuit import config_for, evaluate, random_circuit, round_bound, simulate_circuit
from mpcreduce.graphs import GraphInstance
from mpcreduce.harness import C1, C2, C3, ExperimentConfig, cmd_verify, growth_violations, replicate_run, sample_instance
from mpcreduce.reductions import REDUCTIONS, get, run_reduction
from mpcreduce.reductions.connectivity import default_trials, run_ord_batch

TRIALS = 200
MODES = ("round_robin", "shuffle")
# full contraction schedules grow as n^4 log n words, so min cut draws n from the low end
MINCUT_N = (4, 12)
SIZES = (16, 32, 64, 128)


def line(capsys, k, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {k}: {'PASS' if ok else 'FAIL'} {detail}")


@pytest.fixture(scope="module")
def sweep():
    """200 seeded trials per reduction and distribution mode."""
    start = time.time()
    reports = {}
    for tag in sorted(REDUCTIONS):
        lo, hi = MINCUT_N if tag == "mincut-via-cc" else (4, 64)
        for k, mode in enumerate(MODES):
            cfg = ExperimentConfig(tag, seed=k, trials=TRIALS, dist=mode, n_min=lo, n_max=hi)
            reports[tag, mode] = cmd_verify(cfg)
    return reports, time.time() - start


@pytest.fixture(scope="module")
def constancy():
    """Rounds per (tag, n) over two instances each, plus every outcome for reuse."""
    rows = {}
    for tag in sorted(REDUCTIONS):
        options = {"trials": 8} if tag == "mincut-via-cc" else {}
        red = get(tag, **options)
        for n in SIZES:
            for seed in range(2):
                inst = sample_instance(tag, n, seed)
                out = run_reduction(red, inst, seed=seed)
                rows[tag, n, seed] = (inst, out, red.matches(inst, out.answer, red.expected(inst)))
    return rows


def exhaustive_ord(n_max=8, chunk=100_000):
    """Every path on n <= n_max nodes with every ordered pair a != b."""
    checked = bad = 0
    for n in range(3, n_max + 1):
        perms = np.array(list(itertools.permutations(range(n))), np.int64)
        succ = np.full((len(perms), n), -1, np.int64)
        succ[np.arange(len(perms))[:, None], perms[:, :-1]] = perms[:, 1:]
        pairs = np.array([(a, b) for a in range(n) for b in range(n) if a != b], np.int64)
        S = np.repeat(succ, len(pairs), 0)
        A, B = np.tile(pairs[:, 0], len(perms)), np.tile(pairs[:, 1], len(perms))
        pos = np.repeat(np.argsort(perms, 1), len(pairs), 0)
        rows = np.arange(len(S))
        want = pos[rows, A] < pos[rows, B]
        for c in range(0, len(S), chunk):
            got, _ = run_ord_batch(S[c:c + chunk], A[c:c + chunk], B[c:c + chunk])
            bad += int((got != want[c:c + chunk]).sum())
        checked += len(S)
    return checked, bad


def test_criterion_1_correctness(sweep, capsys):
    reports, seconds = sweep
    start = time.time()
    checked, ord_bad = exhaustive_ord()
    seconds += time.time() - start
    failed = {f"{tag}/{mode}": len(r.trials) - r.passed for (tag, mode), r in reports.items()
              if r.passed != len(r.trials)}
    per_tag = {tag: sum(len(reports[tag, m].trials) for m in MODES) for tag in REDUCTIONS}
    ok = not failed and ord_bad == 0 and min(per_tag.values()) >= 2 * TRIALS and seconds < 600
    line(capsys, 1, ok, f"{len(REDUCTIONS)} reductions x {2 * TRIALS} trials, mismatches {failed or 0}; "
                        f"exhaustive ORD {checked} cases, {ord_bad} wrong; {seconds:.0f}s")
    assert ok


def test_criterion_2_round_constancy(constancy, capsys):
    rounds = {}
    for (tag, n, _), (_, out, _) in constancy.items():
        rounds.setdefault(tag, set()).add(out.rounds_transform + out.rounds_extract)
    # the contraction schedule does not depend on T: check one full-T run at n = 16
    g = sample_instance("mincut-via-cc", 16, 0)
    full = run_reduction(get("mincut-via-cc"), g)
    rounds["mincut-via-cc"].add(full.rounds_transform + full.rounds_extract)
    varying = {tag: sorted(r) for tag, r in rounds.items() if len(r) != 1}
    wrong = [key for key, (_, _, match) in constancy.items() if not match]
    ok = not varying and not wrong and full.answer == get("mincut-via-cc").expected(g)
    summary = ", ".join(f"{tag}={min(r)}" for tag, r in sorted(rounds.items()))
    line(capsys, 2, ok, f"eps=1/2, n in {SIZES}: {summary}" + (f"; varying {varying}" if varying else "")
         + (f"; wrong answers {wrong}" if wrong else ""))
    assert ok


def test_criterion_3_budgets(sweep, constancy, capsys):
    reports, _ = sweep
    swept = sum(r.violations for r in reports.values())
    # any traffic or memory overrun raises, so finishing a run means it was clean
    over = sum(out.report.max_sent > out.config.s or out.report.max_received > out.config.s
               for _, out, _ in constancy.values())
    stress_bad = stress_wrong = 0
    for tag in sorted(REDUCTIONS):
        hi = 8 if tag == "mincut-via-cc" else 16
        r = cmd_verify(ExperimentConfig(tag, seed=9, trials=10, epsilon=0.9, n_min=4, n_max=hi))
        stress_bad += r.violations
        stress_wrong += len(r.trials) - r.passed
    ok = swept == 0 and over == 0 and stress_bad == 0 and stress_wrong == 0
    line(capsys, 3, ok, f"violations: sweep {swept}, constancy {over}, eps=0.9 stress {stress_bad} "
                        f"({stress_wrong} stress mismatches)")
    assert ok


def test_criterion_4_replication(capsys):
    results = {2 ** e: replicate_run(2 ** e, 0.5) for e in range(8, 13)}
    ok = all(r <= 4 and same for r, same in results.values()) and len({r for r, _ in results.values()}) == 1
    line(capsys, 4, ok, "k=N rounds " + ", ".join(f"N={N}:{r}{'' if same else ' DIFFER'}"
                                                  for N, (r, same) in results.items()))
    assert ok


def test_criterion_5_growth(sweep, constancy, capsys):
    reports, _ = sweep
    flagged = [f"{tag}/{t.index}:{t.growth}" for (tag, _), r in reports.items() for t in r.trials
               if t.growth != "ok"]
    worst = {"nodes": 0.0, "edges": 0.0, "weight": 0.0, "layered": 0.0, "apsp": 0.0}
    for (tag, n, _), (inst, out, _) in constancy.items():
        flagged += [f"{tag}/n={n}:{b}" for b in growth_violations(tag, inst, out)]
        if tag == "sp-to-diameter":
            worst["nodes"] = max(worst["nodes"], (out.target_nodes - n) / n)
            worst["edges"] = max(worst["edges"], (out.target_edges - inst.m) / n)
            worst["weight"] = max(worst["weight"], out.target_weight / (n * inst.M))
        elif tag in ("streach-to-sp", "sp-to-streach"):
            worst["layered"] = max(worst["layered"], out.target_nodes / n ** 2)
        elif tag == "apsp-via-sp":
            worst["apsp"] = max(worst["apsp"], out.report.total_words / (n * n * (n + inst.m)))
    ok = not flagged
    measured = ", ".join(f"{k} {v:.2f}" for k, v in worst.items())
    line(capsys, 5, ok, f"C1={C1} C2={C2} C3={C3}; worst ratios {measured}" + (f"; {flagged[:5]}" if flagged else ""))
    assert ok


def mincut_instances():
    """Twenty fixed instances, n = 4..16, mixing sparse, cyclic, grid and dense shapes."""
    out = []
    for i in range(20):
        n = 4 + (12 * i) // 19
        kind = i % 4
        if kind == 0:
            g = graphs.generate("gnp", seed=1000 + i, n=n, p=min(1.0, 2.5 / n))
        elif kind == 1:
            g = graphs.generate("one_cycle", seed=1000 + i, n=n)
        elif kind == 2:
            rows = 2 if n < 9 else 3
            g = graphs.generate("grid", seed=1000 + i, rows=rows, cols=n // rows)
        else:
            g = graphs.generate("gnp", seed=1000 + i, n=min(n, 7), p=0.8)
        out.append(g)
    return out


def test_criterion_6_karger(capsys):
    start = time.time()
    wrong, runs, cuts = [], 0, []
    red = get("mincut-via-cc")
    for idx, g in enumerate(mincut_instances()):
        want = red.expected(g)
        cuts.append(want.value[0])
        for seed in range(100):
            out = run_reduction(red, g, seed=seed)
            runs += 1
            if not red.matches(g, out.answer, want):
                wrong.append((idx, seed))
    ok = not wrong and runs == 2000
    line(capsys, 6, ok, f"{runs} runs, T=ceil(n^2 ln n) up to {default_trials(16)}, cut values {sorted(set(cuts))}, "
                        f"wrong {wrong[:5] or 0}; {time.time() - start:.0f}s")
    assert ok


def test_criterion_7_circuits(capsys):
    wrong, over, deepest, biggest = [], [], 0, 0
    for i in range(500):
        rng = random.Random(i)
        depth = rng.randint(1, 40)
        n_inputs = rng.randint(1, 64)
        size = rng.randint(n_inputs + depth - 1, 2000)
        c = random_circuit(n_inputs, size, depth, seed=i)
        deepest, biggest = max(deepest, c.depth), max(biggest, c.size)
        bits = [rng.randrange(2) for _ in range(n_inputs)]
        want = evaluate(c, bits)
        for s in (16, 64, 256):
            got, rep = simulate_circuit(c, bits, config_for(s, 4 * c.size + 8), i)
            if got != want:
                wrong.append((i, s))
            if rep.rounds > round_bound(c, s):
                over.append((i, s, rep.rounds))
    ok = not wrong and not over and deepest <= 40 and biggest <= 2000
    line(capsys, 7, ok, f"500 circuits (size <= {biggest}, depth <= {deepest}) x s in 16/64/256: "
                        f"wrong {len(wrong)}, over the round bound {len(over)}")
    assert ok


def _instance(h, weighted=False, rng=None):
    edges = tuple((u, v, rng.randint(1, 5) if weighted else 1) for u, v in h.edges())
    return GraphInstance(h.number_of_nodes(), edges, directed=h.is_directed(), weighted=weighted)


def random_weighted(rng, seed, n_lo, n_hi, m_hi, M, directed=False, min_weight=1):
    n = rng.randint(n_lo, n_hi)
    room = n * (n - 1) // (1 if directed else 2)
    return graphs.generate("gnm_weighted", seed=seed, n=n, m=rng.randint(0, min(m_hi, room)), M=M,
                           directed=directed, min_weight=min_weight)


def test_criterion_8_oracles(monkeypatch, capsys):
    rng = random.Random(8)
    # the atlas holds every graph on up to 7 nodes up to isomorphism
    atlas = [h for h in nx.graph_atlas_g() if h.number_of_nodes() >= 1]
    bc_bad = sum(oracles.betweenness(g) != oracles.brute_force_betweenness(g)
                 for g in map(_instance, atlas))
    # positive weights: a zero-weight cycle leaves path counts undefined
    extra = [random_weighted(rng, i, 2, 7, 12, 4, directed=i % 2 == 0) for i in range(300)]
    bc_bad += sum(oracles.betweenness(g) != oracles.brute_force_betweenness(g) for g in extra)

    small = [_instance(h) for h in atlas if h.number_of_nodes() >= 2]
    small += [random_weighted(rng, i, 2, 10, 25, 6) for i in range(400)]
    sw_bad = sum(oracles.stoer_wagner(g)[0] != oracles.brute_force_mincut(g) for g in small)

    monkeypatch.setattr(oracles, "CHECK_CONSISTENCY", True)
    consistent = 0
    for i in range(300):
        g = random_weighted(rng, i, 1, 12, 30, 9, directed=i % 2 == 1, min_weight=0)
        for tag in ("diameter", "radius", "median"):
            oracles.solve(tag, g)
            consistent += 1
    ok = bc_bad == 0 and sw_bad == 0
    line(capsys, 8, ok, f"Brandes vs brute force on {len(atlas)} atlas + {len(extra)} weighted/directed graphs: "
                        f"{bc_bad} wrong; Stoer-Wagner vs partitions on {len(small)} graphs (n <= 10): {sw_bad} wrong; "
                        f"{consistent} consistency-checked calls")
    assert ok
