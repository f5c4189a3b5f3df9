import numpy as np
import pytest

from mpcreduce.engine import (BudgetViolation, Cluster, CostReport, MachinePool, MalformedProgram, MpcConfig,
                              OutOfMemory, Send, Step, Table, provision_machines, run_program)


@pytest.fixture
def cfg():
    # N = 64, eps = 1/2 -> s = 8
    return MpcConfig(64, 0.5)


def test_config_sizes(cfg):
    assert cfg.s == 8
    assert cfg.p * cfg.s >= 4 * 64
    assert MpcConfig(10 ** 6, 0.9).s == 8      # the floor of 8 words
    assert MpcConfig(10 ** 6, 0.5).s == 1000


@pytest.mark.parametrize("eps", [0.0, 1.0, -0.1])
def test_config_rejects_epsilon(eps):
    with pytest.raises(ValueError):
        MpcConfig(64, eps)


def test_identity_program_costs_nothing(cfg):
    inputs = {0: [1, 2, 3], 4: [9]}
    out, rep = run_program([lambda m, w, rng: (w, [])], inputs, cfg)
    assert out == inputs
    assert rep.rounds == 0


def test_send_over_budget(cfg):
    def blast(m, w, rng):
        return [], [(1, list(range(cfg.s + 1)))] if m == 0 else []
    with pytest.raises(BudgetViolation) as e:
        run_program([blast], {0: [1]}, cfg)
    assert e.value.kind == "send" and e.value.machine == 0 and e.value.amount == 9


def test_receive_over_budget(cfg):
    inputs = {m: [m] for m in range(cfg.s + 1)}
    with pytest.raises(BudgetViolation) as e:
        run_program([lambda m, w, rng: ([], [(cfg.p - 1, w)])], inputs, cfg)
    assert e.value.kind == "receive" and e.value.amount == cfg.s + 1


def test_two_step_broadcast(cfg):
    s = cfg.s
    words = list(range(100, 100 + s))

    def scatter(m, w, rng):
        return ([], [(1 + i, [x]) for i, x in enumerate(w)]) if m == 0 else (w, [])

    def fan(m, w, rng):
        if 1 <= m <= s:
            return [], [(s + 1 + j, w) for j in range(s)]
        return w, []

    out, rep = run_program([scatter, fan], {0: words}, cfg)
    assert rep.rounds == 2 and rep.max_sent <= s and rep.max_received <= s
    for j in range(s):
        assert out[s + 1 + j] == words


def test_empty_outboxes(cfg):
    out, rep = run_program([lambda m, w, rng: ([], [])], {}, cfg)
    assert out == {} and rep.rounds == 0


def test_inbox_sorted_by_sender(cfg):
    k = cfg.s - 1
    inputs = {m: [10 * m] for m in range(k) if m != 7}
    out, rep = run_program([Step(lambda m, w, rng: ([], [(7, w)]))], inputs, cfg, order_seed=5)
    assert out[7] == sorted(10 * m for m in inputs)
    assert rep.rounds == 1


def test_address_outside_cluster(cfg):
    with pytest.raises(MalformedProgram):
        run_program([lambda m, w, rng: ([], [(cfg.p, w)])], {0: [1]}, cfg)


def test_determinism(cfg):
    def noisy(m, w, rng):
        return [], [(rng.randrange(cfg.p), [rng.randrange(1000)])]
    inputs = {m: [m] for m in range(6)}
    a = run_program([noisy, noisy], inputs, cfg, seed=3)
    b = run_program([noisy, noisy], inputs, cfg, seed=3, order_seed=11)
    assert a == b


def test_provisioning(cfg):
    assert provision_machines(0, cfg) == range(0, 0)
    assert len(provision_machines(3 * cfg.s, cfg)) == 3
    with pytest.raises(OutOfMemory):
        provision_machines(cfg.capacity + 1, cfg)
    pool = MachinePool(cfg)
    assert pool.provision(8) == range(0, 1)
    assert pool.provision(9) == range(1, 3)


def test_cost_report_round_trip():
    rep = CostReport(3, 8, 7, 12, 99)
    text = rep.to_text("cost.")
    assert text.splitlines()[0] == "cost.rounds=3"
    assert CostReport.from_text(text, "cost.") == rep


def test_cluster_exchange_tracks_budgets(cfg):
    cl = Cluster(cfg)
    cl.load({"x": Table.build(np.zeros(4, np.int64), np.arange(4)[:, None])}, 1)
    dst = cl.provision(1)
    cl.exchange([Send("y", np.zeros(4, np.int64), np.full(4, dst.start), np.arange(4)[:, None])])
    rep = cl.report()
    assert rep.rounds == 1 and rep.max_sent == 4 and rep.max_received == 4
    assert cl["y"].data[:, 0].tolist() == [0, 1, 2, 3]


def test_cluster_memory_violation(cfg):
    cl = Cluster(cfg)
    with pytest.raises(BudgetViolation) as e:
        cl.load({"x": Table.build(np.zeros(cfg.s + 1, np.int64), np.zeros((cfg.s + 1, 1), np.int64))}, 1)
    assert e.value.kind == "memory"


def test_barrier_counts_a_round(cfg):
    cl = Cluster(cfg)
    cl.barrier()
    assert cl.rounds == 1 and cl.report().max_sent == 0
