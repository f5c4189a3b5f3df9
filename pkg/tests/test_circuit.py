import itertools

import pytest

from mpcreduce.circuit import (Circuit, CyclicCircuit, DanglingInput, FanInViolation, Gate, config_for, evaluate,
                               load_circuit, random_circuit, round_bound, save_circuit, simulate_circuit)

XOR = "0 INPUT\n1 INPUT\n2 OR 0 1\n3 AND 0 1\n4 NOT 3\n5 AND 2 4\n"


def test_single_and():
    c = load_circuit("0 INPUT\n1 INPUT\n2 AND 0 1")
    assert c.depth == 2
    out, rep = simulate_circuit(c, [1, 1], config_for(16, 16))
    assert out == [1] and rep.rounds <= 3


def test_xor_truth_table():
    c = load_circuit(XOR)
    # XOR from AND/OR/NOT: four logic gates, four nodes on the longest path
    assert c.size == 6 and c.depth == 4
    table = [simulate_circuit(c, list(bits), config_for(16, 32))[0][0]
             for bits in itertools.product((0, 1), repeat=2)]
    assert table == [0, 1, 1, 0]


def test_dangling_input():
    with pytest.raises(DanglingInput):
        load_circuit("0 INPUT\n1 NOT 7")


def test_fan_in():
    with pytest.raises(FanInViolation):
        load_circuit("0 INPUT\n1 INPUT\n2 NOT 0 1")


def test_cycle():
    with pytest.raises(CyclicCircuit):
        Circuit([Gate(0, "INPUT"), Gate(1, "AND", (0, 2)), Gate(2, "NOT", (1,))])


def test_round_trip():
    c = random_circuit(5, 40, 7, seed=2)
    assert save_circuit(load_circuit(save_circuit(c))) == save_circuit(c)
    assert c.depth == 7 and c.size == 40


@pytest.mark.parametrize("s", [16, 64, 256])
@pytest.mark.parametrize("seed", range(5))
def test_random_circuits(s, seed):
    c = random_circuit(12, 300, 20, seed=seed)
    bits = [(seed >> i) & 1 for i in range(12)]
    out, rep = simulate_circuit(c, bits, config_for(s, 4 * c.size + 8), seed)
    assert out == evaluate(c, bits)
    assert rep.rounds <= round_bound(c, s)
    assert rep.max_sent <= s and rep.max_received <= s


def test_rounds_do_not_grow_with_s():
    c = random_circuit(16, 400, 24, seed=0)
    bits = [1, 0] * 8
    rounds = [simulate_circuit(c, bits, config_for(s, 4 * c.size + 8))[1].rounds for s in (16, 64, 256)]
    assert rounds == sorted(rounds, reverse=True)
    # frozen: slabs of floor(log2 s) levels plus the input round
    assert rounds == [7, 5, 4]
