import pytest

from mpcreduce import graphs, harness, oracles
from mpcreduce.cli import main
from mpcreduce.graphs import BadParams
from mpcreduce.harness import ExperimentConfig, cmd_bench, cmd_verify


def test_generate_two_cycles(tmp_path, capsys):
    out = tmp_path / "g.txt"
    assert main(["generate", "two_cycles", "n=10", "--seed", "3", "--out", str(out)]) == 0
    g = graphs.load_graph(out.read_text())
    assert g.n == 10 and oracles.solve("num_cc", g).value == 2


def test_generate_is_deterministic(capsys):
    texts = []
    for _ in range(2):
        assert main(["generate", "gnm_weighted", "n=12", "m=20", "M=9", "--seed", "5"]) == 0
        texts.append(capsys.readouterr().out)
    assert texts[0] == texts[1] and texts[0]


@pytest.mark.parametrize("argv", [
    ["generate", "petersen", "n=10"],
    ["generate", "gnp", "n"],
    ["verify", "no-such-tag"],
    ["bench", "sp-to-diameter", "16,x"],
    [],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 3
    assert "error" in capsys.readouterr().err


def test_parse_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("3 2 0 0\n0 1\n")
    assert main(["reduce", "cc-via-stconn", str(bad)]) == 3


def test_reduce_file(tmp_path, capsys):
    f = tmp_path / "g.txt"
    f.write_text("4 3 0 0\n0 1\n1 2\n2 3\ns 0\nt 3\n")
    assert main(["reduce", "sp-to-diameter", str(f)]) == 0
    text = capsys.readouterr().out
    assert "trial.0.answer=3" in text and "summary.pass=1" in text


def test_verify_report_is_deterministic():
    cfg = lambda: ExperimentConfig("stconn-to-bipartiteness", trials=6, seed=11, n_max=20)
    a, b = cmd_verify(cfg()).text(), cmd_verify(cfg()).text()
    assert a == b
    assert "summary.trials=6" in a and "summary.pass=6" in a and "summary.violations=0" in a


def test_report_keys_in_trial_order():
    text = cmd_verify(ExperimentConfig("sp-to-radius", trials=3)).text()
    idx = [int(line.split(".")[1]) for line in text.splitlines() if line.startswith("trial.")]
    assert idx == sorted(idx)
    assert {f"trial.0.{k}" for k in harness.TrialRecord.FIELDS} <= {ln.split("=")[0] for ln in text.splitlines()}


def test_mismatch_exit_code():
    report = cmd_verify(ExperimentConfig("cc-via-stconn"),
                        [graphs.generate("one_cycle", seed=i, n=6) for i in range(2)])
    assert report.exit_code == 0
    bad = report.trials[0]
    bad.match = False
    assert report.exit_code == 1


def test_budget_exit_code():
    # gamma far too small for the replicas the reduction needs
    report = cmd_verify(ExperimentConfig("cc-via-stconn", gamma=0.05),
                        [graphs.generate("one_cycle", seed=0, n=8)])
    assert report.violations == 1 and report.exit_code == 2
    assert "summary.violations=1" in report.text()
    assert main(["verify", "cc-via-stconn", "--gamma", "0.05", "--n-min", "8", "--n-max", "8"]) == 2


def test_bad_config():
    with pytest.raises(BadParams):
        ExperimentConfig("sp-to-diameter", epsilon=1.5)
    with pytest.raises(BadParams):
        ExperimentConfig("sp-to-diameter", solver="magic")


@pytest.mark.parametrize("tag", ["cc-via-stconn", "sp-to-radius", "stconn-to-bipartiteness", "apsp-via-sp"])
def test_chained_solver(tag):
    report = cmd_verify(ExperimentConfig(tag, trials=3, solver="chained", n_max=10))
    assert report.passed == 3


def test_bench_constant():
    table = cmd_bench("sp-to-diameter", [16, 32])
    assert table.exit_code == 0 and len({r for _, r, _ in table.rows}) == 1
    assert "bench.subject=sp-to-diameter" in table.text()


def test_bench_flags_variation():
    table = harness.BenchTable("x", 0.5, [(16, 4, True), (32, 5, True)], monotone=False)
    assert table.flagged and table.exit_code == 1
    falling = harness.BenchTable("circuit", 0.5, [(16, 7, True), (64, 5, True)], monotone=True)
    assert not falling.flagged


def test_bench_replicate_and_circuit(capsys):
    assert main(["bench", "replicate", "256,1024"]) == 0
    assert main(["bench", "circuit", "16,64,256"]) == 0
    out = capsys.readouterr().out
    assert out.count("bench.flagged=none") == 2


def test_circuit_command(tmp_path, capsys):
    f = tmp_path / "c.txt"
    f.write_text("0 INPUT\n1 INPUT\n2 OR 0 1\n3 AND 0 1\n4 NOT 3\n5 AND 2 4\n")
    assert main(["circuit", str(f), "--bits", "10"]) == 0
    out = capsys.readouterr().out
    assert "circuit.outputs=1" in out and "circuit.match=1" in out
    assert main(["circuit", str(f), "--bits", "1x"]) == 3
