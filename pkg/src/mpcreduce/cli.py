"""Command-line entry point: ``mpcreduce {generate,reduce,verify,bench,circuit}``.

Exit codes: 0 all pass, 1 mismatch, 2 budget violation, 3 usage error.
"""
from __future__ import annotations

import argparse
import random
import sys
from pathlib import Path

from . import graphs, harness
from .circuit import config_for, evaluate, load_circuit, round_bound, simulate_circuit
from .engine import BudgetViolation, OutOfMemory
from .graphs import BadParams, ParseError
from .reductions import REDUCTIONS

EXIT_OK, EXIT_MISMATCH, EXIT_BUDGET, EXIT_USAGE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _param(text: str):
    key, sep, val = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    for cast in (int, float):
        try:
            return key, cast(val)
        except ValueError:
            pass
    if val.lower() in ("true", "false"):
        return key, val.lower() == "true"
    return key, val


def _sizes(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"sizes must be integers: {text!r}") from None


def build_parser() -> Parser:
    common = Parser(add_help=False)
    common.add_argument("--epsilon", type=float, default=0.5)
    common.add_argument("--gamma", type=float, default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--trials", type=int, default=1)
    common.add_argument("--solver", choices=harness.SOLVERS, default="oracle")
    common.add_argument("--dist", choices=graphs.DIST_MODES, default="round_robin")
    common.add_argument("--out", type=Path, default=None, help="write the document here instead of stdout")

    p = Parser(prog="mpcreduce", description="O(1)-round MPC reductions between graph problems")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    g = sub.add_parser("generate", parents=[common], help="write a random instance file")
    g.add_argument("family", choices=graphs.FAMILIES)
    g.add_argument("params", nargs="*", type=_param, help="family parameters as key=value")

    r = sub.add_parser("reduce", parents=[common], help="run one reduction on an instance file")
    r.add_argument("tag", choices=list(REDUCTIONS))
    r.add_argument("instance", type=Path)

    v = sub.add_parser("verify", parents=[common], help="run seeded trials against the oracle")
    v.add_argument("tag", choices=list(REDUCTIONS))
    v.add_argument("--family", choices=graphs.FAMILIES, default=None)
    v.add_argument("--n-min", type=int, default=4)
    v.add_argument("--n-max", type=int, default=16)
    v.add_argument("params", nargs="*", type=_param, help="family parameters as key=value")

    b = sub.add_parser("bench", parents=[common], help="round counts across sizes")
    b.add_argument("subject", choices=list(REDUCTIONS) + ["replicate", "circuit"])
    b.add_argument("sizes", type=_sizes, help="comma-separated sizes (n, N or s)")
    b.add_argument("--karger-trials", type=int, default=None, help="contraction trials for mincut-via-cc")

    c = sub.add_parser("circuit", parents=[common], help="simulate a circuit file")
    c.add_argument("circuit", type=Path)
    c.add_argument("--s", type=int, default=16, help="machine memory in words")
    c.add_argument("--bits", default=None, help="input bits, e.g. 0110; random from --seed otherwise")
    return p


def _emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _load_instance(tag: str, path: Path):
    text = path.read_text()
    if REDUCTIONS[tag].kind == "successor":
        return graphs.load_successor(text)
    return graphs.load_graph(text)


def run(args) -> int:
    if args.command == "generate":
        params = dict(args.params)
        query = {k: params.pop(k) for k in ("s", "t", "k") if k in params}
        inst = graphs.generate(args.family, seed=args.seed, **params)
        if query:
            if not isinstance(inst, graphs.GraphInstance):
                raise BadParams("s, t and k apply to graph families")
            inst = inst.with_query(**query)
        save = graphs.save_successor if isinstance(inst, graphs.SuccessorList) else graphs.save_graph
        _emit(save(inst), args.out)
        return EXIT_OK

    if args.command == "reduce":
        inst = _load_instance(args.tag, args.instance)
        cfg = harness.ExperimentConfig(args.tag, seed=args.seed, epsilon=args.epsilon, gamma=args.gamma,
                                       solver=args.solver, dist=args.dist)
        report = harness.cmd_verify(cfg, [inst])
        _emit(report.text(), args.out)
        return report.exit_code

    if args.command == "verify":
        params = dict(args.params)
        cfg = harness.ExperimentConfig(args.tag, args.family, params, args.seed, args.epsilon, args.gamma,
                                       args.trials, args.solver, args.dist, args.n_min, args.n_max)
        report = harness.cmd_verify(cfg)
        _emit(report.text(), args.out)
        return report.exit_code

    if args.command == "bench":
        table = harness.cmd_bench(args.subject, args.sizes, args.epsilon, args.seed, args.karger_trials)
        _emit(table.text(), args.out)
        return table.exit_code

    circ = load_circuit(args.circuit.read_text())
    if args.bits is None:
        rng = random.Random(args.seed)
        bits = [rng.randrange(2) for _ in range(circ.n_inputs)]
    else:
        if set(args.bits) - {"0", "1"}:
            raise BadParams("--bits takes a 0/1 string")
        bits = [int(c) for c in args.bits]
    got, rep = simulate_circuit(circ, bits, config_for(args.s, 4 * circ.size + 8), args.seed)
    want = evaluate(circ, bits)
    bound = round_bound(circ, args.s)
    lines = [f"circuit.size={circ.size}", f"circuit.depth={circ.depth}", f"circuit.s={args.s}",
             f"circuit.outputs={''.join(map(str, got))}", f"circuit.expected={''.join(map(str, want))}",
             f"circuit.round_bound={bound}", f"circuit.match={int(got == want)}", rep.to_text("cost.").rstrip()]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK if got == want and rep.rounds <= bound else EXIT_MISMATCH


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return run(args)
    except UsageError as e:
        print(f"mpcreduce: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (BadParams, ParseError, OSError, KeyError, ValueError) as e:
        print(f"mpcreduce: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (BudgetViolation, OutOfMemory) as e:
        print(f"mpcreduce: budget violation: {e}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
