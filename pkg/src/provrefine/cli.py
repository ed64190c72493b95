"""Command-line front end.

Subcommands: ground (Datalog -> provenance), solve (refinement loop),
learn (hyperparameter fitting), likelihood (bound/exact evaluation), and
maxsat (solve or export instances).  Every randomized path takes --seed
(default 0), so identical invocations produce identical output.

Exit codes: 0 success ("yes" for solve), 1 "no" / unsatisfiable,
2 parse or usage error, 3 integer domain overflow, 4 iteration or
budget limit.
"""

from __future__ import annotations

import argparse
import random
import sys

from . import __version__
from . import analysis as ana
from . import datalog
from . import hypergraph as hg
from . import learning
from . import likelihood as lk
from . import maxsat as mx
from . import probmodel as pm
from . import refine
from .errors import (BudgetExceeded, CorpusTooSmall, DomainOverflow,
                     ParseError, ProvRefineError)

FORMAT_VERSION = "1"

EXIT_OK = 0
EXIT_NO = 1
EXIT_PARSE = 2
EXIT_OVERFLOW = 3
EXIT_LIMIT = 4


def _read(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise ParseError(0, f"cannot read {path}: {exc.strerror}")


def _load_analysis(args) -> ana.Analysis:
    if getattr(args, "fixture", None):
        if args.fixture != "smudge":
            raise ParseError(0, f"unknown fixture {args.fixture!r}")
        return datalog.smudge_fixture()
    if not args.manifest:
        raise ParseError(0, "need a manifest path or --fixture")
    _read(args.manifest)  # surface missing-file errors uniformly
    return ana.load_manifest(args.manifest)


def cmd_ground(args) -> int:
    if args.fixture:
        if args.fixture != "smudge":
            raise ParseError(0, f"unknown fixture {args.fixture!r}")
        graph = datalog.smudge_fixture().global_graph
    else:
        if not args.rules:
            raise ParseError(0, "need --rules or --fixture")
        rules, base = datalog.parse_program(_read(args.rules))
        if args.facts:
            extra_rules, extra = datalog.parse_program(_read(args.facts))
            if extra_rules:
                raise ParseError(0, f"{args.facts} contains rules, not just facts")
            base |= extra
        seeds = set()
        if args.seeds:
            seeds = {hg.parse_fact(tok) for tok in args.seeds.split(",")}
        graph = datalog.ground(rules, base, seeds=seeds)
    text = hg.serialize_provenance(graph)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_solve(args) -> int:
    an = _load_analysis(args)
    query = hg.parse_fact(args.query) if args.query else next(iter(sorted(an.queries)))
    hp = None
    if args.theta:
        hp = pm.parse_hyperparams(_read(args.theta))
    cfg = refine.RefineConfig(
        strategy=args.strategy,
        alpha=args.alpha,
        hyperparams=hp,
        solver=args.solver,
        max_iterations=args.max_iters,
        solver_budget=args.budget,
        seed=args.seed,
    )
    outcome = refine.solve(an, query, cfg)
    for entry in outcome.trace:
        bits = [f"iter {entry['iteration']}:",
                "flips={%s}" % ",".join(entry.get("flips", []))]
        bits.append(f"strategy={args.strategy}")
        if "objective" in entry:
            bits.append(f"solver_objective={entry['objective']:.6f}")
        if "chosen" in entry:
            bits.append("chosen={%s}" % ",".join(entry["chosen"]))
        if "answer" in entry:
            bits.append(f"answer={entry['answer']}")
        print(" ".join(bits))
    print(f"answer: {outcome.answer}")
    return {"yes": EXIT_OK, "no": EXIT_NO, "limit": EXIT_LIMIT}[outcome.answer]


def cmd_learn(args) -> int:
    rng = random.Random(args.seed)
    sets = []
    for path in args.manifests:
        _read(path)
        an = ana.load_manifest(path)
        sets.append(learning.sample_training(an, args.n, args.max_flips, rng))
    if args.loo:
        if len(sets) < 2:
            raise CorpusTooSmall("--loo needs at least two manifests")
        folds = learning.leave_one_out(sets)
        for i, hp in enumerate(folds):
            path = f"{args.out}.fold{i}" if args.out else None
            text = pm.serialize_hyperparams(hp)
            if path:
                with open(path, "w") as fh:
                    fh.write(text)
            print(f"# fold {i} (held out: {args.manifests[i]})")
            sys.stdout.write(text)
        return EXIT_OK
    hp = learning.learn(learning.TrainingSet.merge(sets))
    text = pm.serialize_hyperparams(hp)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_likelihood(args) -> int:
    graph = hg.parse_provenance(_read(args.blueprint))
    obs = lk.parse_observations(_read(args.obs))
    hp = pm.parse_hyperparams(_read(args.theta))
    if args.mode == "exact":
        value = lk.exact_likelihood(graph, obs, hp)
    else:
        bf = lk.bound_terms(graph, obs)
        value = (lk.lower_bound if args.mode == "lower" else lk.upper_bound)(bf, hp)
    print("-inf" if value == pm.NEG_INF else f"{value:.9f}")
    return EXIT_OK


# --- maxsat instance text format -------------------------------------------
# weight lines:  w NAME VALUE
# hard line:     hard (and (or x1 x2) (not x3))   [prefix notation]


def _tokenize_sexpr(text: str) -> list:
    return text.replace("(", " ( ").replace(")", " ) ").split()


def _parse_sexpr(tokens: list):
    if not tokens:
        raise ValueError("unexpected end of formula")
    tok = tokens.pop(0)
    if tok == "(":
        op = tokens.pop(0)
        args = []
        while tokens and tokens[0] != ")":
            if op == "exists" and not args:
                if tokens.pop(0) != "(":
                    raise ValueError("exists needs a variable list")
                names = []
                while tokens and tokens[0] != ")":
                    names.append(tokens.pop(0))
                tokens.pop(0)
                args.append(names)
                continue
            args.append(_parse_sexpr(tokens))
        if not tokens:
            raise ValueError("missing ')'")
        tokens.pop(0)
        if op == "and":
            return mx.and_(*args)
        if op == "or":
            return mx.or_(*args)
        if op == "not":
            return mx.not_(args[0])
        if op == "implies":
            return mx.implies(args[0], args[1])
        if op == "iff":
            return mx.iff(args[0], args[1])
        if op == "exists":
            return mx.exists(args[0], args[1])
        raise ValueError(f"unknown operator {op!r}")
    if tok == "true":
        return mx.TRUE
    if tok == "false":
        return mx.FALSE
    return mx.var(tok)


def parse_maxsat_instance(text: str) -> mx.MaxSatInstance:
    weights = {}
    hard = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if line.startswith("w "):
                _, name, value = line.split()
                weights[name] = float(value)
            elif line.startswith("hard "):
                tokens = _tokenize_sexpr(line[5:])
                hard = _parse_sexpr(tokens)
                if tokens:
                    raise ValueError("trailing tokens after formula")
            else:
                raise ValueError(f"unexpected line {raw!r}")
        except ValueError as exc:
            raise ParseError(lineno, str(exc)) from exc
    if hard is None:
        raise ParseError(0, "instance has no hard formula")
    return mx.MaxSatInstance(hard, weights)


def cmd_maxsat(args) -> int:
    inst = parse_maxsat_instance(_read(args.instance))
    if args.export_wcnf:
        wcnf, varmap = mx.to_wcnf(inst)
        sys.stdout.write(wcnf)
        if args.varmap:
            with open(args.varmap, "w") as fh:
                fh.write(mx.serialize_varmap(varmap))
        return EXIT_OK
    if args.import_model:
        _, varmap = mx.to_wcnf(inst)
        model, objective = mx.decode_external_model(
            inst, varmap, _read(args.import_model))
        print("model:", " ".join(sorted(model)))
        print(f"objective: {objective:.6f}")
        return EXIT_OK
    solver = mx.solve_approx if args.solve == "approx" else mx.solve_exact
    if args.solve == "approx":
        result = mx.solve_approx(inst, budget=args.budget,
                                 rng=random.Random(args.seed))
    else:
        result = mx.solve_exact(inst, budget=args.budget)
    if result is None:
        print("unsat")
        return EXIT_NO
    model, objective = result
    print("model:", " ".join(sorted(model)))
    print(f"objective: {objective:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="provrefine",
        description="probabilistic abstraction refinement over provenance hypergraphs")
    parser.add_argument("--version", action="version",
                        version=f"provrefine {__version__} (formats v{FORMAT_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ground", help="ground a Datalog program into provenance")
    p.add_argument("--rules")
    p.add_argument("--facts")
    p.add_argument("--seeds", help="comma-separated facts available but not emitted")
    p.add_argument("--fixture", choices=["smudge"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("solve", help="run the refinement loop on a query")
    p.add_argument("manifest", nargs="?")
    p.add_argument("query", nargs="?")
    p.add_argument("--fixture", choices=["smudge"])
    p.add_argument("--strategy", default="pessimistic",
                   choices=["optimistic", "pessimistic", "probabilistic"])
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--theta", help="hyperparameter file")
    p.add_argument("--solver", default="exact", choices=["exact", "approx"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--budget", type=float, default=60.0)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("learn", help="fit hyperparameters from sampled runs")
    p.add_argument("manifests", nargs="+")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--max-flips", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--loo", action="store_true",
                   help="leave-one-program-out: one hyperparameter set per fold")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("likelihood", help="evaluate observation likelihood")
    p.add_argument("blueprint")
    p.add_argument("obs")
    p.add_argument("theta")
    p.add_argument("--mode", default="lower", choices=["lower", "upper", "exact"])
    p.set_defaults(func=cmd_likelihood)

    p = sub.add_parser("maxsat", help="solve or export a weighted instance")
    p.add_argument("instance")
    p.add_argument("--export-wcnf", action="store_true")
    p.add_argument("--varmap", help="where to write the variable map sidecar")
    p.add_argument("--import-model", help="decode an external solver's literals")
    p.add_argument("--solve", default="exact", choices=["exact", "approx"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=float, default=60.0)
    p.set_defaults(func=cmd_maxsat)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DomainOverflow as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OVERFLOW
    except (BudgetExceeded,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    except CorpusTooSmall as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ProvRefineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
