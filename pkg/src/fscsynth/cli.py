"""Command-line interface.

Subcommands: synth (learn a controller), check (verify a given controller),
simulate (Monte-Carlo rollouts of a controller), gen (write benchmark
models), export-dot (controller to Graphviz).

Exit codes: 0 success / controller found, 1 no controller (or check
violated), 2 resource limit (timeout or iteration cap), 3 usage or I/O
error.
"""

from __future__ import annotations

import argparse
import os
import sys

from .checker import check_threshold, serialize_counterexample
from .driver import gen_cards, gen_grid_world, synthesize
from .fsc import (
    Fsc,
    bad_product_states,
    batch_bad_frequency,
    build_product,
    export_dot,
    parse_fsc,
    run_fsc,
    serialize_fsc,
)
from .model import (
    BOUNDED_REACH_AVOID,
    ModelError,
    ObjectiveSpec,
    Pomdp,
    SAFETY,
    parse_model,
    serialize_model,
)
from .oracles import (
    BeliefViOracle,
    CompositeOracle,
    FscOracle,
    QueryCache,
    SparseSamplerOracle,
)
from .report import render_figures, render_json_lines, render_text
from .transform import extend_fsc_to, make_reward_pomdp, unroll_reach_avoid

USAGE_EXIT = 3


class _Parser(argparse.ArgumentParser):
    """argparse with the documented usage-error exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _load_model(path: str):
    return parse_model(_read(path))


def _objective(args, bad, good) -> ObjectiveSpec:
    """Safety by default; bounded reach-avoid when --horizon is given (the
    model file must then declare good observations)."""
    if getattr(args, "horizon", None):
        if not good:
            raise ModelError(
                "--horizon requires the model to declare good observations"
            )
        return ObjectiveSpec(
            kind=BOUNDED_REACH_AVOID,
            bad_observations=bad,
            alpha=args.alpha,
            good_observations=good,
            horizon=args.horizon,
        )
    return ObjectiveSpec(kind=SAFETY, bad_observations=bad, alpha=args.alpha)


def _oracle_factory(args, base_model: Pomdp):
    """A callable of (model, bad) building the requested oracle against the
    (possibly rewritten) model the learner will query."""
    kind = args.oracle
    if kind == "belief-vi":

        def factory(m, bad):
            return BeliefViOracle(m, bad, seed=args.seed)

    elif kind == "sampler":

        def factory(m, bad):
            rm = make_reward_pomdp(m, bad, args.discount)
            return SparseSamplerOracle(
                rm, budget=args.budget, depth=args.depth, seed=args.seed
            )

    elif kind == "composite":

        def factory(m, bad):
            rm = make_reward_pomdp(m, bad, args.discount)
            return CompositeOracle(
                BeliefViOracle(m, bad, seed=args.seed),
                SparseSamplerOracle(
                    rm, budget=args.budget, depth=args.depth, seed=args.seed
                ),
            )

    elif kind.startswith("fsc:"):
        path = kind[len("fsc:") :]
        f = parse_fsc(_read(path), base_model)

        def factory(m, bad):
            return FscOracle(extend_fsc_to(m, f), seed=args.seed)

    else:
        raise ModelError(
            f"unknown oracle {kind!r}; expected sampler, belief-vi, "
            "composite, or fsc:<file>"
        )
    return factory


def _add_common_oracle_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--oracle",
        default="belief-vi",
        help="action oracle: sampler | belief-vi | composite | fsc:<file>",
    )
    p.add_argument("--discount", type=float, default=0.95,
                   help="sampler discount factor")
    p.add_argument("--budget", type=int, default=500,
                   help="sampler scenario budget")
    p.add_argument("--depth", type=int, default=90,
                   help="sampler rollout depth cap")
    p.add_argument("--seed", type=int, default=0, help="random seed")


def build_parser() -> _Parser:
    parser = _Parser(prog="fscsynth", description=__doc__.split("\n")[1])
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("synth", parents=[], help="learn a controller")
    ps.add_argument("--model", required=True, help="model file")
    ps.add_argument("--alpha", type=float, required=True,
                    help="required probability threshold (strict)")
    _add_common_oracle_flags(ps)
    ps.add_argument("--horizon", type=int, default=None,
                    help="finish-by horizon: switch to bounded reach-avoid")
    ps.add_argument("--max-iters", type=int, default=100)
    ps.add_argument("--timeout", type=float, default=600.0,
                    help="wall-clock limit in seconds")
    ps.add_argument("--cache", default=None,
                    help="query-cache file to load and update")
    ps.add_argument("--out", default=None, help="write the controller here")
    ps.add_argument("--dot", default=None,
                    help="write the controller as Graphviz here")
    ps.add_argument("--report", choices=["text", "json-lines"], default="text")
    ps.add_argument("--figures", default=None,
                    help="directory for rendered figures")

    pc = sub.add_parser("check", help="verify a controller against a model")
    pc.add_argument("--model", required=True)
    pc.add_argument("--fsc", required=True, help="controller file")
    pc.add_argument("--alpha", type=float, required=True)
    pc.add_argument("--report", choices=["text", "json-lines"], default="text")
    pc.add_argument("--counterexample", action="store_true",
                    help="print a counterexample when the check fails")

    pm = sub.add_parser("simulate", help="Monte-Carlo rollouts of a controller")
    pm.add_argument("--model", required=True)
    pm.add_argument("--fsc", required=True)
    pm.add_argument("--steps", type=int, default=100)
    pm.add_argument("--runs", type=int, default=1000)
    pm.add_argument("--seed", type=int, default=0)

    pg = sub.add_parser("gen", help="write a benchmark model")
    pg.add_argument("family", choices=["grid", "cards"])
    pg.add_argument("--n", type=int, required=True)
    pg.add_argument("--bad-fraction", type=float, default=0.1,
                    help="grid: fraction of cells that are holes")
    pg.add_argument("--slip", type=float, default=0.1,
                    help="grid: probability a move stays put")
    pg.add_argument("--variant", choices=["removed", "added"],
                    default="removed", help="cards variant")
    pg.add_argument("--mode", choices=["bounded", "unbounded"],
                    default="bounded", help="cards objective style")
    pg.add_argument("--alpha", type=float, default=0.5)
    pg.add_argument("--horizon", type=int, default=None,
                    help="cards bounded mode: finish-by horizon")
    pg.add_argument("--seed", type=int, default=0)
    pg.add_argument("--out", default=None, help="output file (default stdout)")

    pd = sub.add_parser("export-dot", help="controller file to Graphviz")
    pd.add_argument("--model", required=True)
    pd.add_argument("--fsc", required=True)
    pd.add_argument("--out", default=None, help="output file (default stdout)")

    return parser


def _cmd_synth(args) -> int:
    m, bad, good = _load_model(args.model)
    spec = _objective(args, bad, good)
    factory = _oracle_factory(args, m)

    # The cache speaks the learner's model: rewrite first when bounded.
    if spec.kind == BOUNDED_REACH_AVOID:
        cache_model = unroll_reach_avoid(m, spec)[0]
    else:
        cache_model = m
    if args.cache and os.path.exists(args.cache):
        cache = QueryCache.load(args.cache, cache_model)
    else:
        cache = QueryCache()

    report = synthesize(
        m,
        spec,
        factory,
        max_iters=args.max_iters,
        timeout=args.timeout,
        cache=cache,
    )

    if args.cache and cache.dirty:
        cache.save(args.cache, cache_model)
    if args.report == "json-lines":
        sys.stdout.write(render_json_lines(report, cache_model))
    else:
        sys.stdout.write(render_text(report, cache_model))
    if report.fsc is not None and args.out:
        _write(args.out, serialize_fsc(report.fsc))
    if report.fsc is not None and args.dot:
        _write(args.dot, export_dot(report.fsc))
    if args.figures:
        for p in render_figures(report, args.figures):
            print(f"wrote {p}", file=sys.stderr)

    if report.outcome == "fsc":
        return 0
    if report.outcome == "fail":
        return 1
    return 2


def _cmd_check(args) -> int:
    m, bad, _good = _load_model(args.model)
    f = parse_fsc(_read(args.fsc), m)
    mc = build_product(m, f)
    bad_states = bad_product_states(mc, bad)
    res = check_threshold(mc, bad_states, args.alpha)
    if args.report == "json-lines":
        import json

        print(json.dumps({
            "event": "result",
            "holds": res.holds,
            "probability": res.probability,
            "alpha": args.alpha,
        }))
    else:
        verdict = "holds" if res.holds else "violated"
        print(f"safety probability: {res.probability:.12g}")
        print(f"threshold > {args.alpha:.12g}: {verdict}")
    if not res.holds and args.counterexample and res.counterexample is not None:
        sys.stdout.write(serialize_counterexample(res.counterexample))
    return 0 if res.holds else 1


def _cmd_simulate(args) -> int:
    m, bad, _good = _load_model(args.model)
    f = parse_fsc(_read(args.fsc), m)
    freq = batch_bad_frequency(
        m, f, steps=args.steps, runs=args.runs, seed=args.seed, bad=bad
    )
    print(f"runs: {args.runs}")
    print(f"steps per run: {args.steps}")
    print(f"bad-observation frequency: {freq:.6g}")
    print(f"safety estimate: {1.0 - freq:.6g}")
    return 0


def _cmd_gen(args) -> int:
    if args.family == "grid":
        m, spec = gen_grid_world(
            args.n, args.bad_fraction, args.slip, args.seed, alpha=args.alpha
        )
    else:
        m, spec = gen_cards(
            args.n,
            variant=args.variant,
            mode=args.mode,
            alpha=args.alpha,
            horizon=args.horizon,
        )
    text = serialize_model(
        m,
        bad=spec.bad_observations,
        good=spec.good_observations or (),
    )
    if args.out:
        _write(args.out, text)
        if spec.horizon is not None:
            print(f"wrote {args.out} (synth with --horizon {spec.horizon})",
                  file=sys.stderr)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_export_dot(args) -> int:
    m, _bad, _good = _load_model(args.model)
    f = parse_fsc(_read(args.fsc), m)
    text = export_dot(f)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "check": _cmd_check,
    "simulate": _cmd_simulate,
    "gen": _cmd_gen,
    "export-dot": _cmd_export_dot,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ModelError, OSError, ValueError) as exc:
        print(f"fscsynth: error: {exc}", file=sys.stderr)
        return USAGE_EXIT


def cli_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    cli_main()
