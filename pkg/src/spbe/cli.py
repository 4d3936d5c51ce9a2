"""Command-line entry point: ``spbe {solve,verify,simulate,example,map}``.

Exit status is 0 on success, 1 when a verification or report check fails,
2 when the fixed-point solver gives up, and 3 for unreadable or invalid
input. Every structured output embeds the resolved settings it was made with.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import io as spbe_io
from .game import EnumerationTooLarge, InvalidGameError, expected_total_reward
from .pubgoods import PubGoodsParams, emit_region_map, reproduce_paper_equilibrium
from .solver import (
    EquilibriumGenerator,
    FixedPointConfig,
    NoFixedPointFound,
    forward_construct,
    solve_stage_fixed_point,
)
from .verify import MissingNode, check_sequential_rationality, policy_values, simulate

EXIT_OK, EXIT_FAIL, EXIT_SOLVER, EXIT_INPUT = 0, 1, 2, 3

log = logging.getLogger("spbe")


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors, not solver failures
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spbe", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    default_workers = os.cpu_count() or 1

    p = sub.add_parser("solve", help="backward/forward construction for a game document")
    p.add_argument("--input", required=True, type=Path, help="game JSON document")
    p.add_argument("--output", type=Path, help="equilibrium JSON (default: stdout)")
    p.add_argument("--quantize-resolution", type=_positive_float, default=1e-9)
    p.add_argument("--damping", type=float, default=0.5)
    p.add_argument("--max-iter", type=_positive_int, default=10000)
    p.add_argument("--seed", type=int, default=0, help="seed for random initial profiles")
    p.add_argument(
        "--enumerate-fixed-points",
        action="store_true",
        help="also record every distinct fixed point found at the root",
    )
    p.add_argument("--workers", type=_positive_int, default=default_workers)

    p = sub.add_parser("verify", help="check sequential rationality of an equilibrium document")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--output", type=Path, help="write the JSON report here")
    p.add_argument("--tolerance", type=_positive_float, default=1e-8)
    p.add_argument("--all", action="store_true", help="print every information set, not only violations")

    p = sub.add_parser("simulate", help="Monte Carlo payoffs of an equilibrium document")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--output", type=Path)
    p.add_argument("--episodes", type=_positive_int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=_positive_int, default=default_workers)

    p = sub.add_parser("example", help="rebuild and check the public goods equilibria")
    p.add_argument("--q", type=float, default=0.1)
    p.add_argument("--xl", type=float, default=0.2)
    p.add_argument("--xh", type=float, default=1.2)
    p.add_argument("--output", type=Path, help="write the JSON report here")

    p = sub.add_parser("map", help="stage-2 region map of the public goods game as CSV")
    p.add_argument("--resolution", type=_positive_float, default=0.01)
    p.add_argument("--mode", choices=("canonical", "all_solutions"), default="canonical")
    p.add_argument("--q", type=float, default=0.1)
    p.add_argument("--xl", type=float, default=0.2)
    p.add_argument("--xh", type=float, default=1.2)
    p.add_argument("--workers", type=_positive_int, default=default_workers)
    p.add_argument("--output", type=Path, help="CSV path; settings go to <output>.json")
    return parser


def _write(path: Path | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def _dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1) + "\n"


def _params(args) -> PubGoodsParams:
    try:
        return PubGoodsParams(q=args.q, xL=args.xl, xH=args.xh)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _load_equilibrium(path: Path):
    try:
        return spbe_io.load_equilibrium(path)
    except OSError as exc:
        raise InputError(str(exc)) from None


def cmd_solve(args) -> int:
    try:
        game = spbe_io.load_game(args.input)
        config = FixedPointConfig(
            max_iterations=args.max_iter,
            damping=args.damping,
            random_seed=args.seed,
            quantize_resolution=args.quantize_resolution,
        )
    except OSError as exc:
        raise InputError(str(exc)) from None
    except ValueError as exc:
        if isinstance(exc, (spbe_io.ParseError, InvalidGameError)):
            raise
        raise InputError(str(exc)) from None
    gen = EquilibriumGenerator(game, config)
    run: dict = {"command": "solve", "input": str(args.input), "workers": args.workers}
    try:
        profile, beliefs = forward_construct(game, gen, workers=args.workers)
        if args.enumerate_fixed_points:
            sols = solve_stage_fixed_point(
                1, gen.root_belief(), gen.continuation(1), game, config, enumerate_all=True
            )
            run["root_fixed_points"] = [
                {
                    "seed": s.seed_id,
                    "prescriptions": [g.tolist() for g in s.gamma],
                    "values": [v.tolist() for v in s.values],
                }
                for s in sols
            ]
    except NoFixedPointFound as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        for t, b in exc.path:
            print(f"  at stage {t}, belief {b.tolist()}", file=sys.stderr)
        for d in exc.diagnostics:
            print(f"  seed {d.get('seed')}: {json.dumps({k: v for k, v in d.items() if k != 'seed'})}", file=sys.stderr)
        return EXIT_SOLVER
    run["stage_solves"] = gen.solve_count
    doc = spbe_io.equilibrium_to_dict(game, profile, beliefs, config, run)
    _write(args.output, _dumps(doc))
    if profile.unsolved:
        for h, msg in profile.unsolved.items():
            print(f"unsolved node {list(map(list, h))}: {msg}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_verify(args) -> int:
    game, profile, beliefs, config = _load_equilibrium(args.input)
    try:
        report = check_sequential_rationality(game, profile, beliefs, tol=args.tolerance)
    except MissingNode as exc:
        print(f"FAIL: equilibrium does not cover the tree: {exc}", file=sys.stderr)
        return EXIT_FAIL
    # stored stage values against policy evaluation over the stored tree
    value_error = 0.0
    for i in range(game.num_players):
        for (h, x), v in policy_values(game, profile, beliefs, i).items():
            value_error = max(value_error, abs(float(profile.values[h][i][x]) - v))
    print(report.to_table(only_violations=not args.all))
    print(f"stored value error {value_error:.3e}")
    doc = {
        "format": spbe_io.REPORT_FORMAT,
        "settings": {"command": "verify", "input": str(args.input), "tolerance": args.tolerance},
        "solver_config": config.to_dict(),
        "stored_value_max_error": value_error,
        **report.to_dict(),
    }
    if args.output is not None:
        args.output.write_text(_dumps(doc))
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_simulate(args) -> int:
    game, profile, beliefs, config = _load_equilibrium(args.input)
    res = simulate(game, profile, args.episodes, rng_seed=args.seed, workers=args.workers)
    try:
        exact = [expected_total_reward(game, profile, i) for i in range(game.num_players)]
    except EnumerationTooLarge:
        exact = None
    print(f"{'player':>6} {'mean':>14} {'stderr':>12} {'exact':>14}")
    for i in range(game.num_players):
        ex = "n/a" if exact is None else f"{exact[i]:.9f}"
        print(f"{i:>6} {res.means[i]:>14.9f} {res.stderrs[i]:>12.3e} {ex:>14}")
    doc = {
        "format": "spbe-simulation/1",
        "settings": {
            "command": "simulate",
            "input": str(args.input),
            "episodes": args.episodes,
            "seed": args.seed,
            "workers": args.workers,
        },
        **res.to_dict(),
        "exact": exact,
    }
    if args.output is not None:
        args.output.write_text(_dumps(doc))
    return EXIT_OK


def cmd_example(args) -> int:
    params = _params(args)
    report = reproduce_paper_equilibrium(params)
    print(report.to_text())
    if args.output is not None:
        doc = {"format": "spbe-pubgoods-report/1", "settings": {"command": "example"}, **report.to_dict()}
        args.output.write_text(_dumps(doc))
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_map(args) -> int:
    params = _params(args)
    try:
        text = emit_region_map(args.resolution, params, args.mode, workers=args.workers)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    _write(args.output, text)
    settings = {
        "command": "map",
        "resolution": args.resolution,
        "mode": args.mode,
        "params": params.__dict__,
        "workers": args.workers,
    }
    if args.output is not None:
        Path(str(args.output) + ".json").write_text(_dumps(settings))
    else:
        print(json.dumps(settings), file=sys.stderr)
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "example": cmd_example,
    "map": cmd_map,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (spbe_io.ParseError, InvalidGameError, InputError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
