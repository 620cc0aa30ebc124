"""Command-line entry point for gem-trust."""

import argparse
import logging
import sys
from pathlib import Path

from .config import SCHEDULERS, Config
from .errors import GemError
from .generators import FAMILIES, MAX_INDEX, SCALES, all_variants, generate_variant, random_scenario
from .harness import emit_report, run, run_batch, verify, write_event_log
from .metrics import get_metrics, init_metrics
from .parser import PolicySyntaxError, parse_atom
from .scenario import ScenarioError, bundled, dump_scenario, load_scenario

# Configure logging
logging.basicConfig(
    level=getattr(logging, Config.LOG_LEVEL.upper()),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FLOUNDERED = 2


def _scenario_path(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    try:
        return bundled(name)
    except ScenarioError:
        return path


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
        logger.info("Wrote %s", out)
    else:
        sys.stdout.write(text)


def cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(_scenario_path(args.scenario))
    if args.query or args.requester:
        try:
            goal = parse_atom(args.query) if args.query else scenario.goal
        except PolicySyntaxError as exc:
            raise ScenarioError(f"invalid --query {args.query!r}: {exc}") from exc
        scenario = scenario.with_goal(goal, args.requester)
    result = run(
        scenario,
        transport=args.transport,
        scheduler=args.scheduler,
        seed=args.seed,
        id_mode=args.id_mode,
    )
    if args.log:
        write_event_log(args.log, result.events)
    if result.floundered:
        print(f"floundered: {result.reason or 'no reason given'}")
    else:
        for answer in sorted(result.answers, key=str):
            print(answer)
    if args.metrics:
        sys.stdout.write(emit_report([(scenario.name, result.metrics)], args.metrics))
    if args.verify and not result.floundered:
        report = verify(scenario, result)
        print(report)
        if not report.equal:
            return EXIT_ERROR
    return EXIT_FLOUNDERED if result.floundered else EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    scenario = generate_variant(args.family, args.index, args.scale)
    _write(dump_scenario(scenario), args.out)
    return EXIT_OK


def cmd_table(args: argparse.Namespace) -> int:
    rows = run_batch(all_variants(args.family, args.scale), args.scale, args.jobs, args.id_mode)
    sys.stdout.write(emit_report(rows, args.format))
    return EXIT_OK


def cmd_random(args: argparse.Namespace) -> int:
    _write(dump_scenario(random_scenario(args.seed)), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gem-trust",
        description="Distributed goal evaluation for trust-management policies",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log engine steps at DEBUG")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="evaluate a scenario's request")
    p_run.add_argument("scenario", help="scenario file, or the name of a bundled scenario")
    p_run.add_argument("--query", help="goal atom overriding the scenario's request")
    p_run.add_argument("--requester", help="principal issuing the request")
    p_run.add_argument("--metrics", choices=("table", "csv"), help="print the run's counters")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--scheduler", choices=SCHEDULERS)
    p_run.add_argument("--id-mode", help="identifier mode, e.g. traceable or untraceable/fixed")
    p_run.add_argument("--transport", choices=("sim", "tcp"), default="sim")
    p_run.add_argument("--log", help="write the procedure-call log as JSON lines")
    p_run.add_argument("--verify", action="store_true", help="compare with bottom-up answers")
    p_run.set_defaults(func=cmd_run)

    p_gen = sub.add_parser("generate", help="write a benchmark policy variant")
    p_gen.add_argument("--family", type=int, choices=FAMILIES, required=True)
    p_gen.add_argument("--index", type=int, choices=range(MAX_INDEX + 1), required=True)
    p_gen.add_argument("--scale", type=int, choices=sorted(SCALES), default=1)
    p_gen.add_argument("--out")
    p_gen.set_defaults(func=cmd_generate)

    p_table = sub.add_parser("table", help="run benchmark variants and print their counters")
    p_table.add_argument("--family", type=int, choices=FAMILIES)
    p_table.add_argument("--scale", type=int, choices=sorted(SCALES), default=1)
    p_table.add_argument("--jobs", type=int, default=1)
    p_table.add_argument("--format", choices=("table", "csv"), default="table")
    p_table.add_argument("--id-mode", default="traceable")
    p_table.set_defaults(func=cmd_table)

    p_random = sub.add_parser("random", help="write a random positive global policy")
    p_random.add_argument("--seed", type=int, required=True)
    p_random.add_argument("--out")
    p_random.set_defaults(func=cmd_random)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Run the gem-trust command line; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors share the generic error code; 2 means floundered
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    init_metrics(db_path=str(Config.METRICS_PATH), enabled=Config.METRICS_ENABLED)
    try:
        Config.validate()
        return args.func(args)
    except GemError as exc:
        logger.error("%s", exc)
        return EXIT_ERROR
    finally:
        get_metrics().close()


if __name__ == "__main__":
    sys.exit(main())
