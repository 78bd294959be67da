"""Main Program Entry - Command Line Interface"""
import os
import sys
import json
import argparse
from typing import List, Optional

import pandas as pd
from dotenv import load_dotenv
from loguru import logger

load_dotenv()

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from config.settings import get_settings
from src.errors import RelcomError
from src.protocol import ProtocolParams, Verdict
from src.gf import FieldSpec


def setup_logging(log_level: str = "INFO", log_file: Optional[str] = None):
    """Configure logging"""
    log_file = get_settings().log_file if log_file is None else log_file

    logger.remove()
    logger.add(
        sys.stderr,
        format="<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | <cyan>{name}</cyan>:<cyan>{function}</cyan> - <level>{message}</level>",
        level=log_level
    )
    if log_file:
        os.makedirs(os.path.dirname(log_file) or ".", exist_ok=True)
        logger.add(
            log_file,
            rotation="1 day",
            retention="7 days",
            level=log_level
        )


def _emit(record, fmt: str, out: Optional[str] = None):
    """Print a dict (or DataFrame) as text or CSV, optionally to a file"""
    frame = record if isinstance(record, pd.DataFrame) else pd.DataFrame([record])
    if fmt == "csv":
        text = frame.to_csv(index=False)
    elif isinstance(record, pd.DataFrame):
        text = frame.to_string(index=False) + "\n"
    else:
        text = "".join(f"{key}: {value}\n" for key, value in record.items())
    if out:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text)
        logger.info(f"Results saved to: {out}")
    print(text, end="")


def cmd_params(args) -> int:
    from src.spacetime import SpacetimeConfig, min_distance, plan, render_table
    from src.storage import parse_order

    speed = args.signal_speed or get_settings().signal_speed_mps
    frame = plan(
        [-e for e in args.epsilon_exp],
        [parse_order(q) for q in args.q],
        args.distance,
        signal_speed_mps=speed,
    )
    text = render_table(frame, args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text if text.endswith("\n") else text + "\n")
        logger.info(f"Planner table saved to: {args.out}")
    print(text)

    if args.processing_time is not None:
        reference = SpacetimeConfig(distance_m=max(args.distance), signal_speed_mps=speed)
        print(f"minimum distance for {args.processing_time:g}s processing: "
              f"{min_distance(args.processing_time, reference):.6g} m")
    return 0


def cmd_run(args) -> int:
    from src.simulator import RunMode, run
    from src.storage import read_simulation_config, write_transcript

    config = read_simulation_config(args.config)
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})
    result = run(config)

    if args.out:
        write_transcript(args.out, result.transcript, config.spacetime, config.seed)
    summary = result.summary()
    if args.format == "csv":
        summary = {k: v for k, v in summary.items() if not isinstance(v, dict)}
    _emit(summary, args.format)

    if not result.valid:
        return 1
    if config.mode != RunMode.ATTACK and result.verdict != Verdict.ACCEPT:
        return 1
    return 0


def cmd_attack_opt(args) -> int:
    from src.adversary import optimal_attack_exact, theorem1_bound, theorem1_holds
    from src.simulator import RunMode, SimulationConfig
    from src.spacetime import SpacetimeConfig
    from src.storage import parse_order, write_simulation_config, write_strategy

    params = ProtocolParams(field=FieldSpec.from_order(parse_order(args.q)), rounds=args.rounds)
    result, witness = optimal_attack_exact(params, workers=args.workers)

    summary = {
        "field": params.field.label,
        "rounds": params.rounds,
        "p0": str(result.p0),
        "p1": str(result.p1),
        "epsilon": str(result.epsilon),
        "success_rate": str(result.success_rate),
        "theorem_bound": theorem1_bound(params),
        "bound_holds": theorem1_holds(result, params),
    }
    if args.out:
        write_strategy(args.out, witness)
        summary["strategy_file"] = args.out
        if args.replay_config:
            replay = SimulationConfig(
                params=params,
                spacetime=SpacetimeConfig(distance_m=args.distance),
                seed=get_settings().default_seed if args.seed is None else args.seed,
                mode=RunMode.ATTACK,
                strategy=witness,
                trials=args.trials or get_settings().attack_trials,
            )
            strategy_ref = os.path.relpath(args.out, os.path.dirname(os.path.abspath(args.replay_config)))
            write_simulation_config(args.replay_config, replay, strategy_ref)
            summary["replay_config"] = args.replay_config
    _emit(summary, args.format)
    return 0


def cmd_game_value(args) -> int:
    from src.games import classical_value_exact, game_summary
    from src.storage import read_game_spec

    spec = read_game_spec(args.spec)
    value, witness = classical_value_exact(spec, workers=args.workers)
    summary = game_summary(spec, value, witness)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=2)
        logger.info(f"Results saved to: {args.out}")
    _emit(summary, args.format)
    return 0


def cmd_verify_transcript(args) -> int:
    from src.storage import verify_transcript_file

    report = verify_transcript_file(args.transcript)
    _emit(report.summary(), args.format, args.out)
    if report.verdict != Verdict.ACCEPT or report.violations:
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default=None, help="Log level")
    common.add_argument("--seed", type=int, help="Seed override")
    common.add_argument("--out", help="Output file path")
    common.add_argument("--format", choices=["text", "csv"], default="text", help="Output format")
    common.add_argument("--workers", type=int, help="Worker processes for enumerations")

    parser = argparse.ArgumentParser(
        description="relcom - Relativistic Bit Commitment Simulator and Exact Verification Toolkit"
    )
    subparsers = parser.add_subparsers(dest="command", help="Commands")

    params_parser = subparsers.add_parser("params", parents=[common], help="Plan rounds and commitment time")
    params_parser.add_argument("--epsilon-exp", type=float, nargs="+", default=[128.0],
                               help="Binding level as e in epsilon = 2^-e")
    params_parser.add_argument("--q", nargs="+", default=["2^340"], help="Field orders, as 2^b or decimal")
    params_parser.add_argument("--distance", type=float, nargs="+", default=[100_000.0], help="Distances (m)")
    params_parser.add_argument("--signal-speed", type=float, help="Signal speed (m/s)")
    params_parser.add_argument("--processing-time", type=float, help="Also print the minimum distance (s)")
    params_parser.set_defaults(handler=cmd_params)

    run_parser = subparsers.add_parser("run", parents=[common], help="Execute a simulation config file")
    run_parser.add_argument("config", help="Run configuration (INI)")
    run_parser.set_defaults(handler=cmd_run)

    attack_parser = subparsers.add_parser("attack-opt", parents=[common], help="Exact optimal cheating strategy")
    attack_parser.add_argument("--q", default="2", help="Field order")
    attack_parser.add_argument("--rounds", type=int, default=1, help="Number of rounds k")
    attack_parser.add_argument("--replay-config", help="Also write a run config replaying the witness")
    attack_parser.add_argument("--distance", type=float, default=100_000.0, help="Distance for the replay config (m)")
    attack_parser.add_argument("--trials", type=int, help="Trials for the replay config")
    attack_parser.set_defaults(handler=cmd_attack_opt)

    game_parser = subparsers.add_parser("game-value", parents=[common], help="Exact classical value of a game")
    game_parser.add_argument("spec", help="Game specification (INI)")
    game_parser.set_defaults(handler=cmd_game_value)

    verify_parser = subparsers.add_parser("verify-transcript", parents=[common], help="Re-verify a transcript file")
    verify_parser.add_argument("transcript", help="Transcript file (JSON lines)")
    verify_parser.set_defaults(handler=cmd_verify_transcript)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main function"""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not getattr(args, "handler", None):
        parser.print_help()
        return 0

    setup_logging(log_level=args.log_level or get_settings().log_level)

    try:
        return args.handler(args)
    except RelcomError as exc:
        logger.error(f"{exc.code}: {exc}")
        error = {"error": exc.code, "message": str(exc), **exc.details}
    except ValueError as exc:
        # pydantic's ValidationError lands here too
        logger.error(f"Invalid input: {exc}")
        error = {"error": "INVALID_INPUT", "message": str(exc)}
    print(json.dumps(error, default=str), file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
