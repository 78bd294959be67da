"""Configuration files, transcript files and strategy files"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field, ValidationError

from config.settings import get_settings

from .adversary import CheatingStrategy, guesser_shape, responder_shape
from .errors import ConfigError, IncompleteTranscriptError, StrategyMismatchError, TranscriptFormatError
from .games import GameSpec, InputDistribution
from .gf import FieldSpec, from_bytes, to_bytes
from .protocol import ProtocolParams, RoundRecord, Transcript, Verdict, verify_reveal
from .simulator import RunMode, SimulationConfig
from .spacetime import SpacetimeConfig, Violation, validate_schedule

PathLike = Union[str, Path]

GENESIS_DIGEST = "0" * 64


# ---------------------------------------------------------------------------
# INI files
# ---------------------------------------------------------------------------

def _read_ini(path: PathLike) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if not parser.read(path, encoding="utf-8"):
        raise ConfigError(f"cannot read configuration file {path}", path=str(path))
    return parser


def _section(parser: configparser.ConfigParser, name: str) -> configparser.SectionProxy:
    if not parser.has_section(name):
        raise ConfigError(f"missing [{name}] section", section=name)
    return parser[name]


def parse_order(text: str) -> int:
    """Field order as a decimal integer or as "p^n\""""
    text = text.strip()
    if "^" in text:
        base, exponent = text.split("^", 1)
        return int(base) ** int(exponent)
    return int(text)


def field_from_section(section: configparser.SectionProxy) -> FieldSpec:
    """[field] either names an order, or a characteristic and degree with an optional modulus"""
    if "order" in section:
        return FieldSpec.from_order(parse_order(section["order"]))
    p = section.getint("characteristic")
    n = section.getint("degree", fallback=1)
    if p is None:
        raise ConfigError("[field] needs order or characteristic", section="field")
    if "modulus" not in section:
        return FieldSpec.preset(p, n)
    modulus = tuple(int(c) for c in section["modulus"].replace(",", " ").split())
    return FieldSpec(characteristic=p, degree=n, modulus=modulus)


def field_to_section(spec: FieldSpec) -> dict[str, str]:
    return {
        "characteristic": str(spec.characteristic),
        "degree": str(spec.degree),
        "modulus": ", ".join(str(c) for c in spec.modulus),
    }


def _parse_injections(text: str, light_time_s: float) -> dict[int, float]:
    """"3:0.0005, 5:2x" - a plain delay is seconds, a trailing x counts light times"""
    out: dict[int, float] = {}
    for item in filter(None, (part.strip() for part in text.split(","))):
        round_text, delay_text = item.split(":", 1)
        delay_text = delay_text.strip()
        if delay_text.endswith("x"):
            delay = float(delay_text[:-1]) * light_time_s
        else:
            delay = float(delay_text)
        out[int(round_text)] = delay
    return out


def read_simulation_config(path: PathLike) -> SimulationConfig:
    """
    Load a run configuration

    Args:
        path: INI file with [field], [protocol], [spacetime] and [run]

    Returns:
        Validated SimulationConfig, with the strategy file loaded in attack mode
    """
    path = Path(path)
    parser = _read_ini(path)
    settings = get_settings()
    try:
        spec = field_from_section(_section(parser, "field"))
        proto = _section(parser, "protocol")
        params = ProtocolParams(
            field=spec,
            rounds=proto.getint("rounds"),
            strict_paper_mode=proto.getboolean("strict_paper_mode", fallback=settings.strict_paper_mode),
        )
        st = _section(parser, "spacetime")
        spacetime = SpacetimeConfig(
            distance_m=st.getfloat("distance_m"),
            signal_speed_mps=st.getfloat("signal_speed_mps", fallback=settings.signal_speed_mps),
            processing_time_s=st.getfloat("processing_time_s", fallback=0.0),
            local_channel_time_s=st.getfloat("local_channel_time_s", fallback=0.0),
        )
        run = _section(parser, "run")
        strategy = None
        if run.get("strategy"):
            strategy = read_strategy(path.parent / run["strategy"])
        safety = run.getfloat("safety_factor", fallback=None)
        return SimulationConfig(
            params=params,
            spacetime=spacetime,
            seed=run.getint("seed", fallback=settings.default_seed),
            mode=RunMode(run.get("mode", "honest")),
            bit=proto.getint("bit", fallback=0),
            strategy=strategy,
            trials=run.getint("trials", fallback=1),
            injections=_parse_injections(run.get("injections", ""), spacetime.light_time_s),
            safety_factor=safety,
        )
    except ValidationError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid run configuration {path}: {exc}", path=str(path)) from exc


def write_simulation_config(path: PathLike, config: SimulationConfig, strategy_file: Optional[str] = None) -> Path:
    """Inverse of read_simulation_config; the strategy is referenced by file name"""
    parser = configparser.ConfigParser()
    parser["field"] = field_to_section(config.params.field)
    parser["protocol"] = {
        "rounds": str(config.params.rounds),
        "strict_paper_mode": str(config.params.strict_paper_mode).lower(),
        "bit": str(config.bit),
    }
    parser["spacetime"] = {k: repr(v) for k, v in config.spacetime.model_dump().items()}
    run = {"seed": str(config.seed), "mode": config.mode.value, "trials": str(config.trials)}
    if strategy_file:
        run["strategy"] = strategy_file
    if config.injections:
        run["injections"] = ", ".join(f"{j}:{delay!r}" for j, delay in sorted(config.injections.items()))
    if config.safety_factor is not None:
        run["safety_factor"] = repr(config.safety_factor)
    parser["run"] = run

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        parser.write(fh)
    return path


def read_game_spec(path: PathLike) -> GameSpec:
    """[field] plus [game] with alice_probs = 1/2, 1/2 and bob = uniform (or a list)"""
    parser = _read_ini(path)
    try:
        spec = field_from_section(_section(parser, "field"))
        game = _section(parser, "game")
        alice = InputDistribution(field=spec, probs=[p for p in game["alice_probs"].split(",")])
        bob_text = game.get("bob", "uniform").strip()
        bob = None if bob_text == "uniform" else InputDistribution(field=spec, probs=bob_text.split(","))
        return GameSpec(
            field=spec,
            alice_dist=alice,
            bob_dist=bob,
            paper_mode=game.getboolean("paper_mode", fallback=True),
        )
    except ValidationError:
        raise
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"invalid game specification {path}: {exc}", path=str(path)) from exc


# ---------------------------------------------------------------------------
# Transcript files: one JSON object per line, each chained to the previous
# ---------------------------------------------------------------------------

def _digest(previous: str, body: dict) -> str:
    payload = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256((previous + payload).encode("utf-8")).hexdigest()


def _hex(element) -> str:
    return to_bytes(element).hex()


def transcript_lines(
    transcript: Transcript,
    spacetime: Optional[SpacetimeConfig] = None,
    seed: Optional[int] = None,
) -> list[str]:
    bodies = [
        {
            "type": "header",
            "params": transcript.params.model_dump(mode="json"),
            "spacetime": None if spacetime is None else spacetime.model_dump(mode="json"),
            "seed": seed,
        }
    ]
    for r in transcript.records:
        bodies.append(
            {
                "type": "round",
                "index": r.index,
                "location": r.location,
                "challenge_hex": _hex(r.challenge),
                "response_hex": _hex(r.response),
                "emit_time_seconds": r.emit_time,
                "challenge_time_seconds": r.challenge_time,
                "available_at_seconds": r.available_at,
            }
        )
    bodies.append(
        {
            "type": "footer",
            "revealed_bit": transcript.revealed_bit,
            "revealed_ak_hex": None if transcript.revealed_ak is None else _hex(transcript.revealed_ak),
            "reveal_time_seconds": transcript.reveal_time,
            "verified_at_seconds": transcript.verified_at,
            "verdict": None if transcript.verdict is None else transcript.verdict.value,
        }
    )
    lines, previous = [], GENESIS_DIGEST
    for body in bodies:
        previous = _digest(previous, body)
        lines.append(json.dumps({**body, "digest": previous}, sort_keys=True))
    return lines


def write_transcript(
    path: PathLike,
    transcript: Transcript,
    spacetime: Optional[SpacetimeConfig] = None,
    seed: Optional[int] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(transcript_lines(transcript, spacetime, seed)) + "\n", encoding="utf-8")
    logger.info(f"Transcript saved to: {path}")
    return path


@dataclass
class LoadedTranscript:
    transcript: Transcript
    spacetime: Optional[SpacetimeConfig]
    seed: Optional[int]
    stored_verdict: Optional[Verdict]


def read_transcript(path: PathLike) -> LoadedTranscript:
    """Parse a transcript file, checking the digest chain line by line"""
    lines = [line for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
    if len(lines) < 2:
        raise TranscriptFormatError("a transcript needs a header and a footer line", round=0)

    previous = GENESIS_DIGEST
    bodies = []
    for position, line in enumerate(lines):
        # header is round 0, round lines are 1..k, footer is k + 1
        try:
            body = json.loads(line)
            stored = body.pop("digest")
        except (json.JSONDecodeError, KeyError, AttributeError) as exc:
            raise TranscriptFormatError(f"line {position + 1} is not a transcript record", round=position) from exc
        expected = _digest(previous, body)
        if stored != expected:
            raise TranscriptFormatError(f"digest mismatch at line {position + 1}", round=position)
        previous = stored
        bodies.append(body)

    header, rounds, footer = bodies[0], bodies[1:-1], bodies[-1]
    if header.get("type") != "header" or footer.get("type") != "footer":
        raise TranscriptFormatError("first line must be the header and last line the footer", round=0)
    try:
        params = ProtocolParams.model_validate(header["params"])
        spec = params.field
        spacetime = None if header.get("spacetime") is None else SpacetimeConfig.model_validate(header["spacetime"])
        transcript = Transcript(params=params)
        for body in rounds:
            transcript.append(
                RoundRecord(
                    index=body["index"],
                    challenge=from_bytes(spec, bytes.fromhex(body["challenge_hex"])),
                    response=from_bytes(spec, bytes.fromhex(body["response_hex"])),
                    location=body["location"],
                    emit_time=body["emit_time_seconds"],
                    challenge_time=body.get("challenge_time_seconds", 0.0),
                    available_at=body.get("available_at_seconds", 0.0),
                )
            )
        if footer.get("revealed_ak_hex") is not None:
            transcript.revealed_ak = from_bytes(spec, bytes.fromhex(footer["revealed_ak_hex"]))
        transcript.revealed_bit = footer.get("revealed_bit")
        transcript.reveal_time = footer.get("reveal_time_seconds")
        transcript.verified_at = footer.get("verified_at_seconds")
    except (KeyError, TypeError, ValueError) as exc:
        raise TranscriptFormatError(f"malformed transcript {path}: {exc}") from exc
    stored = footer.get("verdict")
    transcript.seal()
    return LoadedTranscript(
        transcript=transcript,
        spacetime=spacetime,
        seed=header.get("seed"),
        stored_verdict=None if stored is None else Verdict(stored),
    )


@dataclass
class VerificationReport:
    verdict: Verdict
    failing_round: Optional[int] = None
    reason: str = ""
    violations: list[Violation] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "failing_round": self.failing_round,
            "reason": self.reason,
            "violations": [v.describe() for v in self.violations],
            "violation_rounds": [v.round for v in self.violations],
        }


def verify_transcript_file(path: PathLike) -> VerificationReport:
    """Recompute the verdict of a stored transcript and re-validate its timing"""
    try:
        loaded = read_transcript(path)
    except TranscriptFormatError as exc:
        logger.warning(f"Transcript rejected: {exc}")
        return VerificationReport(Verdict.REJECT, exc.details.get("round"), str(exc))

    t = loaded.transcript
    if t.revealed_bit is None or t.revealed_ak is None:
        return VerificationReport(Verdict.REJECT, t.params.rounds + 1, "no reveal recorded")
    try:
        verdict = verify_reveal(t, t.revealed_bit, t.revealed_ak)
    except IncompleteTranscriptError as exc:
        return VerificationReport(Verdict.REJECT, len(t.records) + 1, str(exc))

    violations = [] if loaded.spacetime is None else validate_schedule(t.events(), loaded.spacetime)
    if loaded.stored_verdict is not None and loaded.stored_verdict != verdict:
        logger.warning(f"Stored verdict {loaded.stored_verdict.value} differs from recomputed {verdict.value}")
    reason = "" if verdict == Verdict.ACCEPT else "revealed a_k does not match the recovered chain"
    return VerificationReport(verdict, None, reason, violations)


# ---------------------------------------------------------------------------
# Strategy files
# ---------------------------------------------------------------------------

class StrategyTable(BaseModel):
    """One lookup table, entries in row-major order over the named axes"""

    name: str
    axes: list[str]
    entries: list[str]


class StrategyDocument(BaseModel):
    field: FieldSpec
    rounds: int = Field(..., ge=1)
    responders: list[StrategyTable]
    guesser: StrategyTable


def _responder_axes(j: int) -> list[str]:
    if j == 1:
        return ["b_1"]
    return ["d"] + [f"b_{i}" for i in range(1, j - 1)] + [f"b_{j}"]


def strategy_document(strategy: CheatingStrategy) -> StrategyDocument:
    spec = strategy.field

    def encode(table: np.ndarray) -> list[str]:
        return [_hex(spec.element(int(v))) for v in table.ravel()]

    return StrategyDocument(
        field=spec,
        rounds=strategy.rounds,
        responders=[
            StrategyTable(name=f"y_{j}", axes=_responder_axes(j), entries=encode(table))
            for j, table in enumerate(strategy.responders, start=1)
        ],
        guesser=StrategyTable(
            name="G",
            axes=["d"] + [f"b_{i}" for i in range(1, strategy.rounds)],
            entries=encode(strategy.guesser),
        ),
    )


def write_strategy(path: PathLike, strategy: CheatingStrategy) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(strategy_document(strategy).model_dump_json(indent=2), encoding="utf-8")
    logger.info(f"Strategy saved to: {path}")
    return path


def strategy_from_document(doc: StrategyDocument) -> CheatingStrategy:
    spec, q, k = doc.field, doc.field.order, doc.rounds
    if len(doc.responders) != k:
        raise StrategyMismatchError(f"expected {k} responder tables, found {len(doc.responders)}")

    def decode(table: StrategyTable, shape: tuple[int, ...]) -> np.ndarray:
        try:
            values = [int(from_bytes(spec, bytes.fromhex(h))) for h in table.entries]
            return np.array(values, dtype=np.int64).reshape(shape)
        except ValueError as exc:
            raise StrategyMismatchError(f"table {table.name} does not fit shape {shape}: {exc}") from exc

    responders = tuple(decode(t, responder_shape(q, j)) for j, t in enumerate(doc.responders, start=1))
    return CheatingStrategy(field=spec, responders=responders, guesser=decode(doc.guesser, guesser_shape(q, k)))


def read_strategy(path: PathLike) -> CheatingStrategy:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"strategy file {path} does not exist", path=str(path))
    return strategy_from_document(StrategyDocument.model_validate_json(path.read_text(encoding="utf-8")))
