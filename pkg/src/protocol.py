"""Honest four-agent protocol: preparation, commit, sustain, reveal and verification"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config.settings import get_settings

from .errors import IncompleteTranscriptError, InstanceTooLargeError
from .gf import FieldElement, FieldSpec, random_element, tables
from .spacetime import Event, EventKind, SpacetimeConfig, default_schedule, location_of


def _default_strict() -> bool:
    return get_settings().strict_paper_mode


class ProtocolParams(BaseModel):
    """Field F_q and number of rounds k (commit is round 1)"""

    model_config = ConfigDict(frozen=True)

    field: FieldSpec
    rounds: int = Field(..., ge=1)
    strict_paper_mode: bool = Field(default_factory=_default_strict)

    @model_validator(mode="after")
    def _even_rounds_when_strict(self) -> "ProtocolParams":
        if self.strict_paper_mode and self.rounds % 2:
            raise ValueError(f"strict_paper_mode requires an even number of rounds, got {self.rounds}")
        return self

    @property
    def q(self) -> int:
        return self.field.order


class Verdict(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"


@dataclass(frozen=True)
class SharedRandomness:
    """a_1..a_k held by both Alice agents, b_1..b_k held by both Bob agents"""

    a: tuple[FieldElement, ...]
    b: tuple[FieldElement, ...]

    def __post_init__(self):
        if len(self.a) != len(self.b):
            raise ValueError("Alice and Bob vectors must have the same length k")


@dataclass(frozen=True)
class RoundRecord:
    index: int
    challenge: FieldElement
    response: FieldElement
    location: int
    emit_time: float
    challenge_time: float = 0.0
    # when the record is known at location 1, where verification happens
    available_at: float = 0.0

    def __post_init__(self):
        if self.location != location_of(self.index):
            raise ValueError(f"round {self.index} runs at location {location_of(self.index)}, not {self.location}")


@dataclass
class Transcript:
    """Verifier-side history; append-only until sealed"""

    params: ProtocolParams
    records: list[RoundRecord] = field(default_factory=list)
    revealed_bit: Optional[int] = None
    revealed_ak: Optional[FieldElement] = None
    reveal_time: Optional[float] = None
    verdict: Optional[Verdict] = None
    verified_at: Optional[float] = None
    sealed: bool = False

    def append(self, record: RoundRecord) -> None:
        if self.sealed:
            raise ValueError("transcript is sealed")
        expected = len(self.records) + 1
        if record.index != expected:
            raise ValueError(f"expected round {expected}, got {record.index}")
        if expected > self.params.rounds:
            raise ValueError(f"transcript already holds all {self.params.rounds} rounds")
        self.records.append(record)

    @property
    def is_complete(self) -> bool:
        return len(self.records) == self.params.rounds

    def seal(self) -> "Transcript":
        self.sealed = True
        return self

    def events(self) -> list[Event]:
        """Timing events for spacetime.validate_schedule"""
        events = []
        for r in self.records:
            events.append(Event(r.index, r.location, r.challenge_time, EventKind.CHALLENGE_SENT))
            events.append(Event(r.index, r.location, r.emit_time, EventKind.RESPONSE_SENT))
        if self.reveal_time is not None:
            events.append(Event(self.params.rounds + 1, 1, self.reveal_time, EventKind.REVEAL))
        return events


def commit_response(a1: FieldElement, d: int, b1: FieldElement) -> FieldElement:
    """y_1 = a_1 + d * b_1"""
    return a1 + a1.spec.embed_bit(d) * b1


def sustain_response(ai: FieldElement, a_prev: FieldElement, bi: FieldElement) -> FieldElement:
    """y_i = a_i + a_{i-1} * b_i"""
    return ai + a_prev * bi


def recover_chain(challenges: Sequence[FieldElement], responses: Sequence[FieldElement], d: int) -> list[FieldElement]:
    """[a_0 = d, a_1, ..., a_k] through a_j = y_j - b_j * a_{j-1}"""
    if not challenges:
        raise IncompleteTranscriptError("no rounds to recover")
    chain = [challenges[0].spec.embed_bit(d)]
    for b, y in zip(challenges, responses):
        chain.append(y - b * chain[-1])
    return chain


def verify_reveal(transcript: Transcript, d: int, ak_revealed: FieldElement) -> Verdict:
    """Accept iff the recovered a_k equals the revealed one"""
    if not transcript.is_complete:
        raise IncompleteTranscriptError(
            f"transcript holds {len(transcript.records)} of {transcript.params.rounds} rounds",
            rounds=len(transcript.records),
        )
    chain = recover_chain(
        [r.challenge for r in transcript.records],
        [r.response for r in transcript.records],
        d,
    )
    return Verdict.ACCEPT if chain[-1] == ak_revealed else Verdict.REJECT


def prepare(params: ProtocolParams, rng: np.random.Generator) -> SharedRandomness:
    """Preparation phase: k uniform elements per party"""
    a = tuple(random_element(params.field, rng) for _ in range(params.rounds))
    b = tuple(random_element(params.field, rng) for _ in range(params.rounds))
    return SharedRandomness(a=a, b=b)


def honest_response(shared: SharedRandomness, d: int, j: int, challenge: FieldElement) -> FieldElement:
    """Response of the active Alice at round j (1-based)"""
    if j == 1:
        return commit_response(shared.a[0], d, challenge)
    return sustain_response(shared.a[j - 1], shared.a[j - 2], challenge)


def honest_a_chain(shared: SharedRandomness, d: int) -> list[FieldElement]:
    """[a_0 = d, a_1, ..., a_k]: the chain verification recovers from honest answers"""
    if not shared.a:
        raise IncompleteTranscriptError("no rounds prepared")
    return [shared.a[0].spec.embed_bit(d), *shared.a]


def default_spacetime() -> SpacetimeConfig:
    """One light-second between the stations"""
    return SpacetimeConfig(distance_m=get_settings().signal_speed_mps)


def run_honest(
    params: ProtocolParams,
    d: int,
    rng: np.random.Generator,
    spacetime: Optional[SpacetimeConfig] = None,
) -> Transcript:
    """All four phases with honest agents on the default schedule"""
    spacetime = spacetime or default_spacetime()
    shared = prepare(params, rng)
    schedule = default_schedule(spacetime, params.rounds)
    challenge_at = {e.round: e.time_s for e in schedule if e.kind == EventKind.CHALLENGE_SENT}
    response_at = {e.round: e.time_s for e in schedule if e.kind == EventKind.RESPONSE_SENT}
    reveal_at = next(e.time_s for e in schedule if e.kind == EventKind.REVEAL)

    transcript = Transcript(params=params)
    for j in range(1, params.rounds + 1):
        b = shared.b[j - 1]
        y = honest_response(shared, d, j, b)
        loc = location_of(j)
        emitted = response_at[j]
        transcript.append(
            RoundRecord(
                index=j,
                challenge=b,
                response=y,
                location=loc,
                emit_time=emitted,
                challenge_time=challenge_at[j],
                available_at=emitted + (spacetime.light_time_s if loc == 2 else spacetime.local_channel_time_s),
            )
        )

    transcript.revealed_bit = d
    transcript.revealed_ak = shared.a[-1]
    transcript.reveal_time = reveal_at
    transcript.verified_at = max([reveal_at] + [r.available_at for r in transcript.records])
    transcript.verdict = verify_reveal(transcript, d, shared.a[-1])
    logger.debug(f"Honest run {params.field.label} k={params.rounds} d={d}: {transcript.verdict.value}")
    return transcript.seal()


# ---------------------------------------------------------------------------
# Exhaustive hiding audit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HidingReport:
    """Exact pre-reveal response distributions for both bits"""

    q: int
    rounds: int
    b_vectors_checked: int
    holds: bool
    counterexample: Optional[dict] = None

    @property
    def max_deviation(self) -> Fraction:
        if self.counterexample is None:
            return Fraction(0)
        return self.counterexample["deviation"]


def _all_vectors(q: int, k: int) -> np.ndarray:
    return np.indices((q,) * k).reshape(k, -1).T


def _responses(t, a_vectors: np.ndarray, b: Sequence[int], d: int) -> np.ndarray:
    k = a_vectors.shape[1]
    y = np.empty_like(a_vectors)
    y[:, 0] = t.add[a_vectors[:, 0], t.mul[d, b[0]]]
    for j in range(1, k):
        y[:, j] = t.add[a_vectors[:, j], t.mul[a_vectors[:, j - 1], b[j]]]
    return y


def hiding_audit(params: ProtocolParams, b_vectors: Optional[Sequence[Sequence[int]]] = None) -> HidingReport:
    """
    Perfect hiding by enumeration over every a-vector

    For every fixed b-vector, every prefix (y_1..y_j) must be exactly uniform
    over F_q^j for d = 0 and for d = 1.
    """
    q, k = params.q, params.rounds
    if q ** (2 * k) > get_settings().max_attack_space:
        raise InstanceTooLargeError(f"hiding audit over q={q}, k={k} exceeds the enumeration ceiling")
    t = tables(params.field)
    a_vectors = _all_vectors(q, k)
    n = a_vectors.shape[0]
    candidates = _all_vectors(q, k) if b_vectors is None else np.asarray(b_vectors, dtype=np.int64)
    weights = q ** np.arange(k)

    for b in candidates:
        for d in (0, 1):
            y = _responses(t, a_vectors, b, d)
            for j in range(1, k + 1):
                codes = y[:, :j] @ weights[:j]
                counts = np.bincount(codes, minlength=q**j)
                expected = n // q**j
                worst = int(np.abs(counts - expected).max())
                if worst:
                    deviation = Fraction(worst, n)
                    logger.warning(f"Hiding fails for b={list(b)} d={d} prefix {j}")
                    return HidingReport(q, k, len(candidates), False, {
                        "b": [int(v) for v in b], "d": d, "prefix": j, "deviation": deviation,
                    })
    logger.info(f"Hiding audit {params.field.label} k={k}: {len(candidates)} b-vectors, exact uniformity holds")
    return HidingReport(q, k, len(candidates), True)
