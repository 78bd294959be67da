"""Simulated relativistic timing: event stamps, light-cone validation, planner"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config.settings import get_settings

from .errors import ScheduleError

SECONDS_PER_YEAR = 365.25 * 86_400


def _default_speed() -> float:
    return get_settings().signal_speed_mps


class SpacetimeConfig(BaseModel):
    """Two stations on a line, distance_m apart"""

    model_config = ConfigDict(frozen=True)

    distance_m: float = Field(..., gt=0)
    signal_speed_mps: float = Field(default_factory=_default_speed, gt=0)
    processing_time_s: float = Field(default=0.0, ge=0)
    local_channel_time_s: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _latencies_inside_light_time(self) -> "SpacetimeConfig":
        if self.processing_time_s + self.local_channel_time_s >= self.light_time_s:
            raise ValueError(
                "processing_time_s + local_channel_time_s must be below distance_m / signal_speed_mps; "
                "no valid schedule exists otherwise"
            )
        return self

    @property
    def light_time_s(self) -> float:
        return self.distance_m / self.signal_speed_mps

    @property
    def local_latency_s(self) -> float:
        return self.processing_time_s + self.local_channel_time_s


class EventKind(str, Enum):
    CHALLENGE_SENT = "challenge_sent"
    RESPONSE_SENT = "response_sent"
    REVEAL = "reveal"


@dataclass(frozen=True)
class Event:
    round: int
    location: int
    time_s: float
    kind: EventKind


@dataclass(frozen=True)
class Violation:
    """
    A timing fault of one round

    kind "light_cone" and "reveal": emitted at or after deadline_s.
    kind "order": emitted before deadline_s, the time of an earlier challenge.
    """

    round: int
    emitted_s: float
    deadline_s: float
    kind: str = "light_cone"

    def describe(self) -> str:
        relation = "must precede" if self.kind in ("light_cone", "reveal") else "must not precede"
        return (
            f"round {self.round}: emitted at {self.emitted_s:.9g}s, "
            f"{relation} {self.deadline_s:.9g}s ({self.kind})"
        )


def location_of(round_index: int) -> int:
    return 1 if round_index % 2 else 2


def default_schedule(config: SpacetimeConfig, rounds: int, safety_factor: Optional[float] = None) -> list[Event]:
    """
    Harness scheduler: round j starts at (j - 1) * period

    The period is safety_factor * (d/c - local latency), so every response
    leaves the previous challenge's light cone with margin.
    """
    period = round_period(config, safety_factor)
    events: list[Event] = []
    for j in range(1, rounds + 1):
        loc = location_of(j)
        challenge = (j - 1) * period
        events.append(Event(j, loc, challenge, EventKind.CHALLENGE_SENT))
        events.append(Event(j, loc, challenge + config.local_latency_s, EventKind.RESPONSE_SENT))
    events.append(Event(rounds + 1, 1, rounds * period + config.processing_time_s, EventKind.REVEAL))
    return events


def round_period(config: SpacetimeConfig, safety_factor: Optional[float] = None) -> float:
    factor = get_settings().schedule_safety_factor if safety_factor is None else safety_factor
    return factor * (config.light_time_s - config.local_latency_s)


def validate_schedule(events: Iterable[Event], config: SpacetimeConfig) -> list[Violation]:
    """
    Check every round's response against the previous round's challenge

    Returns:
        All violations, ordered by round; an empty list means the schedule is valid
    """
    challenges: dict[int, Event] = {}
    responses: dict[int, Event] = {}
    reveals: list[Event] = []
    for event in events:
        if event.time_s < 0:
            raise ScheduleError(f"negative timestamp in round {event.round}", round=event.round)
        if event.kind == EventKind.REVEAL:
            reveals.append(event)
            continue
        table = challenges if event.kind == EventKind.CHALLENGE_SENT else responses
        if event.round in table:
            raise ScheduleError(f"duplicate {event.kind.value} for round {event.round}", round=event.round)
        if event.location != location_of(event.round):
            raise ScheduleError(
                f"round {event.round} must run at location {location_of(event.round)}", round=event.round
            )
        table[event.round] = event

    k = len(challenges)
    if set(challenges) != set(range(1, k + 1)) or set(responses) != set(challenges):
        raise ScheduleError("events must cover rounds 1..k with one challenge and one response each")
    if len(reveals) > 1:
        raise ScheduleError("at most one reveal event is allowed")

    light = config.light_time_s
    violations: list[Violation] = []
    latest_challenge = {1: 0.0, 2: 0.0}
    issued = 0.0
    for j in range(1, k + 1):
        if responses[j].time_s < challenges[j].time_s:
            raise ScheduleError(f"round {j} responds before its challenge", round=j)
        # challenges go out in round order, hence non-decreasing at each location
        sent = challenges[j].time_s
        if j > 1 and sent < issued:
            violations.append(Violation(j, sent, issued, kind="order"))
        issued = max(issued, sent)
        latest_challenge[location_of(j)] = max(latest_challenge[location_of(j)], sent)
        if j == 1:
            continue
        deadline = challenges[j - 1].time_s + light
        if not responses[j].time_s < deadline:
            violations.append(Violation(j, responses[j].time_s, deadline))

    if reveals and k:
        reveal = reveals[0]
        if reveal.location != 1:
            raise ScheduleError("the reveal happens at location 1")
        if reveal.time_s < latest_challenge[1]:
            violations.append(Violation(k + 1, reveal.time_s, latest_challenge[1], kind="order"))
        # A_1 must not have heard of b_k when it was issued at location 2
        if location_of(k) == 2:
            deadline = challenges[k].time_s + light
            if not reveal.time_s < deadline:
                violations.append(Violation(k + 1, reveal.time_s, deadline, kind="reveal"))

    for violation in violations:
        logger.warning(f"Timing violation - {violation.describe()}")
    return violations


# ---------------------------------------------------------------------------
# Planner
# ---------------------------------------------------------------------------

def max_rounds(config: SpacetimeConfig, total_time_s: float, margin: float = 0.0) -> int:
    """Largest k whose rounds, one every (d/c)(1 - margin), fit in total_time_s (at least the commit)"""
    period = Fraction(config.distance_m) / Fraction(config.signal_speed_mps) * (1 - Fraction(margin))
    if period <= 0:
        raise ValueError("margin must leave a positive round period")
    return max(1, math.floor(Fraction(total_time_s) / period))


def _check_security_inputs(epsilon: Union[float, Fraction], q: int) -> None:
    if not 0 < epsilon <= 1:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
    if q < 2:
        raise ValueError(f"q must be at least 2, got {q}")


def log2_rounds_for_security(log2_epsilon: float, q: int) -> float:
    """log2 of eps * sqrt(q / 2)"""
    return log2_epsilon + (math.log2(q) - 1.0) / 2.0


def rounds_for_security(epsilon: Union[float, Fraction], q: int) -> float:
    """Number of rounds m = eps * sqrt(q / 2) allowed at binding level eps"""
    _check_security_inputs(epsilon, q)
    return 2.0 ** log2_rounds_for_security(math.log2(epsilon), q)


def commitment_time(epsilon: Union[float, Fraction], q: int, config: SpacetimeConfig) -> float:
    """T = (d / c) * eps * sqrt(q / 2), in seconds"""
    _check_security_inputs(epsilon, q)
    log2_t = math.log2(config.light_time_s) + log2_rounds_for_security(math.log2(epsilon), q)
    return 2.0 ** log2_t


def min_distance(processing_time_s: float, config: SpacetimeConfig) -> float:
    """Infimum of the distances d with processing + local channel time strictly inside d/c"""
    if processing_time_s < 0:
        raise ValueError("processing_time_s must be non-negative")
    return config.signal_speed_mps * (processing_time_s + config.local_channel_time_s)


def plan(
    log2_epsilons: Sequence[float],
    q_values: Sequence[int],
    distances_m: Sequence[float],
    signal_speed_mps: Optional[float] = None,
) -> pd.DataFrame:
    """Planner table: one row per (epsilon, q, distance)"""
    speed = _default_speed() if signal_speed_mps is None else signal_speed_mps
    rows = []
    for log2_eps in log2_epsilons:
        for q in q_values:
            log2_m = log2_rounds_for_security(log2_eps, q)
            for distance in distances_m:
                total = 2.0 ** (log2_m + math.log2(distance / speed))
                rows.append(
                    {
                        "epsilon": f"2^{log2_eps:g}",
                        "q_bits": round(math.log2(q), 3),
                        "distance_m": distance,
                        "rounds": 2.0**log2_m,
                        "total_time": total,
                        "total_years": total / SECONDS_PER_YEAR,
                    }
                )
    return pd.DataFrame(rows, columns=["epsilon", "q_bits", "distance_m", "rounds", "total_time", "total_years"])


def render_table(frame: pd.DataFrame, fmt: str = "text") -> str:
    if fmt == "csv":
        return frame.to_csv(index=False)
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    return frame.to_string(index=False, float_format=lambda v: f"{v:.4g}")
