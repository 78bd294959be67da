"""Event-driven four-agent simulation on a logical clock"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Tuple

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config.settings import get_settings

from .adversary import AttackResult, CheatingStrategy, attack_value
from .agents import Agent, CheatingAlice, HonestAlice, HonestBob
from .errors import IncompleteTranscriptError, InstanceTooLargeError, ScheduleError, StrategyMismatchError
from .gf import make_rng, random_element
from .protocol import HidingReport, ProtocolParams, RoundRecord, Transcript, Verdict, hiding_audit, prepare
from .spacetime import SpacetimeConfig, Violation, location_of, round_period, validate_schedule
from .wire import AgentId, Frame, FrameKind


def _default_seed() -> int:
    return get_settings().default_seed


class RunMode(str, Enum):
    HONEST = "honest"
    ATTACK = "attack"
    HIDING_AUDIT = "hiding-audit"
    TIMING_AUDIT = "timing-audit"


class SimulationConfig(BaseModel):
    """Everything a run depends on; identical configs give identical runs"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    params: ProtocolParams
    spacetime: SpacetimeConfig
    seed: int = Field(default_factory=_default_seed, ge=0, lt=2**64)
    mode: RunMode = RunMode.HONEST
    bit: int = Field(default=0, ge=0, le=1)
    strategy: Optional[CheatingStrategy] = None
    trials: int = Field(default=1, ge=1)
    injections: Dict[int, float] = Field(default_factory=dict)
    safety_factor: Optional[float] = Field(default=None, gt=0, lt=1)

    @model_validator(mode="after")
    def _mode_inputs(self) -> "SimulationConfig":
        if self.mode == RunMode.ATTACK and self.strategy is None:
            raise ValueError("attack mode needs a strategy")
        if self.injections and self.mode != RunMode.TIMING_AUDIT:
            raise ValueError("delay injections are only used in timing-audit mode")
        for j, delay in self.injections.items():
            if not 1 <= j <= self.params.rounds or delay < 0:
                raise ValueError(f"bad injection {j}:{delay}")
        return self


@dataclass(order=True)
class _Delivery:
    time: float
    sender: int
    round: int
    seq: int
    dest: AgentId = field(compare=False)
    data: Optional[bytes] = field(compare=False, default=None)


Observer = Callable[[float, AgentId, Optional[Frame]], None]


class Simulator:
    """
    Single total order over deliveries: (time, sender id, round, insertion)

    Frames between locations take distance / speed, frames inside a location
    take the local channel time. Frames travel encoded and are decoded on
    delivery; stamps never decrease along a channel.
    """

    def __init__(
        self,
        spacetime: SpacetimeConfig,
        agents: Dict[AgentId, Agent],
        injections: Optional[Dict[int, float]] = None,
        observer: Optional[Observer] = None,
    ):
        """
        Args:
            spacetime: Geometry and latencies
            agents: The four agents by id
            injections: Extra delay added to the response of a round
            observer: Called on every delivery, before the agent sees it
        """
        self.spacetime = spacetime
        self.agents = agents
        self.injections = dict(injections or {})
        self.observer = observer
        self.now = 0.0
        self._queue: List[_Delivery] = []
        self._seq = 0
        self._last_stamp: Dict[Tuple[AgentId, AgentId], float] = {}

    def latency(self, src: AgentId, dst: AgentId) -> float:
        if src.location == dst.location:
            return self.spacetime.local_channel_time_s
        return self.spacetime.light_time_s

    def _push(self, time: float, sender: int, round_index: int, dest: AgentId, data: Optional[bytes]) -> None:
        heapq.heappush(self._queue, _Delivery(time, sender, round_index, self._seq, dest, data))
        self._seq += 1

    def schedule_timer(self, agent: AgentId, round_index: int, time: float) -> None:
        self._push(time, int(agent), round_index, agent, None)

    def send(self, dest: AgentId, frame: Frame) -> None:
        if frame.kind == FrameKind.RESPONSE and frame.round in self.injections:
            frame = replace(frame, stamp=frame.stamp + self.injections[frame.round])
        else:
            channel = (frame.sender, dest)
            if frame.stamp < self._last_stamp.get(channel, 0.0):
                raise ScheduleError(
                    f"{frame.sender.name} -> {dest.name} stamps went backwards at round {frame.round}", round=frame.round
                )
            self._last_stamp[channel] = frame.stamp
        self._push(frame.stamp + self.latency(frame.sender, dest), int(frame.sender), frame.round, dest, frame.encode())

    def run(self) -> None:
        while self._queue:
            delivery = heapq.heappop(self._queue)
            self.now = delivery.time
            frame = None if delivery.data is None else Frame.decode(delivery.data)
            if self.observer is not None:
                self.observer(delivery.time, delivery.dest, frame)
            agent = self.agents[delivery.dest]
            if frame is None:
                outgoing = agent.on_timer(delivery.round, delivery.time)
            else:
                outgoing = agent.on_frame(frame, delivery.time)
            for dest, frame in outgoing:
                self.send(dest, frame)


@dataclass(frozen=True)
class AttackStats:
    trials: int
    accepts: int
    expected: Optional[Fraction] = None

    @property
    def rate(self) -> float:
        return self.accepts / self.trials

    @property
    def sigma(self) -> Optional[float]:
        if self.expected is None:
            return None
        p = float(self.expected)
        return math.sqrt(p * (1 - p) / self.trials)

    @property
    def within_3_sigma(self) -> Optional[bool]:
        if self.expected is None:
            return None
        return abs(self.rate - float(self.expected)) <= 3 * self.sigma


@dataclass
class RunResult:
    mode: RunMode
    transcript: Transcript
    violations: List[Violation] = field(default_factory=list)
    attack: Optional[AttackStats] = None
    hiding: Optional[HidingReport] = None

    @property
    def verdict(self) -> Verdict:
        return self.transcript.verdict

    @property
    def valid(self) -> bool:
        return not self.violations

    def summary(self) -> dict:
        out = {
            "mode": self.mode.value,
            "field": self.transcript.params.field.label,
            "rounds": self.transcript.params.rounds,
            "verdict": self.verdict.value,
            "valid": self.valid,
            "violations": [v.describe() for v in self.violations],
            "violation_rounds": [v.round for v in self.violations],
        }
        if self.attack is not None:
            out["attack"] = {
                "trials": self.attack.trials,
                "accepts": self.attack.accepts,
                "rate": self.attack.rate,
                "expected": None if self.attack.expected is None else str(self.attack.expected),
                "within_3_sigma": self.attack.within_3_sigma,
            }
        if self.hiding is not None:
            out["hiding"] = {"holds": self.hiding.holds, "b_vectors_checked": self.hiding.b_vectors_checked}
        return out


def _drive(config: SimulationConfig, agents: Dict[AgentId, Agent], observer: Optional[Observer] = None) -> Transcript:
    """Run one commitment from preparation to verdict"""
    params, spacetime = config.params, config.spacetime
    k = params.rounds
    period = round_period(spacetime, config.safety_factor)
    injections = config.injections if config.mode == RunMode.TIMING_AUDIT else None
    sim = Simulator(spacetime, agents, injections=injections, observer=observer)
    for j in range(1, k + 1):
        sim.schedule_timer(AgentId.B1 if location_of(j) == 1 else AgentId.B2, j, (j - 1) * period)
    sim.schedule_timer(AgentId.A1, k + 1, k * period)
    sim.run()
    return _assemble(params, agents[AgentId.B1], agents[AgentId.B2])


def _assemble(params: ProtocolParams, b1: HonestBob, b2: HonestBob) -> Transcript:
    """Pool both Bobs' records; availability is when B1 learned each answer"""
    if b1.verdict is None:
        raise IncompleteTranscriptError("the run ended before B1 could verify")
    transcript = Transcript(params=params)
    for j in range(1, params.rounds + 1):
        bob = b1 if location_of(j) == 1 else b2
        transcript.append(
            RoundRecord(
                index=j,
                challenge=bob.b[j - 1],
                response=bob.responses[j],
                location=location_of(j),
                emit_time=bob.emit_time[j],
                challenge_time=bob.challenge_time[j],
                available_at=b1.known_at[j],
            )
        )
    transcript.revealed_bit = b1.revealed_bit
    transcript.revealed_ak = b1.revealed_ak
    transcript.reveal_time = b1.reveal_time
    transcript.verdict = b1.verdict
    transcript.verified_at = b1.verified_at
    return transcript.seal()


def honest_agents(config: SimulationConfig, rng) -> Dict[AgentId, Agent]:
    spec = config.params.field
    shared = prepare(config.params, rng)
    processing = config.spacetime.processing_time_s
    return {
        AgentId.A1: HonestAlice(AgentId.A1, spec, shared.a, config.bit, processing),
        AgentId.A2: HonestAlice(AgentId.A2, spec, shared.a, config.bit, processing),
        AgentId.B1: HonestBob(AgentId.B1, spec, shared.b),
        AgentId.B2: HonestBob(AgentId.B2, spec, shared.b),
    }


def cheating_agents(config: SimulationConfig, rng) -> Dict[AgentId, Agent]:
    spec, k = config.params.field, config.params.rounds
    d = int(rng.integers(2))
    b = [random_element(spec, rng) for _ in range(k)]
    processing = config.spacetime.processing_time_s
    return {
        AgentId.A1: CheatingAlice(AgentId.A1, spec, config.strategy, d, processing),
        AgentId.A2: CheatingAlice(AgentId.A2, spec, config.strategy, d, processing),
        AgentId.B1: HonestBob(AgentId.B1, spec, b),
        AgentId.B2: HonestBob(AgentId.B2, spec, b),
    }


def _exact_attack(config: SimulationConfig) -> Optional[AttackResult]:
    try:
        return attack_value(config.strategy, config.params)
    except InstanceTooLargeError:
        return None


def run(config: SimulationConfig, observer: Optional[Observer] = None) -> RunResult:
    """
    Execute a SimulationConfig

    Args:
        config: Parameters, geometry, seed and mode
        observer: Optional hook seeing every delivery

    Returns:
        RunResult with the sealed transcript of the (first) commitment,
        the timing violations and the mode-specific report
    """
    params = config.params
    logger.info(f"Run {config.mode.value}: {params.field.label}, k={params.rounds}, seed={config.seed}")
    rng = make_rng(config.seed)

    attack = hiding = None
    if config.mode == RunMode.ATTACK:
        strategy = config.strategy
        if strategy.field != params.field or strategy.rounds != params.rounds:
            raise StrategyMismatchError(
                f"strategy is for {strategy.field.label} k={strategy.rounds}, run is {params.field.label} k={params.rounds}"
            )
        transcript, accepts = None, 0
        for trial in range(config.trials):
            result = _drive(config, cheating_agents(config, rng), observer)
            accepts += result.verdict == Verdict.ACCEPT
            transcript = transcript or result
        exact = _exact_attack(config)
        attack = AttackStats(config.trials, accepts, None if exact is None else exact.success_rate)
        logger.info(f"Attack replay: {accepts}/{config.trials} reveals accepted")
    else:
        transcript = _drive(config, honest_agents(config, rng), observer)
        if config.mode == RunMode.HIDING_AUDIT:
            hiding = hiding_audit(params)

    violations = validate_schedule(transcript.events(), config.spacetime)
    if transcript.verdict == Verdict.REJECT and config.mode != RunMode.ATTACK:
        logger.warning("Honest run rejected")
    logger.info(f"Run finished: verdict={transcript.verdict.value}, violations={len(violations)}")
    return RunResult(config.mode, transcript, violations, attack, hiding)
