"""The four protocol agents: Alice and Bob at each location"""
from typing import Dict, List, Optional, Sequence, Tuple

from loguru import logger

from .adversary import CheatingStrategy
from .errors import ScheduleError
from .gf import FieldElement, FieldSpec
from .protocol import Verdict, commit_response, recover_chain, sustain_response
from .spacetime import location_of
from .wire import AgentId, Frame, FrameKind

Outgoing = Tuple[AgentId, Frame]

PARTNER = {
    AgentId.A1: AgentId.B1,
    AgentId.B1: AgentId.A1,
    AgentId.A2: AgentId.B2,
    AgentId.B2: AgentId.A2,
}


class Agent:
    """Base agent: state is private, the only input is frames and timers"""

    def __init__(self, agent_id: AgentId, spec: FieldSpec):
        self.agent_id = agent_id
        self.spec = spec

    @property
    def location(self) -> int:
        return self.agent_id.location

    def on_frame(self, frame: Frame, now: float) -> List[Outgoing]:
        return []

    def on_timer(self, round_index: int, now: float) -> List[Outgoing]:
        return []

    def _send(self, dest: AgentId, kind: FrameKind, round_index: int, stamp: float, element: FieldElement) -> Outgoing:
        return dest, Frame.carrying(kind, self.agent_id, round_index, stamp, element)


class HonestAlice(Agent):
    """Alice agent answering with the shared a-vector"""

    def __init__(
        self,
        agent_id: AgentId,
        spec: FieldSpec,
        a: Sequence[FieldElement],
        d: int,
        processing_time_s: float = 0.0,
    ):
        """
        Args:
            agent_id: A1 or A2
            spec: Field of the run
            a: Shared a_1..a_k, identical at both locations
            d: Committed bit
            processing_time_s: Delay between receiving a challenge and answering
        """
        super().__init__(agent_id, spec)
        self.a = tuple(a)
        self.d = d
        self.processing_time_s = processing_time_s

    def on_frame(self, frame: Frame, now: float) -> List[Outgoing]:
        if frame.kind != FrameKind.CHALLENGE:
            return []
        j = frame.round
        b = frame.element(self.spec)
        if j == 1:
            y = commit_response(self.a[0], self.d, b)
        else:
            y = sustain_response(self.a[j - 1], self.a[j - 2], b)
        return [self._send(PARTNER[self.agent_id], FrameKind.RESPONSE, j, now + self.processing_time_s, y)]

    def on_timer(self, round_index: int, now: float) -> List[Outgoing]:
        # the only Alice timer is the reveal, at A1
        dest = PARTNER[self.agent_id]
        stamp = now + self.processing_time_s
        return [
            self._send(dest, FrameKind.REVEAL_BIT, round_index, stamp, self.spec.embed_bit(self.d)),
            self._send(dest, FrameKind.REVEAL_AK, round_index, stamp, self.a[-1]),
        ]


class CheatingAlice(Agent):
    """
    Alice agent driven by a lookup-table strategy

    Each agent forwards the challenges it sees to the other Alice over the
    long channel and answers from whatever challenges it has heard of. An
    answer (or the reveal) that needs a challenge still in flight waits for
    its relay; the late emission then shows up as a timing violation.
    """

    def __init__(
        self,
        agent_id: AgentId,
        spec: FieldSpec,
        strategy: CheatingStrategy,
        d: int,
        processing_time_s: float = 0.0,
    ):
        super().__init__(agent_id, spec)
        self.strategy = strategy
        self.d = d
        self.processing_time_s = processing_time_s
        self.known: Dict[int, int] = {}
        self.partner_alice = AgentId.A2 if agent_id == AgentId.A1 else AgentId.A1
        self.pending: List[int] = []
        self.reveal_round: Optional[int] = None

    def _missing(self, upto: int, skip: Optional[int] = None) -> List[int]:
        return [i for i in range(1, upto + 1) if i != skip and i not in self.known]

    def _history(self, upto: int) -> List[int]:
        return [self.known.get(i, 0) for i in range(1, upto + 1)]

    def _answer(self, j: int, now: float) -> Outgoing:
        y = self.spec.element(self.strategy.respond(j, self.d, self._history(j)))
        return self._send(PARTNER[self.agent_id], FrameKind.RESPONSE, j, now + self.processing_time_s, y)

    def _reveal(self, now: float) -> List[Outgoing]:
        k = self.strategy.rounds
        guess = self.spec.element(self.strategy.guess(self.d, self._history(k - 1) + [0]))
        dest = PARTNER[self.agent_id]
        stamp = now + self.processing_time_s
        return [
            self._send(dest, FrameKind.REVEAL_BIT, self.reveal_round, stamp, self.spec.embed_bit(self.d)),
            self._send(dest, FrameKind.REVEAL_AK, self.reveal_round, stamp, guess),
        ]

    def _flush(self, now: float) -> List[Outgoing]:
        out: List[Outgoing] = []
        while self.pending and not self._missing(self.pending[0], skip=self.pending[0] - 1):
            out.append(self._answer(self.pending.pop(0), now))
        if self.reveal_round is not None and not self.pending and not self._missing(self.strategy.rounds - 1):
            out.extend(self._reveal(now))
            self.reveal_round = None
        return out

    def on_frame(self, frame: Frame, now: float) -> List[Outgoing]:
        if frame.kind == FrameKind.RELAY:
            self.known[frame.round] = int(frame.element(self.spec))
            return self._flush(now)
        if frame.kind != FrameKind.CHALLENGE:
            return []

        j = frame.round
        b = frame.element(self.spec)
        self.known[j] = int(b)
        self.pending.append(j)
        if self._missing(j, skip=j - 1):
            logger.debug(f"{self.agent_id.name} holds round {j} until the missing challenges arrive")
        return [self._send(self.partner_alice, FrameKind.RELAY, j, now, b)] + self._flush(now)

    def on_timer(self, round_index: int, now: float) -> List[Outgoing]:
        self.reveal_round = round_index
        return self._flush(now)


class HonestBob(Agent):
    """
    Bob agent: issues its location's challenges and records the answers

    B2 forwards every answer to B1; B1 verifies once the reveal and all k
    answers are known at location 1.
    """

    def __init__(self, agent_id: AgentId, spec: FieldSpec, b: Sequence[FieldElement]):
        super().__init__(agent_id, spec)
        self.b = tuple(b)
        self.rounds = len(self.b)
        self.challenge_time: Dict[int, float] = {}
        self.responses: Dict[int, FieldElement] = {}
        self.emit_time: Dict[int, float] = {}
        self.known_at: Dict[int, float] = {}
        self.revealed_bit: Optional[int] = None
        self.revealed_ak: Optional[FieldElement] = None
        self.reveal_time: Optional[float] = None
        self.verdict: Optional[Verdict] = None
        self.verified_at: Optional[float] = None

    @property
    def is_verifier(self) -> bool:
        return self.agent_id == AgentId.B1

    def on_timer(self, round_index: int, now: float) -> List[Outgoing]:
        if location_of(round_index) != self.location:
            raise ScheduleError(f"{self.agent_id.name} cannot run round {round_index}", round=round_index)
        self.challenge_time[round_index] = now
        logger.debug(f"{self.agent_id.name} challenges round {round_index} at {now:.9g}s")
        return [self._send(PARTNER[self.agent_id], FrameKind.CHALLENGE, round_index, now, self.b[round_index - 1])]

    def on_frame(self, frame: Frame, now: float) -> List[Outgoing]:
        out: List[Outgoing] = []
        if frame.kind == FrameKind.RESPONSE:
            y = frame.element(self.spec)
            self.responses[frame.round] = y
            self.emit_time[frame.round] = frame.stamp
            self.known_at[frame.round] = now
            if not self.is_verifier:
                out.append(self._send(AgentId.B1, FrameKind.RELAY, frame.round, now, y))
        elif frame.kind == FrameKind.RELAY and self.is_verifier:
            self.responses[frame.round] = frame.element(self.spec)
            self.known_at[frame.round] = now
        elif frame.kind == FrameKind.REVEAL_BIT:
            self.revealed_bit = int(frame.element(self.spec))
            self.reveal_time = frame.stamp
        elif frame.kind == FrameKind.REVEAL_AK:
            self.revealed_ak = frame.element(self.spec)

        if self.is_verifier:
            self._try_verify(now)
        return out

    def _try_verify(self, now: float) -> None:
        if self.verdict is not None or self.revealed_bit is None or self.revealed_ak is None:
            return
        if len(self.responses) < self.rounds:
            return
        chain = recover_chain(self.b, [self.responses[j] for j in range(1, self.rounds + 1)], self.revealed_bit)
        self.verdict = Verdict.ACCEPT if chain[-1] == self.revealed_ak else Verdict.REJECT
        self.verified_at = now
        logger.debug(f"B1 verdict at {now:.9g}s: {self.verdict.value}")
