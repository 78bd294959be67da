"""Binary framing for messages between agents"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

from .errors import EncodingError
from .gf import FieldElement, FieldSpec, from_bytes, to_bytes

HEADER = struct.Struct(">BBIdH")


class FrameKind(IntEnum):
    CHALLENGE = 1
    RESPONSE = 2
    REVEAL_BIT = 3
    REVEAL_AK = 4
    RELAY = 5


class AgentId(IntEnum):
    A1 = 1
    A2 = 2
    B1 = 3
    B2 = 4

    @property
    def location(self) -> int:
        return 1 if self in (AgentId.A1, AgentId.B1) else 2

    @property
    def is_alice(self) -> bool:
        return self in (AgentId.A1, AgentId.A2)


@dataclass(frozen=True)
class Frame:
    """One message: kind, sender, round, simulated send time, element payload"""

    kind: FrameKind
    sender: AgentId
    round: int
    stamp: float
    payload: bytes

    @classmethod
    def carrying(cls, kind: FrameKind, sender: AgentId, round_index: int, stamp: float, element: FieldElement) -> "Frame":
        return cls(kind, sender, round_index, stamp, to_bytes(element))

    def element(self, spec: FieldSpec) -> FieldElement:
        if len(self.payload) != spec.byte_length:
            raise EncodingError(
                f"{self.kind.name.lower()} payload is {len(self.payload)} bytes, {spec.label} needs {spec.byte_length}",
                round=self.round,
            )
        return from_bytes(spec, self.payload)

    def encode(self) -> bytes:
        return HEADER.pack(self.kind, self.sender, self.round, self.stamp, len(self.payload)) + self.payload

    @classmethod
    def decode(cls, data: bytes) -> "Frame":
        if len(data) < HEADER.size:
            raise EncodingError(f"frame shorter than its {HEADER.size}-byte header")
        kind, sender, round_index, stamp, length = HEADER.unpack_from(data)
        if len(data) != HEADER.size + length:
            raise EncodingError(f"frame declares {length} payload bytes, carries {len(data) - HEADER.size}")
        try:
            return cls(FrameKind(kind), AgentId(sender), round_index, stamp, bytes(data[HEADER.size :]))
        except ValueError as exc:
            raise EncodingError(f"unknown frame kind or sender: {exc}") from exc
