"""Agent action and state containers shared by the learner and the context layer."""
from __future__ import annotations

from dataclasses import dataclass

from .sim import Observation


@dataclass(frozen=True, order=True)
class Action:
    """Packet length ``packet_len`` (0 means sense) on 0-based ``channel``."""

    packet_len: int
    channel: int

    @property
    def is_sense(self) -> bool:
        return self.packet_len == 0

    @property
    def slots(self) -> int:
        return max(self.packet_len, 1)

    def index(self, num_channels: int) -> int:
        return self.packet_len * num_channels + self.channel

    @classmethod
    def from_index(cls, index: int, num_channels: int) -> "Action":
        return cls(index // num_channels, index % num_channels)


# history slot before the agent has acted: encodes to all zeros
NULL_ENTRY: tuple[Observation | None, Action | None] = (None, None)


@dataclass(frozen=True)
class AgentState:
    history: tuple[tuple[Observation | None, Action | None], ...]
    ratios: tuple[float, ...]

    @classmethod
    def initial(cls, history_len: int, ratios) -> "AgentState":
        return cls((NULL_ENTRY,) * history_len, tuple(float(r) for r in ratios))

    def push(self, obs: Observation, action: Action, ratios) -> "AgentState":
        return AgentState(self.history[1:] + ((obs, action),), tuple(float(r) for r in ratios))
