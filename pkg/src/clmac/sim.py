"""Slotted multi-channel medium shared by incumbents and the agent."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .fairness import ThroughputLedger, target_throughputs
from .incumbents import CH, UEProfile, agent_expected_throughput, expected_throughput, make_machine

AGENT_ID = 0


@dataclass(frozen=True)
class SimConfig:
    num_channels: int
    horizon: int
    max_packet_len: int = 5
    header_overhead: float = 0.5
    window: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.num_channels < 1:
            raise ValueError("num_channels must be >= 1")
        if self.max_packet_len < 1:
            raise ValueError("max_packet_len must be >= 1")
        if not 0 <= self.header_overhead < 1:
            raise ValueError("header_overhead must be in [0, 1)")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


class Observation(IntEnum):
    BUSY = 0
    IDLE = 1
    SUCCESS = 2
    COLLISION = 3


@dataclass(frozen=True)
class SlotOutcome:
    slot: int
    counts: tuple[int, ...]
    transmitters: tuple[frozenset, ...]

    def collided(self, channel: int) -> bool:
        return self.counts[channel] >= 2


@dataclass(frozen=True)
class Placement:
    """An incumbent entering the medium.

    For CH ``channel`` only sets where hopping starts (None: drawn at random).
    """

    uid: int
    profile: UEProfile
    channel: int | None


@dataclass(frozen=True)
class ContextChange:
    slot: int
    departures: tuple[int, ...] = ()
    arrivals: tuple[Placement, ...] = ()


@dataclass(frozen=True)
class Announcement:
    """What the base station tells the agent at a change slot.

    ``context`` holds, per channel, the sorted type ids of the incumbents
    there (CH machines appear on every channel).
    """

    time: int
    context: tuple[tuple[str, ...], ...]
    expected_throughputs: dict = field(default_factory=dict, compare=False, hash=False)
    active: tuple[int, ...] = ()


def merge_changes(timeline) -> list[ContextChange]:
    """Fold changes sharing a slot into one, departures before arrivals."""
    by_slot: dict[int, tuple[list, list]] = {}
    for ch in sorted(timeline, key=lambda c: c.slot):
        deps, arrs = by_slot.setdefault(ch.slot, ([], []))
        deps.extend(ch.departures)
        arrs.extend(ch.arrivals)
    return [ContextChange(s, tuple(sorted(d)), tuple(sorted(a, key=lambda p: p.uid))) for s, (d, a) in sorted(by_slot.items())]


def context_of(placements: dict[int, Placement], num_channels: int) -> tuple[tuple[str, ...], ...]:
    per = [[] for _ in range(num_channels)]
    for pl in placements.values():
        chans = range(num_channels) if pl.profile.kind == CH or pl.channel is None else [pl.channel]
        for c in chans:
            per[c].append(pl.profile.type_id)
    return tuple(tuple(sorted(x)) for x in per)


def emit_announcements(timeline, num_channels: int) -> list[Announcement]:
    """Announcements for a whole timeline without running the medium.

    Slot 0 is always announced, even with an empty timeline.
    """
    changes = merge_changes(timeline)
    if not changes or changes[0].slot != 0:
        changes.insert(0, ContextChange(0))
    placements: dict[int, Placement] = {}
    out = []
    for ch in changes:
        _apply(placements, ch)
        out.append(_announce(ch.slot, placements, num_channels))
    return out


def _apply(placements, change):
    for uid in change.departures:
        placements.pop(uid, None)
    for pl in change.arrivals:
        if pl.uid == AGENT_ID:
            raise ValueError("uid 0 is reserved for the agent")
        placements[pl.uid] = pl


def _announce(slot, placements, num_channels) -> Announcement:
    exp = {uid: expected_throughput(pl.profile, num_channels, pl.channel) for uid, pl in sorted(placements.items())}
    return Announcement(slot, context_of(placements, num_channels), exp, tuple(sorted(placements)))


def resolve_agent_packet(start: int, length: int, channel: int, outcomes) -> Observation:
    """Outcome of an agent packet once its last slot has been played.

    Success needs the agent to be alone on ``channel`` in every slot.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    if len(outcomes) != length or outcomes[0].slot != start:
        raise ValueError("outcomes must cover exactly the packet's slots")
    if all(o.counts[channel] == 1 and AGENT_ID in o.transmitters[channel] for o in outcomes):
        return Observation.SUCCESS
    return Observation.COLLISION


def sense(outcome: SlotOutcome, channel: int) -> Observation:
    others = outcome.counts[channel] - (AGENT_ID in outcome.transmitters[channel])
    return Observation.BUSY if others > 0 else Observation.IDLE


class Simulation:
    """Owns time, incumbent machines, and the throughput ledger.

    Per slot the driver calls :meth:`begin_slot` (which may return an
    Announcement) and then :meth:`advance_slot` with the channel the agent
    occupies in that slot, if any.
    """

    def __init__(self, config: SimConfig, timeline, rng: np.random.Generator, trace_path=None):
        self.config = config
        self.rng = rng
        self.t = 0
        self.changes = merge_changes(timeline)
        if not self.changes or self.changes[0].slot != 0:
            self.changes.insert(0, ContextChange(0))
        self._next_change = 0
        self.placements: dict[int, Placement] = {}
        self.machines: dict[int, object] = {}
        self.ledger = ThroughputLedger(config.window)
        self.expected: dict[int, np.ndarray] = {AGENT_ID: agent_expected_throughput(config.num_channels)}
        self.targets: dict[int, np.ndarray] = {}
        self.context: tuple = ()
        self._last_counts = np.zeros(config.num_channels, dtype=int)
        self._last_tx: dict[int, int | None] = {}
        self.incumbent_packets = 0
        self.incumbent_collisions = 0
        self._trace = None
        if trace_path is not None:
            self._trace_file = open(trace_path, "w", newline="")
            self._trace = csv.writer(self._trace_file)
            self._trace.writerow(["slot", "channel", "transmitter_ids"])

    @property
    def done(self) -> bool:
        return self.t >= self.config.horizon

    def begin_slot(self) -> Announcement | None:
        """Apply context changes scheduled for the current slot."""
        if self.done:
            raise RuntimeError("simulation is past its horizon")
        ann = None
        if self._next_change < len(self.changes) and self.changes[self._next_change].slot == self.t:
            change = self.changes[self._next_change]
            self._next_change += 1
            for uid in change.departures:
                self.machines.pop(uid, None)
                self._last_tx.pop(uid, None)
                self.ledger.forget(uid)
            _apply(self.placements, change)
            C = self.config.num_channels
            for pl in change.arrivals:
                self.machines[pl.uid] = make_machine(pl.uid, pl.profile, pl.channel, C, self.rng)
            ann = _announce(self.t, self.placements, C)
            self.context = ann.context
            self.expected = {AGENT_ID: agent_expected_throughput(C), **ann.expected_throughputs}
            self.targets = target_throughputs(self.expected, C, order=[AGENT_ID, *sorted(self.machines)])
        return ann

    def advance_slot(self, agent_channel: int | None = None) -> SlotOutcome:
        """Play one slot. ``agent_channel`` is where the agent transmits."""
        if self.done:
            raise RuntimeError("simulation is past its horizon")
        C = self.config.num_channels
        t = self.t
        self.ledger.advance(t)
        tx = [set() for _ in range(C)]
        if agent_channel is not None:
            tx[agent_channel].add(AGENT_ID)
        last = self._last_counts
        decisions = {}
        for uid, m in self.machines.items():
            own = self._last_tx.get(uid)
            busy = last[m.channel] - (1 if own == m.channel else 0) > 0
            c = m.step(t, busy)
            decisions[uid] = c
            if c is not None:
                tx[c].add(uid)
        counts = np.array([len(s) for s in tx])
        for uid, m in self.machines.items():
            c = decisions[uid]
            if c is None:
                continue
            done = m.record(int(counts[c]))
            if done is not None:
                self.incumbent_packets += 1
                if done.collided:
                    self.incumbent_collisions += 1
                else:
                    self.ledger.credit(uid, done.channel, done.start, done.length, self.config.header_overhead)
        self._last_counts = counts
        self._last_tx = decisions
        outcome = SlotOutcome(t, tuple(int(n) for n in counts), tuple(frozenset(s) for s in tx))
        if self._trace is not None:
            for c in range(C):
                if tx[c]:
                    self._trace.writerow([t, c + 1, " ".join(map(str, sorted(tx[c])))])
        self.t += 1
        return outcome

    def credit_agent(self, start, length, channel) -> float:
        return self.ledger.credit(AGENT_ID, channel, start, length, self.config.header_overhead)

    def agent_ratios(self) -> np.ndarray:
        """Per-channel actual/target throughput of the agent."""
        C = self.config.num_channels
        x = self.ledger.throughputs(AGENT_ID, C)
        chi = self.targets.get(AGENT_ID, np.zeros(C))
        return np.array([x[c] / chi[c] if chi[c] > 0 else (0.0 if x[c] <= 0 else np.inf) for c in range(C)])

    def normalized_throughput(self, uid) -> float:
        """Sum over channels of x divided by sum over channels of the target."""
        C = self.config.num_channels
        chi = self.targets.get(uid)
        if chi is None or chi.sum() <= 0:
            return 0.0
        return float(self.ledger.throughputs(uid, C).sum() / chi.sum())

    def close(self):
        if self._trace is not None:
            self._trace_file.close()
            self._trace = None
