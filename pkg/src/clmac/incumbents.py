"""Legacy transmitters: TDMA, CSMA and channel-hopping machines.

Channels are 0-based internally. The profile text syntax (``TDMA(3,0,8)@1``)
uses 1-based channels to match how scenarios are usually written down.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

TDMA = "TDMA"
CSMA = "CSMA"
CH = "CH"
KINDS = (TDMA, CSMA, CH)


@dataclass(frozen=True)
class UEProfile:
    """Parameter tuple of one legacy transmission machine.

    Two profiles are the same UE type iff all parameters match, so
    ``type_id`` is derived from the tuple itself.
    """

    kind: str
    packet_len: int
    offset: int = 0
    frame: int = 0
    window: int = 0
    max_window: int = 0
    direction: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown UE kind {self.kind!r}")
        if self.packet_len < 1:
            raise ValueError("packet_len must be >= 1")
        if self.kind == TDMA:
            if self.frame < 1 or self.offset < 0 or self.offset + self.packet_len > self.frame:
                raise ValueError(f"TDMA packet does not fit its frame: {self}")
        elif self.kind == CSMA:
            if not 1 <= self.window <= self.max_window:
                raise ValueError(f"CSMA needs 1 <= w <= w_max: {self}")
        elif self.direction not in (1, -1):
            raise ValueError("CH direction must be +1 or -1")

    @classmethod
    def tdma(cls, p, tau, w):
        return cls(TDMA, p, offset=tau, frame=w)

    @classmethod
    def csma(cls, p, w, w_max):
        return cls(CSMA, p, window=w, max_window=w_max)

    @classmethod
    def ch(cls, p, d):
        return cls(CH, p, direction=d)

    @property
    def type_id(self) -> str:
        if self.kind == TDMA:
            return f"TDMA({self.packet_len},{self.offset},{self.frame})"
        if self.kind == CSMA:
            return f"CSMA({self.packet_len},{self.window},{self.max_window})"
        return f"CH({self.packet_len},{self.direction})"

    def __str__(self):
        return self.type_id


_PROFILE_RE = re.compile(
    r"^\s*(TDMA|CSMA|CH)\s*\(([^)]*)\)\s*(?:@\s*(\d+))?\s*$", re.IGNORECASE
)


def parse_profile(text: str) -> tuple[UEProfile, int | None]:
    """Parse ``TDMA(p,tau,w)@ch``, ``CSMA(p,w,wmax)@ch`` or ``CH(p,d)``.

    Returns the profile and its 0-based channel. For CH the channel is
    optional and only fixes where hopping starts.
    """
    m = _PROFILE_RE.match(text)
    if m is None:
        raise ValueError(f"cannot parse UE profile {text!r}")
    kind = m.group(1).upper()
    args = [int(a) for a in m.group(2).split(",") if a.strip()]
    expected = {TDMA: 3, CSMA: 3, CH: 2}[kind]
    if len(args) != expected:
        raise ValueError(f"{kind} takes {expected} parameters, got {text!r}")
    profile = {TDMA: UEProfile.tdma, CSMA: UEProfile.csma, CH: UEProfile.ch}[kind](*args)
    channel = None
    if m.group(3) is not None:
        channel = int(m.group(3)) - 1
        if channel < 0:
            raise ValueError("channels are numbered from 1 in profile syntax")
    if kind != CH and channel is None:
        raise ValueError(f"{kind} profile needs a home channel: {text!r}")
    return profile, channel


def expected_throughput(profile: UEProfile, num_channels: int, home_channel: int | None = None) -> np.ndarray:
    """Long-run channel share of a profile when alone, one entry per channel."""
    out = np.zeros(num_channels)
    if profile.kind == CH:
        out[:] = 1.0 / num_channels
        return out
    if home_channel is None:
        raise ValueError(f"{profile.kind} needs a home channel")
    p = profile.packet_len
    if profile.kind == TDMA:
        out[home_channel] = p / profile.frame
    else:
        out[home_channel] = p / (p + profile.window / 2)
    return out


def agent_expected_throughput(num_channels: int) -> np.ndarray:
    return np.ones(num_channels)


@dataclass
class Packet:
    """One in-flight incumbent packet."""

    start: int
    length: int
    channel: int
    collided: bool = False

    @property
    def end(self) -> int:
        return self.start + self.length - 1


@dataclass
class UEMachine:
    """Protocol state for one incumbent UE.

    The simulator calls :meth:`step` once per slot and :meth:`record` once the
    slot's transmitter counts are known. ``record`` returns the packet if it
    finished in that slot.
    """

    uid: int
    profile: UEProfile
    channel: int
    num_channels: int
    rng: np.random.Generator = field(repr=False)
    counter: int = 0
    window: int = 0
    remaining: int = 0
    packet: Packet | None = None

    def __post_init__(self):
        if self.profile.kind == CSMA:
            self.window = self.profile.window
            self.counter = self._draw(self.window)

    @property
    def type_id(self) -> str:
        return self.profile.type_id

    def _draw(self, window: int) -> int:
        # uniform over {0..window}: mean idle gap of exactly window/2
        return int(self.rng.integers(0, window + 1))

    def step(self, t: int, busy_last: bool) -> int | None:
        """Decide this slot. Returns the channel transmitted on, or None.

        ``busy_last`` is whether anyone else transmitted on the home channel in
        the previous slot; only CSMA looks at it.
        """
        kind = self.profile.kind
        p = self.profile.packet_len
        if self.remaining > 0:
            return self.channel
        if kind == TDMA:
            if (t % self.profile.frame) == self.profile.offset:
                self._begin(t, p)
                return self.channel
            return None
        if kind == CH:
            self._begin(t, p)
            return self.channel
        # CSMA
        if busy_last:
            return None
        if self.counter == 0:
            self._begin(t, p)
            return self.channel
        self.counter -= 1
        return None

    def _begin(self, t, p):
        self.remaining = p
        self.packet = Packet(t, p, self.channel)

    def record(self, count_on_channel: int) -> Packet | None:
        """Account the slot just played; return the packet if it just ended."""
        if self.remaining == 0:
            return None
        if count_on_channel >= 2:
            self.packet.collided = True
        self.remaining -= 1
        if self.remaining > 0:
            return None
        done = self.packet
        self.packet = None
        self.on_packet_end(done.collided)
        return done

    def on_packet_end(self, collided: bool) -> None:
        kind = self.profile.kind
        if kind == CSMA:
            if collided:
                self.window = min(2 * self.window, self.profile.max_window)
            else:
                self.window = self.profile.window
            self.counter = self._draw(self.window)
        elif kind == CH:
            self.channel = (self.channel + self.profile.direction) % self.num_channels


def make_machine(uid, profile, channel, num_channels, rng) -> UEMachine:
    """Build a machine. CH machines start on a uniformly drawn channel when
    ``channel`` is None."""
    if profile.kind == CH and channel is None:
        channel = int(rng.integers(num_channels))
    if channel is None or not 0 <= channel < num_channels:
        raise ValueError(f"bad channel {channel} for {profile}")
    return UEMachine(uid, profile, channel, num_channels, rng)
