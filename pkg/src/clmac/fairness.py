"""Target throughputs by water-filling, windowed throughput ledger, Jain index."""
from __future__ import annotations

import math
from collections.abc import Hashable, Sequence

import numpy as np

GRANULARITY = 0.01
DEFAULT_WINDOW = 1000
_TOL = 1e-12


def _fill_evenly(limits: np.ndarray, budget: float) -> np.ndarray:
    """Split ``budget`` as evenly as possible, never giving anyone more than
    their limit. Used for the last, partial round."""
    out = np.zeros_like(limits)
    order = np.argsort(limits, kind="stable")
    left = budget
    n = len(limits)
    for k, i in enumerate(order):
        share = left / (n - k)
        out[i] = min(limits[i], share)
        left -= out[i]
    return out


def water_fill(expected: Sequence[float], granularity: float = GRANULARITY) -> np.ndarray:
    """Round-robin share of one unit of channel capacity.

    Every pass hands each UE that is still below its cap another
    ``granularity`` (or whatever is left of its cap). The pass that would
    overdraw the channel is split evenly among the UEs still rising, which
    keeps the result independent of input order. Stops once capacity is
    used up or every UE sits at its cap.
    """
    caps = np.asarray(expected, dtype=float)
    if caps.ndim != 1:
        raise ValueError("expected must be a 1-D vector")
    if np.any(caps < 0) or np.any(caps > 1 + _TOL):
        raise ValueError("expected throughputs must lie in [0, 1]")
    x = np.zeros_like(caps)
    left = 1.0
    while left > _TOL:
        room = caps - x
        active = room > _TOL
        if not active.any():
            break
        inc = np.where(active, np.minimum(granularity, room), 0.0)
        total = inc.sum()
        if total > left:
            x[active] += _fill_evenly(inc[active], left)
            break
        x += inc
        left -= total
    return x


def target_throughputs(expected: dict[Hashable, np.ndarray], num_channels: int, order=None) -> dict[Hashable, np.ndarray]:
    """Water-fill every channel independently.

    ``expected`` maps UE id to its per-channel expected-throughput vector.
    UEs with zero expectation on a channel take no part there.
    """
    ids = list(order) if order is not None else list(expected)
    out = {i: np.zeros(num_channels) for i in ids}
    for c in range(num_channels):
        present = [i for i in ids if expected[i][c] > 0]
        if not present:
            continue
        share = water_fill([expected[i][c] for i in present])
        for i, s in zip(present, share):
            out[i][c] = s
    return out


class ThroughputLedger:
    """Sliding-window credited payload per (UE, channel).

    Time is advanced explicitly. A packet is credited when it ends, spread
    uniformly over the slots it occupied, so credits may land in slots that
    are already in the past as long as they are still inside the window.
    """

    def __init__(self, window: int = DEFAULT_WINDOW):
        if window < 1:
            raise ValueError("window must be positive")
        self.window = window
        self.now = 0
        self._rings: dict[Hashable, np.ndarray] = {}
        self._totals: dict[Hashable, float] = {}

    def _ring(self, key):
        ring = self._rings.get(key)
        if ring is None:
            ring = self._rings[key] = np.zeros(self.window)
            self._totals[key] = 0.0
        return ring

    def advance(self, t: int) -> None:
        """Move the window so that its newest slot is ``t``."""
        if t < self.now:
            raise ValueError("ledger time cannot go backwards")
        steps = t - self.now
        h = self.window
        for key, ring in self._rings.items():
            if steps >= h:
                ring[:] = 0.0
                self._totals[key] = 0.0
                continue
            for s in range(self.now + 1, t + 1):
                pos = s % h
                self._totals[key] -= ring[pos]
                ring[pos] = 0.0
        self.now = t

    def credit(self, ue, channel: int, start: int, packet_len: int, header_overhead: float = 0.0) -> float:
        """Credit one successful packet of ``packet_len`` slots starting at
        ``start``. Returns the total payload credited."""
        if packet_len < 1:
            raise ValueError("packet_len must be >= 1")
        end = start + packet_len - 1
        if end > self.now:
            raise ValueError("cannot credit a packet that has not ended yet")
        per_slot = (packet_len - header_overhead) / packet_len
        ring = self._ring((ue, channel))
        oldest = self.now - self.window + 1
        for s in range(max(start, oldest), end + 1):
            ring[s % self.window] += per_slot
            self._totals[(ue, channel)] += per_slot
        return per_slot * packet_len

    def throughput(self, ue, channel: int) -> float:
        total = self._totals.get((ue, channel), 0.0)
        return max(total, 0.0) / self.window

    def throughputs(self, ue, num_channels: int) -> np.ndarray:
        return np.array([self.throughput(ue, c) for c in range(num_channels)])

    def forget(self, ue) -> None:
        for key in [k for k in self._rings if k[0] == ue]:
            del self._rings[key]
            del self._totals[key]


def normalized(x: float, chi: float) -> float:
    """x / chi, with +inf flagging a positive throughput against a zero target."""
    if chi > 0:
        return x / chi
    return 0.0 if x <= 0 else math.inf


def jain_index(ratios: Sequence[float]) -> tuple[float, bool]:
    """Jain fairness of normalized throughputs.

    Returns ``(index, flagged)``; all-zero input is reported as perfectly
    fair with ``flagged=True``.
    """
    rho = np.asarray(ratios, dtype=float)
    if rho.size == 0:
        raise ValueError("need at least one ratio")
    if np.any(rho < 0):
        raise ValueError("ratios must be nonnegative")
    sq = float(np.sum(rho * rho))
    if sq == 0.0:
        return 1.0, True
    return float(rho.sum() ** 2 / (rho.size * sq)), False
