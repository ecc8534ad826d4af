"""Context identity up to channel relabelling, and the per-context snapshot store.

A context lists, for every channel, the sorted type ids of the incumbents on
it. Two contexts that differ only by renumbering channels share one canonical
form; the permutation that maps environment channels onto canonical ones is
used to move agent states and actions between the two spaces.
"""
from __future__ import annotations

import csv
import math
import os
import zlib
from dataclasses import dataclass, field
from typing import Any, Callable

from .spaces import Action, AgentState

Context = tuple[tuple[str, ...], ...]


@dataclass(frozen=True)
class CanonicalContext:
    channels: Context
    perm: tuple[int, ...]  # perm[env_channel] -> canonical channel

    @property
    def key(self) -> str:
        return "|".join(",".join(ch) if ch else "-" for ch in self.channels)


def make_context(per_channel) -> Context:
    return tuple(tuple(sorted(ch)) for ch in per_channel)


def canonicalize(ctx: Context) -> CanonicalContext:
    """Sort channels by their occupancy signature; ties keep original order."""
    ctx = make_context(ctx)
    order = sorted(range(len(ctx)), key=lambda c: (ctx[c], c))
    perm = [0] * len(ctx)
    for k, c in enumerate(order):
        perm[c] = k
    return CanonicalContext(tuple(ctx[c] for c in order), tuple(perm))


def apply_permutation(ctx: Context, sigma) -> Context:
    """Move channel ``c`` of ``ctx`` to position ``sigma[c]``."""
    out = [()] * len(ctx)
    for c, ch in enumerate(ctx):
        out[sigma[c]] = tuple(ch)
    return tuple(out)


def invert(perm) -> tuple[int, ...]:
    inv = [0] * len(perm)
    for c, k in enumerate(perm):
        inv[k] = c
    return tuple(inv)


def transform_action(a: Action, perm) -> Action:
    return Action(a.packet_len, perm[a.channel])


def detransform_action(a: Action, perm) -> Action:
    return Action(a.packet_len, invert(perm)[a.channel])


def transform_state(s: AgentState, perm) -> AgentState:
    history = tuple((obs, None if act is None else transform_action(act, perm)) for obs, act in s.history)
    ratios = [0.0] * len(s.ratios)
    for c, r in enumerate(s.ratios):
        ratios[perm[c]] = r
    return AgentState(history, tuple(ratios))


def detransform_state(s: AgentState, perm) -> AgentState:
    return transform_state(s, invert(perm))


def context_bound(num_types: int, num_channels: int) -> int:
    """Multisets of ``num_channels`` signatures drawn from ``num_types``."""
    if not isinstance(num_types, int) or not isinstance(num_channels, int):
        raise TypeError("context_bound takes integers")
    if num_types < 1 or num_channels < 1:
        raise ValueError("need at least one type and one channel")
    return math.comb(num_types + num_channels - 1, num_channels)


@dataclass
class Snapshot:
    key: str
    created_slot: int
    payload: Any = field(repr=False)
    visits: int = 0
    decisions_trained: int = 0


class CorruptSnapshotError(RuntimeError):
    pass


class ContextRegistry:
    """Stored learners, keyed by canonical context.

    With ``symmetry_aware=False`` every lookup registers a new entry, which
    is how a learner without memory of past contexts behaves.

    ``spill_dir`` moves inactive payloads to disk; the payload then needs
    ``to_bytes`` and a ``loader`` callable to rebuild it.
    """

    def __init__(self, symmetry_aware: bool = True, spill_dir=None, loader: Callable[[bytes], Any] | None = None):
        self.symmetry_aware = symmetry_aware
        self.spill_dir = spill_dir
        self.loader = loader
        if spill_dir is not None and loader is None:
            raise ValueError("spilling needs a loader")
        self.entries: dict[str, Snapshot] = {}
        self.active: Snapshot | None = None
        self._announcements = 0

    def __len__(self):
        return len(self.entries)

    def _spill(self, snap: Snapshot):
        if self.spill_dir is None:
            return
        os.makedirs(self.spill_dir, exist_ok=True)
        with open(self._path(snap.key), "wb") as fh:
            fh.write(snap.payload.to_bytes())
        snap.payload = None

    def _path(self, key):
        safe = "".join(ch if ch.isalnum() else "_" for ch in key)
        return os.path.join(self.spill_dir, f"{safe[:80]}-{zlib.crc32(key.encode()):08x}.bin")

    def _restore(self, snap: Snapshot):
        if snap.payload is not None:
            return
        try:
            with open(self._path(snap.key), "rb") as fh:
                snap.payload = self.loader(fh.read())
        except Exception as exc:  # noqa: BLE001 - any failure means the store is unusable
            raise CorruptSnapshotError(f"cannot restore snapshot {snap.key!r}") from exc

    def lookup_or_create(self, ctx: Context, slot: int, factory: Callable[[], Any]):
        """Park the active entry and activate the one for ``ctx``.

        Returns ``(snapshot, perm, created)``.
        """
        self._announcements += 1
        if self.active is not None:
            self._spill(self.active)
        canon = canonicalize(ctx)
        perm = canon.perm
        # both modes learn in canonical space; only reuse differs
        key = canon.key if self.symmetry_aware else f"#{self._announcements}:{canon.key}"
        snap = self.entries.get(key)
        created = snap is None
        if created:
            snap = Snapshot(key, slot, factory())
            self.entries[key] = snap
        else:
            self._restore(snap)
        snap.visits += 1
        self.active = snap
        return snap, perm, created

    def dump_rows(self):
        return [
            {"key": s.key, "visits": s.visits, "decisions_trained": s.decisions_trained, "created_slot": s.created_slot}
            for s in self.entries.values()
        ]

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["key", "visits", "decisions_trained", "created_slot"])
            w.writeheader()
            w.writerows(self.dump_rows())
