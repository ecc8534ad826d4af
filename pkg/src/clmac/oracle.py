"""Offline ground truth for small instances with fully known incumbents.

A schedule is the agent's per-slot, per-channel packet-start lengths ``r``
plus the support arrays derived from it: ``z`` (slots left in the current
packet), ``m`` (agent transmits) and ``d`` (agent is free to decide).
The fair-share check uses raw packet slots, without header deduction.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import yaml

from .fairness import target_throughputs
from .incumbents import CH, CSMA, agent_expected_throughput, expected_throughput, make_machine, parse_profile

CONSTRAINTS = ("coupling", "no-overlap", "single-channel", "incumbent-free", "fair-share")
SEARCH_LIMIT = 2_000_000
_TOL = 1e-9


class ScheduleViolation(ValueError):
    def __init__(self, constraint, slot, channel, detail=""):
        self.constraint = constraint
        self.slot = slot
        self.channel = channel
        super().__init__(f"{constraint} violated at slot {slot}, channel {channel + 1}{': ' + detail if detail else ''}")


class SearchTooLarge(RuntimeError):
    def __init__(self, estimate, limit):
        self.estimate = estimate
        super().__init__(f"oracle search needs ~{estimate:,} states, limit is {limit:,}")


@dataclass
class Schedule:
    r: np.ndarray
    z: np.ndarray
    m: np.ndarray
    d: np.ndarray

    @property
    def horizon(self):
        return self.r.shape[0]

    @property
    def num_channels(self):
        return self.r.shape[1]


def derive_support(r, max_packet_len: int | None = None) -> Schedule:
    """Fill in z, m and d for a packet-start schedule of shape (T, C).

    Raises ScheduleViolation("no-overlap", ...) when a packet starts while
    another one is still in flight.
    """
    r = np.asarray(r, dtype=int)
    if r.ndim == 1:
        r = r[:, None]
    T, C = r.shape
    if np.any(r < 0) or (max_packet_len is not None and np.any(r > max_packet_len)):
        raise ValueError("packet lengths out of range")
    z = np.zeros_like(r)
    d = np.zeros_like(r)
    busy_until = -1
    for t in range(T):
        starts = np.nonzero(r[t])[0]
        if t > busy_until:
            d[t, :] = 1
            for c in starts:
                busy_until = max(busy_until, t + r[t, c] - 1)
        elif len(starts):
            raise ScheduleViolation("no-overlap", t, int(starts[0]), "packet started mid-transmission")
        for c in range(C):
            if r[t, c] > 0:
                z[t, c] = r[t, c]
            elif t > 0:
                z[t, c] = max(z[t - 1, c] - 1, 0)
    return Schedule(r, z, (z > 0).astype(int), d)


@dataclass
class ConstraintReport:
    results: dict = field(default_factory=dict)  # name -> None or (slot, channel)

    @property
    def ok(self) -> bool:
        return all(v is None for v in self.results.values())

    def first_violation(self, name):
        return self.results.get(name)

    def __str__(self):
        lines = []
        for name in CONSTRAINTS:
            v = self.results.get(name)
            lines.append(f"{name:15s} {'pass' if v is None else f'FAIL at slot {v[0]}, channel {v[1] + 1}'}")
        return "\n".join(lines)


def windowed_throughput(m: np.ndarray, window: int) -> np.ndarray:
    """x[t, c] = (1/window) * transmitted slots in (t - window, t]."""
    cs = np.cumsum(np.vstack([np.zeros((1, m.shape[1])), m]), axis=0)
    T = m.shape[0]
    x = np.zeros(m.shape, dtype=float)
    for t in range(T):
        lo = max(0, t - window + 1)
        x[t] = (cs[t + 1] - cs[lo]) / window
    return x


def _first(mask):
    idx = np.argwhere(mask)
    return None if len(idx) == 0 else (int(idx[0][0]), int(idx[0][1]))


def check_constraints(schedule: Schedule, incumbent_busy, targets, window: int) -> ConstraintReport:
    """Check a schedule against every coupling and physical constraint.

    ``incumbent_busy`` is a (T, C) boolean array of slots where any incumbent
    transmits; ``targets`` the agent's fair share per channel. The fair-share
    test applies from the first full window (slot ``window - 1``) onward.
    """
    r, z, m, d = schedule.r, schedule.z, schedule.m, schedule.d
    T, C = r.shape
    busy = np.asarray(incumbent_busy, dtype=bool).reshape(T, C)
    chi = np.asarray(targets, dtype=float)
    rep = ConstraintReport()

    bad = (m != (z > 0)) | ((d == 1) & (r != z)) | ((d == 0) & (r != 0))
    prev = np.vstack([np.zeros((1, C), dtype=int), z[:-1]])
    bad |= (m == 1) & (d == 0) & (z != prev - 1)
    rep.results["coupling"] = _first(bad)

    overlap = np.zeros_like(bad)
    for t, c in np.argwhere(r > 0):
        k = r[t, c]
        if d[t + 1 : t + k, c].sum() > 0:
            overlap[t, c] = True
    rep.results["no-overlap"] = _first(overlap)

    multi = np.zeros_like(bad)
    multi[:, 0] = m.sum(axis=1) > 1
    rep.results["single-channel"] = _first(multi)

    rep.results["incumbent-free"] = _first((m == 1) & busy)

    x = windowed_throughput(m, window)
    over = x > chi[None, :] + _TOL
    over[: window - 1] = False
    rep.results["fair-share"] = _first(over)
    return rep


def objective(schedule: Schedule, window: int) -> float:
    """Sum over evaluated slots and channels of the windowed throughput."""
    x = windowed_throughput(schedule.m, window)
    return float(x[window - 1 :].sum())


@dataclass
class OracleResult:
    objective: float
    schedule: Schedule
    states_explored: int


def search_estimate(T, C, window, max_packet_len) -> int:
    return T * (C + 1) ** max(window - 1, 0)


def brute_force_optimum(incumbent_busy, targets, window: int, max_packet_len: int, limit: int = SEARCH_LIMIT) -> OracleResult:
    """Exact maximum of the windowed-throughput objective.

    Depth-first over decision points with memoisation on (slot, recent
    transmissions); packets must end inside the horizon.
    """
    busy = np.asarray(incumbent_busy, dtype=bool)
    if busy.ndim == 1:
        busy = busy[:, None]
    T, C = busy.shape
    chi = np.asarray(targets, dtype=float)
    est = search_estimate(T, C, window, max_packet_len)
    if est > limit:
        raise SearchTooLarge(est, limit)
    h = window
    tail = h - 1

    def play(t, recent, c):
        """Play slot t with the agent on channel c (-1: silent). Returns
        (gain, new_recent) or None if the fair share is exceeded."""
        seq = recent + (c,)
        gain = 0.0
        if t >= h - 1:
            for ch in range(C):
                x = seq[-h:].count(ch) / h
                if x > chi[ch] + _TOL:
                    return None
                gain += x
        return gain, (seq[-tail:] if tail else ())

    @lru_cache(maxsize=None)
    def best(t, recent):
        if t >= T:
            return 0.0, None
        played = play(t, recent, -1)
        top_val = -math.inf if played is None else played[0] + best(t + 1, played[1])[0]
        top = (0, 0)
        for r in range(1, max_packet_len + 1):
            if t + r > T:
                break
            for c in range(C):
                if busy[t : t + r, c].any():
                    continue
                acc = 0.0
                rec = recent
                ok = True
                for s in range(t, t + r):
                    step = play(s, rec, c)
                    if step is None:
                        ok = False
                        break
                    acc += step[0]
                    rec = step[1]
                if not ok:
                    continue
                val = acc + best(t + r, rec)[0]
                if val > top_val + _TOL:
                    top_val, top = val, (r, c)
        return top_val, top

    init = tuple([-1] * tail)
    value, _ = best(0, init)
    r_sched = np.zeros((T, C), dtype=int)
    t, recent = 0, init
    while t < T:
        _, (r, c) = best(t, recent)
        if r == 0:
            recent = play(t, recent, -1)[1]
            t += 1
            continue
        r_sched[t, c] = r
        for s in range(t, t + r):
            recent = play(s, recent, c)[1]
        t += r
    explored = best.cache_info().currsize
    best.cache_clear()
    return OracleResult(value, derive_support(r_sched), explored)


@dataclass
class OracleInstance:
    num_channels: int
    horizon: int
    max_packet_len: int
    window: int
    incumbents: list
    targets: np.ndarray
    busy: np.ndarray


def incumbent_trace(placements, num_channels, horizon, seed=0) -> np.ndarray:
    """(T, C) busy mask from simulating deterministic incumbents."""
    rng = np.random.default_rng(seed)
    busy = np.zeros((horizon, num_channels), dtype=bool)
    machines = []
    for uid, (profile, channel) in enumerate(placements, start=1):
        if profile.kind == CSMA:
            raise ValueError("CSMA incumbents are random; the oracle needs deterministic schedules")
        if profile.kind == CH and channel is None:
            raise ValueError("CH incumbents need a fixed starting channel in oracle instances")
        machines.append(make_machine(uid, profile, channel, num_channels, rng))
    for t in range(horizon):
        for m in machines:
            c = m.step(t, False)
            if c is not None:
                busy[t, c] = True
                m.record(1)
    return busy


def load_instance(path) -> OracleInstance:
    with open(path) as fh:
        spec = yaml.safe_load(fh)
    if spec.get("version", 1) != 1:
        raise ValueError(f"unsupported instance version {spec.get('version')}")
    C = int(spec["num_channels"])
    T = int(spec["horizon"])
    placements = [parse_profile(s) for s in spec.get("incumbents", [])]
    busy = incumbent_trace(placements, C, T)
    exp = {0: agent_expected_throughput(C)}
    for uid, (p, ch) in enumerate(placements, start=1):
        exp[uid] = expected_throughput(p, C, ch)
    chi = target_throughputs(exp, C, order=sorted(exp))[0]
    for ch, val in (spec.get("targets") or {}).items():
        chi[int(ch) - 1] = float(val)
    return OracleInstance(C, T, int(spec.get("max_packet_len", 3)), int(spec["window"]), placements, chi, busy)


def write_schedule_csv(schedule: Schedule, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slot", "channel", "r", "z", "m", "d"])
        for t in range(schedule.horizon):
            for c in range(schedule.num_channels):
                w.writerow([t, c + 1, schedule.r[t, c], schedule.z[t, c], schedule.m[t, c], schedule.d[t, c]])
