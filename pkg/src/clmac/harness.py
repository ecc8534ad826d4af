"""Experiment orchestration: scenario files, the run loop, metrics and CSVs."""
from __future__ import annotations

import csv
import logging
import math
import os
import re
from collections import deque
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction

import numpy as np
import yaml

from .agent import D3QLAgent, Hyperparams, RandomAgent, compute_reward
from .fairness import jain_index
from .incumbents import CH, UEProfile, parse_profile
from .sim import AGENT_ID, ContextChange, Observation, Placement, SimConfig, Simulation, merge_changes, resolve_agent_packet, sense

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
AGENT_KINDS = ("cl-d3ql", "d3ql", "random")
FAIRNESS_SLACK = 1.1


class ScenarioError(ValueError):
    """Raised for invalid scenario files, before any simulation work."""


@dataclass(frozen=True)
class Period:
    start: int
    end: int
    placements: tuple[tuple[UEProfile, int | None], ...]


@dataclass
class ScenarioSpec:
    """A fixed timeline of periods, or a stochastic arrival/departure process.

    For stochastic scenarios ``beta`` is the mean dwell time; with
    ``beta_units == "horizon"`` it is a fraction of the horizon, otherwise a
    number of slots. ``beta = inf`` keeps the initial occupants forever.
    """

    kind: str
    num_channels: int
    horizon: int
    name: str = "scenario"
    periods: tuple[Period, ...] = ()
    beta: float = math.inf
    beta_units: str = "horizon"
    pool: tuple[UEProfile, ...] = ()
    initial: tuple[UEProfile, ...] = ()
    max_packet_len: int = 5
    header_overhead: float = 0.5
    window: int = 1000
    metric_stride: int = 100
    seeds: tuple[int, ...] = (0,)
    hyper: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.kind not in ("fixed", "stochastic"):
            raise ScenarioError(f"unknown scenario kind {self.kind!r}")
        if self.num_channels < 1 or self.horizon < 1:
            raise ScenarioError("num_channels and horizon must be positive")
        if self.metric_stride < 1 or self.window < 1:
            raise ScenarioError("window and metric_stride must be positive")
        if self.kind == "fixed":
            if not self.periods:
                raise ScenarioError("a fixed scenario needs at least one period")
            expect = 0
            for p in self.periods:
                if p.start != expect or p.end <= p.start:
                    raise ScenarioError(f"periods must partition [0, {self.horizon}]; problem at [{p.start}, {p.end}]")
                for prof, ch in p.placements:
                    if ch is not None and ch >= self.num_channels:
                        raise ScenarioError(f"{prof} placed on channel {ch + 1} of {self.num_channels}")
                expect = p.end
            if expect != self.horizon:
                raise ScenarioError(f"periods end at {expect}, horizon is {self.horizon}")
        else:
            if not self.pool:
                raise ScenarioError("the profile pool must not be empty")
            if not self.beta > 0:
                raise ScenarioError("beta must be > 0")
            if self.beta_units not in ("horizon", "slots"):
                raise ScenarioError("beta_units must be 'horizon' or 'slots'")
            if self.initial and len(self.initial) != self.num_channels:
                raise ScenarioError("initial needs one profile per channel")
        known = {f.name for f in fields(Hyperparams)}
        unknown = set(self.hyper) - known
        if unknown:
            raise ScenarioError(f"unknown agent settings: {sorted(unknown)}")

    @property
    def mean_dwell(self) -> float:
        return self.beta * self.horizon if self.beta_units == "horizon" else self.beta

    def sim_config(self, seed: int) -> SimConfig:
        return SimConfig(self.num_channels, self.horizon, self.max_packet_len, self.header_overhead, self.window, seed)

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(**{"max_packet_len": self.max_packet_len, **self.hyper})

    def period_bounds(self) -> list[tuple[int, int]]:
        """Periods of a fixed scenario, quarters of the horizon otherwise."""
        if self.kind == "fixed":
            return [(p.start, p.end) for p in self.periods]
        q = [round(self.horizon * k / 4) for k in range(5)]
        return list(zip(q[:-1], q[1:]))


_BOUND_RE = re.compile(r"^\s*(\d+)?\s*\*?\s*T\s*(?:/\s*(\d+))?\s*$")


def parse_bound(value, horizon: int) -> int:
    """Accept an integer or an expression like ``T``, ``T/4`` or ``3T/4``."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return int(value)
    m = _BOUND_RE.match(str(value))
    if m is None:
        raise ScenarioError(f"cannot parse interval bound {value!r}")
    num = int(m.group(1) or 1)
    den = int(m.group(2) or 1)
    frac = Fraction(num * horizon, den)
    if frac.denominator != 1:
        raise ScenarioError(f"bound {value!r} is not a whole slot for T={horizon}")
    return int(frac)


def _parse_profiles(items, what):
    try:
        return tuple(parse_profile(s) for s in items or ())
    except ValueError as exc:
        raise ScenarioError(f"{what}: {exc}") from exc


def spec_from_dict(data: dict) -> ScenarioSpec:
    if not isinstance(data, dict):
        raise ScenarioError("scenario file must be a mapping")
    version = data.get("version")
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported scenario version {version!r} (expected {SCHEMA_VERSION})")
    try:
        C = int(data["num_channels"])
        T = int(data["horizon"])
        kind = data["kind"]
    except KeyError as exc:
        raise ScenarioError(f"missing key {exc}") from exc
    common = dict(
        kind=kind,
        num_channels=C,
        horizon=T,
        name=str(data.get("name", "scenario")),
        max_packet_len=int(data.get("max_packet_len", 5)),
        header_overhead=float(data.get("header_overhead", 0.5)),
        window=int(data.get("window", 1000)),
        metric_stride=int(data.get("metric_stride", 100)),
        seeds=tuple(int(s) for s in data.get("seeds", [0])),
        hyper=dict(data.get("agent") or {}),
    )
    if kind == "fixed":
        periods = []
        for k, p in enumerate(data.get("periods") or []):
            lo, hi = (parse_bound(b, T) for b in p["interval"])
            periods.append(Period(lo, hi, _parse_profiles(p.get("incumbents"), f"period {k + 1}")))
        return ScenarioSpec(periods=tuple(periods), **common)
    if kind == "stochastic":
        pool = tuple(prof for prof, _ in _parse_profiles([_with_channel(s) for s in data.get("pool") or []], "pool"))
        initial = tuple(prof for prof, _ in _parse_profiles([_with_channel(s) for s in data.get("initial") or []], "initial"))
        return ScenarioSpec(
            pool=pool,
            initial=initial,
            beta=_beta(data.get("beta", math.inf)),
            beta_units=str(data.get("beta_units", "horizon")),
            **common,
        )
    raise ScenarioError(f"unknown scenario kind {kind!r}")


def _beta(value) -> float:
    # accept YAML's ".inf" spelling even when it arrives as a string
    if isinstance(value, str) and value.strip().lower() in (".inf", "inf", "infinity"):
        return math.inf
    try:
        return float(value)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"beta must be a number, got {value!r}") from exc


def _with_channel(text: str) -> str:
    # pool entries carry no channel; give TDMA/CSMA a placeholder so the
    # shared profile parser accepts them
    return text if "@" in text or text.strip().upper().startswith("CH") else f"{text}@1"


def load_scenario(path) -> ScenarioSpec:
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ScenarioError(f"{path}: {exc}") from exc
    return spec_from_dict(data)


def fixed_timeline(spec: ScenarioSpec) -> list[ContextChange]:
    """Change events between periods. A UE whose (profile, channel) persists
    into the next period keeps its uid and its protocol state."""
    changes = []
    live: list[tuple[int, UEProfile, int | None]] = []
    next_uid = 1
    for p in spec.periods:
        wanted = list(p.placements)
        keep, departures = [], []
        for uid, prof, ch in live:
            if (prof, ch) in wanted:
                wanted.remove((prof, ch))
                keep.append((uid, prof, ch))
            else:
                departures.append(uid)
        arrivals = []
        for prof, ch in wanted:
            arrivals.append(Placement(next_uid, prof, ch))
            keep.append((next_uid, prof, ch))
            next_uid += 1
        live = keep
        changes.append(ContextChange(p.start, tuple(departures), tuple(arrivals)))
    return merge_changes(changes)


def sample_stochastic_timeline(beta: float, pool, num_channels: int, horizon: int, rng: np.random.Generator, initial=None, beta_units: str = "horizon") -> list[ContextChange]:
    """One occupant per channel; each stays an exponentially distributed
    number of slots (at least one) and is replaced on the same channel by a
    profile drawn uniformly from ``pool``."""
    if not beta > 0:
        raise ValueError("beta must be > 0")
    pool = list(pool)
    if not pool:
        raise ValueError("profile pool is empty")
    mean = beta * horizon if beta_units == "horizon" else beta
    events: list[ContextChange] = []
    next_uid = 1

    def draw():
        return pool[int(rng.integers(len(pool)))]

    for c in range(num_channels):
        prof = initial[c] if initial else draw()
        uid, next_uid = next_uid, next_uid + 1
        events.append(ContextChange(0, (), (Placement(uid, prof, None if prof.kind == CH else c),)))
        t = 0
        while math.isfinite(mean):
            t += max(1, int(round(rng.exponential(mean))))
            if t >= horizon:
                break
            prof = draw()
            new, next_uid = next_uid, next_uid + 1
            events.append(ContextChange(t, (uid,), (Placement(new, prof, None if prof.kind == CH else c),)))
            uid = new
    return merge_changes(events)


def build_timeline(spec: ScenarioSpec, rng: np.random.Generator) -> list[ContextChange]:
    if spec.kind == "fixed":
        return fixed_timeline(spec)
    return sample_stochastic_timeline(spec.beta, spec.pool, spec.num_channels, spec.horizon, rng, spec.initial or None, spec.beta_units)


def make_agent(kind: str, num_channels: int, hyper: Hyperparams, rng: np.random.Generator, registry=None):
    if kind == "random":
        return RandomAgent(num_channels, hyper, rng)
    if kind in ("cl-d3ql", "d3ql"):
        return D3QLAgent(num_channels, hyper, rng, symmetry_aware=(kind == "cl-d3ql"), registry=registry)
    raise ScenarioError(f"unknown agent kind {kind!r}; choose from {', '.join(AGENT_KINDS)}")


TRAINING_FIELDS = ["decision_step", "slot", "epsilon", "action_r", "action_c", "reward", "td_loss"]
WINDOW_FIELDS = ["slot", "warmup", "normalized_throughput", "collision_rate", "jain", "jain_flagged", "max_channel_ratio", "over_target", "epsilon", "contexts"]


@dataclass
class RunMetrics:
    agent: str
    seed: int
    horizon: int
    window: int
    windows: list[dict]
    channel_ratios: np.ndarray  # (n_windows, C) agent x_c / chi_c
    registry: list[dict]
    actions: list[tuple[int, int, int]]  # (slot, packet_len, channel) per decision
    training: list[dict]  # one row per completed decision
    announcements: int
    incumbent_packets: int
    incumbent_collisions: int

    def column(self, name) -> np.ndarray:
        return np.array([w[name] for w in self.windows], dtype=float)

    def evaluated(self) -> list[dict]:
        return [w for w in self.windows if not w["warmup"]]

    def period_mean(self, start: int, end: int, metric: str = "normalized_throughput") -> float:
        """Mean over windows lying entirely inside [start, end)."""
        vals = [w[metric] for w in self.windows if w["slot"] - self.window + 1 >= start and w["slot"] < end and not w["warmup"]]
        return float(np.mean(vals)) if vals else float("nan")

    def fairness_violation_fraction(self, slack: float = FAIRNESS_SLACK) -> float:
        ev = [w for w in self.windows if not w["warmup"]]
        if not ev:
            return float("nan")
        return sum(w["max_channel_ratio"] > slack for w in ev) / len(ev)

    @property
    def num_contexts(self) -> int:
        return len(self.registry)


def run_scenario(spec: ScenarioSpec, agent_kind: str, seed: int, trace_path=None, timeline=None, hyper: Hyperparams | None = None) -> RunMetrics:
    """Simulate one (scenario, agent, seed) run and collect windowed metrics.

    The run seed spawns three independent streams: timeline sampling,
    incumbents, and agent, so every agent kind faces the same incumbents.
    """
    if agent_kind not in AGENT_KINDS:
        raise ScenarioError(f"unknown agent kind {agent_kind!r}; choose from {', '.join(AGENT_KINDS)}")
    cfg = spec.sim_config(seed)
    hyper = hyper or spec.hyperparams()
    if hyper.max_packet_len != spec.max_packet_len:
        raise ScenarioError("agent max_packet_len must match the scenario")
    tl_ss, env_ss, agent_ss = np.random.SeedSequence(seed).spawn(3)
    if timeline is None:
        timeline = build_timeline(spec, np.random.default_rng(tl_ss))
    sim = Simulation(cfg, timeline, np.random.default_rng(env_ss), trace_path=trace_path)
    agent = make_agent(agent_kind, cfg.num_channels, hyper, np.random.default_rng(agent_ss))
    C, T, h = cfg.num_channels, cfg.horizon, cfg.window

    windows: list[dict] = []
    ch_ratios: list[np.ndarray] = []
    actions: list[tuple[int, int, int]] = []
    training: list[dict] = []
    observations: deque = deque()  # (end_slot, collided)
    n_collisions = 0
    announcements = 0
    flight = None  # (start, action, outcomes)
    try:
        for t in range(T):
            ann = sim.begin_slot()
            if ann is not None:
                announcements += 1
                agent.announce(ann)
            if flight is None:
                action = agent.decide(t, sim.agent_ratios())
                actions.append((t, action.packet_len, action.channel))
                if training:
                    # the previous transition was stored (and maybe trained on) just now
                    loss = getattr(agent, "last_loss", None)
                    training[-1]["td_loss"] = "" if loss is None else loss
                epsilon = agent.epsilon
                flight = (t, action, [])
            start, action, outs = flight
            outcome = sim.advance_slot(None if action.is_sense else action.channel)
            outs.append(outcome)
            if len(outs) == action.slots:
                c = action.channel
                if action.is_sense:
                    obs = sense(outcome, c)
                else:
                    obs = resolve_agent_packet(start, action.packet_len, c, outs)
                    if obs == Observation.SUCCESS:
                        sim.credit_agent(start, action.packet_len, c)
                x = sim.ledger.throughput(AGENT_ID, c)
                chi = float(sim.targets[AGENT_ID][c])
                reward = compute_reward(obs, action.packet_len, x, chi, hyper.penalty, hyper.sense_bonus)
                agent.complete(obs, reward)
                training.append({
                    "decision_step": len(actions), "slot": start, "epsilon": epsilon,
                    "action_r": action.packet_len, "action_c": c + 1, "reward": reward, "td_loss": "",
                })
                collided = obs == Observation.COLLISION
                observations.append((t, collided))
                n_collisions += collided
                flight = None
            while observations and observations[0][0] <= t - h:
                n_collisions -= observations.popleft()[1]
            if (t + 1) % spec.metric_stride == 0:
                ratios = sim.agent_ratios()
                rho = [sim.normalized_throughput(uid) for uid in [AGENT_ID, *sorted(sim.machines)]]
                jain, flagged = jain_index(rho)
                registry = getattr(agent, "registry", None)
                windows.append({
                    "slot": t,
                    "warmup": t + 1 < h,
                    "normalized_throughput": sim.normalized_throughput(AGENT_ID),
                    "collision_rate": n_collisions / len(observations) if observations else 0.0,
                    "jain": jain,
                    "jain_flagged": flagged,
                    "max_channel_ratio": float(np.max(ratios)),
                    "over_target": bool(np.max(ratios) > FAIRNESS_SLACK),
                    "epsilon": agent.epsilon,
                    "contexts": len(registry) if registry is not None else 0,
                })
                ch_ratios.append(ratios)
    finally:
        sim.close()
    reg = agent.registry.dump_rows() if getattr(agent, "registry", None) is not None else []
    return RunMetrics(
        agent_kind, seed, T, h, windows, np.array(ch_ratios).reshape(-1, C), reg, actions, training,
        announcements, sim.incumbent_packets, sim.incumbent_collisions,
    )


SUMMARY_METRICS = ("normalized_throughput", "collision_rate", "jain")


@dataclass
class Aggregate:
    slots: np.ndarray
    warmup: np.ndarray
    mean: dict
    std: dict
    periods: list[dict]


def aggregate(runs: list[RunMetrics], bounds=None) -> Aggregate:
    """Pointwise mean and population standard deviation across runs."""
    if not runs:
        raise ValueError("aggregate needs at least one run")
    slots = np.array([w["slot"] for w in runs[0].windows])
    for r in runs[1:]:
        other = np.array([w["slot"] for w in r.windows])
        if other.shape != slots.shape or np.any(other != slots):
            raise ValueError("runs have mismatched metric windows")
    mean, std = {}, {}
    for m in SUMMARY_METRICS:
        mat = np.vstack([r.column(m) for r in runs])
        mean[m] = mat.mean(axis=0)
        std[m] = mat.std(axis=0)
    periods = []
    for k, (lo, hi) in enumerate(bounds or []):
        row = {"period": k + 1, "start": lo, "end": hi}
        for m in SUMMARY_METRICS:
            vals = np.array([r.period_mean(lo, hi, m) for r in runs])
            row[f"{m}_mean"] = float(np.mean(vals))
            row[f"{m}_std"] = float(np.std(vals))
        periods.append(row)
    return Aggregate(slots, np.array([w["warmup"] for w in runs[0].windows]), mean, std, periods)


def write_windows_csv(run: RunMetrics, path) -> None:
    C = run.channel_ratios.shape[1] if run.channel_ratios.ndim == 2 else 0
    extra = [f"ratio_ch{c + 1}" for c in range(C)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(WINDOW_FIELDS + extra)
        for row, ratios in zip(run.windows, run.channel_ratios):
            w.writerow([row[k] for k in WINDOW_FIELDS] + [f"{r:.6g}" for r in ratios])


def write_training_csv(run: RunMetrics, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRAINING_FIELDS)
        w.writeheader()
        w.writerows(run.training)


def write_registry_csv(run: RunMetrics, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["key", "visits", "decisions_trained", "created_slot"])
        w.writeheader()
        w.writerows(run.registry)


def write_summary_csv(agg: Aggregate, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slot", "warmup"] + [f"{m}_{s}" for m in SUMMARY_METRICS for s in ("mean", "std")])
        for i, slot in enumerate(agg.slots):
            w.writerow([int(slot), bool(agg.warmup[i])] + [f"{d[m][i]:.6g}" for m in SUMMARY_METRICS for d in (agg.mean, agg.std)])


def write_periods_csv(agg: Aggregate, path) -> None:
    if not agg.periods:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(agg.periods[0]))
        w.writeheader()
        w.writerows(agg.periods)


def run_many(spec: ScenarioSpec, agent_kind: str, seeds, out_dir, slot_trace: bool = True) -> tuple[list[RunMetrics], Aggregate]:
    """Run every seed, write per-run CSVs and the aggregate summary."""
    os.makedirs(out_dir, exist_ok=True)
    runs = []
    for seed in seeds:
        stem = os.path.join(out_dir, f"{spec.name}_{agent_kind}_seed{seed}")
        log.info("running %s with %s, seed %d", spec.name, agent_kind, seed)
        run = run_scenario(spec, agent_kind, seed, trace_path=f"{stem}_slots.csv" if slot_trace else None)
        write_windows_csv(run, f"{stem}_windows.csv")
        if agent_kind != "random":
            write_registry_csv(run, f"{stem}_registry.csv")
            write_training_csv(run, f"{stem}_training.csv")
        runs.append(run)
    agg = aggregate(runs, spec.period_bounds())
    write_summary_csv(agg, os.path.join(out_dir, f"{spec.name}_{agent_kind}_summary.csv"))
    write_periods_csv(agg, os.path.join(out_dir, f"{spec.name}_{agent_kind}_periods.csv"))
    return runs, agg


def with_overrides(spec: ScenarioSpec, **changes) -> ScenarioSpec:
    return replace(spec, **changes)
