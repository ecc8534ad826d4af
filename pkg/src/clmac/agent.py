"""Double dueling Q-learning agent with a packet-length-aware TD target."""
from __future__ import annotations

import io
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .approximator import NetConfig, OptimizerState, ValueNet, apply_update
from .continual import ContextRegistry, detransform_action, transform_action, transform_state
from .sim import Observation
from .spaces import Action, AgentState

NUM_OBS = len(Observation)
RATIO_CLIP = 2.0


@dataclass
class Hyperparams:
    gamma: float = 0.9
    batch_size: int = 32
    memory_capacity: int = 1000
    train_every: int = 10
    target_sync_every: int = 50
    eps_start: float = 1.0
    eps_floor: float = 0.005
    eps_decay: float = 0.999
    penalty: float = 5.0
    sense_bonus: float = 0.1
    max_packet_len: int = 5
    history_len: int = 4
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    grad_clip: float | None = None
    trunk_width: int = 64
    ratio_width: int = 64
    stream_widths: tuple[int, ...] = (64, 32)

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must be in (0, 1)")
        if not 0 < self.eps_floor < 1:
            raise ValueError("eps_floor must be in (0, 1)")
        self.stream_widths = tuple(self.stream_widths)

    def net_config(self, num_channels: int) -> NetConfig:
        return NetConfig(
            history_dim=self.history_len * (NUM_OBS + self.max_packet_len + 1 + num_channels),
            ratio_dim=num_channels,
            num_actions=(self.max_packet_len + 1) * num_channels,
            trunk_width=self.trunk_width,
            ratio_width=self.ratio_width,
            stream_widths=self.stream_widths,
        )


def encoding_width(history_len: int, max_packet_len: int, num_channels: int) -> int:
    return history_len * (NUM_OBS + max_packet_len + 1 + num_channels) + num_channels


def encode_state(s: AgentState, max_packet_len: int, num_channels: int) -> np.ndarray:
    """One-hot history entries (observation, length, channel), then clipped ratios."""
    block = NUM_OBS + max_packet_len + 1 + num_channels
    out = np.zeros(len(s.history) * block + num_channels)
    for k, (obs, act) in enumerate(s.history):
        base = k * block
        if obs is not None:
            out[base + int(obs)] = 1.0
        if act is not None:
            out[base + NUM_OBS + act.packet_len] = 1.0
            out[base + NUM_OBS + max_packet_len + 1 + act.channel] = 1.0
    ratios = np.nan_to_num(np.asarray(s.ratios, dtype=float), nan=0.0, posinf=RATIO_CLIP)
    out[-num_channels:] = np.clip(ratios, 0.0, RATIO_CLIP)
    return out


def compute_reward(outcome: Observation, packet_len: int, x: float, chi: float, penalty: float = 5.0, sense_bonus: float = 0.1) -> float:
    """Length reward for success, negative length for collision, small bonus
    for sensing; transmissions pay ``penalty`` per unit of throughput above
    target on the channel used."""
    if outcome in (Observation.BUSY, Observation.IDLE):
        return sense_bonus
    over = max(x - chi, 0.0)
    if outcome == Observation.SUCCESS:
        return packet_len - penalty * over
    return -packet_len - penalty * over


def target_coefficient(packet_len, gamma):
    """(1 - gamma**r) / ((1 - gamma) r); sensing counts as r = 1."""
    r = np.maximum(np.asarray(packet_len, dtype=float), 1.0)
    return (1.0 - gamma**r) / ((1.0 - gamma) * r)


def td_targets(rewards, packet_lens, next_states, online: ValueNet, target: ValueNet, gamma: float) -> np.ndarray:
    """Batch targets: the online net picks the next action, the target net scores it."""
    r = np.maximum(np.asarray(packet_lens, dtype=float), 1.0)
    next_states = np.atleast_2d(next_states)
    chosen = np.argmax(online.q_values(next_states), axis=1)
    q_next = target.q_values(next_states)[np.arange(len(chosen)), chosen]
    return target_coefficient(r, gamma) * np.asarray(rewards, dtype=float) + gamma**r * q_next


@dataclass(frozen=True)
class Transition:
    state: AgentState
    action: Action
    reward: float
    next_state: AgentState
    packet_len: int


def td_target(t: Transition, online: ValueNet, target: ValueNet, gamma: float, max_packet_len: int, num_channels: int) -> float:
    s_next = encode_state(t.next_state, max_packet_len, num_channels)
    return float(td_targets([t.reward], [t.packet_len], s_next, online, target, gamma)[0])


class ReplayMemory:
    """FIFO ring of encoded transitions."""

    def __init__(self, capacity: int, width: int):
        self.capacity = capacity
        self.width = width
        self.states = np.zeros((capacity, width))
        self.next_states = np.zeros((capacity, width))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.lens = np.zeros(capacity, dtype=np.int64)
        self.size = 0
        self.pos = 0

    def __len__(self):
        return self.size

    def push(self, state_vec, action_index, reward, next_state_vec, packet_len):
        i = self.pos
        self.states[i] = state_vec
        self.next_states[i] = next_state_vec
        self.actions[i] = action_index
        self.rewards[i] = reward
        self.lens[i] = packet_len
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, n: int):
        idx = rng.choice(self.size, size=n, replace=False)
        return self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx], self.lens[idx]

    def arrays(self):
        return {
            "states": self.states,
            "next_states": self.next_states,
            "actions": self.actions,
            "rewards": self.rewards,
            "lens": self.lens,
            "meta": np.array([self.capacity, self.width, self.size, self.pos], dtype=np.int64),
        }

    @classmethod
    def from_arrays(cls, arrs):
        cap, width, size, pos = (int(v) for v in arrs["meta"])
        mem = cls(cap, width)
        for k in ("states", "next_states", "actions", "rewards", "lens"):
            np.copyto(getattr(mem, k), arrs[k])
        mem.size, mem.pos = size, pos
        return mem


@dataclass
class Learner:
    """Everything that is stored per context: both nets, optimizer, memory."""

    online: ValueNet
    target: ValueNet
    optimizer: OptimizerState
    memory: ReplayMemory

    @classmethod
    def fresh(cls, hyper: Hyperparams, num_channels: int, rng: np.random.Generator) -> "Learner":
        cfg = hyper.net_config(num_channels)
        online = ValueNet.init(cfg, rng)
        opt = OptimizerState(hyper.learning_rate, hyper.optimizer, clip=hyper.grad_clip)
        return cls(online, online.clone(), opt, ReplayMemory(hyper.memory_capacity, cfg.input_dim))

    def to_bytes(self) -> bytes:
        arrs = {f"mem_{k}": v for k, v in self.memory.arrays().items()}
        arrs["online"] = np.frombuffer(self.online.to_bytes(), dtype=np.uint8)
        arrs["target"] = np.frombuffer(self.target.to_bytes(), dtype=np.uint8)
        o = self.optimizer
        arrs["opt"] = np.array([o.learning_rate, o.beta1, o.beta2, o.eps, -1.0 if o.clip is None else o.clip, o.step])
        arrs["opt_method"] = np.frombuffer(o.method.encode(), dtype=np.uint8)
        for k in o._m:
            arrs[f"adam_m_{k}"] = o._m[k]
            arrs[f"adam_v_{k}"] = o._v[k]
        buf = io.BytesIO()
        np.savez(buf, **arrs)
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Learner":
        with np.load(io.BytesIO(data)) as z:
            arrs = {k: z[k] for k in z.files}
        online = ValueNet.from_bytes(arrs["online"].tobytes())
        target = ValueNet.from_bytes(arrs["target"].tobytes())
        lr, b1, b2, eps, clip, step = arrs["opt"]
        opt = OptimizerState(float(lr), arrs["opt_method"].tobytes().decode(), float(b1), float(b2), float(eps), None if clip < 0 else float(clip), int(step))
        for k in online.params:
            if f"adam_m_{k}" in arrs:
                opt._m[k] = arrs[f"adam_m_{k}"].copy()
                opt._v[k] = arrs[f"adam_v_{k}"].copy()
        mem = ReplayMemory.from_arrays({k[4:]: v for k, v in arrs.items() if k.startswith("mem_")})
        return cls(online, target, opt, mem)


def training_step(learner: Learner, hyper: Hyperparams, rng: np.random.Generator) -> float | None:
    """One averaged-gradient update from a uniform batch; None if memory is short."""
    if len(learner.memory) < hyper.batch_size:
        return None
    s, a, rew, s_next, lens = learner.memory.sample(rng, hyper.batch_size)
    y = td_targets(rew, lens, s_next, learner.online, learner.target, hyper.gamma)
    grads, loss = learner.online.backward(s, a, y)
    apply_update(learner.online, learner.optimizer, grads)
    return loss


def decay_epsilon(eps: float, decay: float, floor: float) -> float:
    return max(eps * decay, floor)


def select_action(state: AgentState, net: ValueNet, eps: float, perm, rng: np.random.Generator, max_packet_len: int, num_channels: int):
    """Epsilon-greedy choice. Returns ``(env_action, canonical_action)``.

    The greedy branch evaluates Q in canonical space and maps the channel
    back; ties go to the lowest action index.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must be in [0, 1]")
    n_actions = (max_packet_len + 1) * num_channels
    if rng.random() < eps:
        env = Action.from_index(int(rng.integers(n_actions)), num_channels)
        return env, transform_action(env, perm)
    canon_state = transform_state(state, perm)
    q = net.q_values(encode_state(canon_state, max_packet_len, num_channels))
    canon = Action.from_index(int(np.argmax(q)), num_channels)
    return detransform_action(canon, perm), canon


class RandomAgent:
    """Uniform action over every (length, channel) pair."""

    kind = "random"

    def __init__(self, num_channels: int, hyper: Hyperparams, rng: np.random.Generator):
        self.C = num_channels
        self.hyper = hyper
        self.rng = rng
        self.decision_step = 0
        self.epsilon = 1.0
        self.registry = None

    def announce(self, ann):
        pass

    def decide(self, slot, ratios) -> Action:
        self.decision_step += 1
        n = (self.hyper.max_packet_len + 1) * self.C
        return Action.from_index(int(self.rng.integers(n)), self.C)

    def complete(self, obs, reward):
        return None


@dataclass
class _Pending:
    state: AgentState
    env_action: Action
    canon_action: Action
    learner: Learner
    perm: tuple
    snapshot: object
    obs: Observation | None = None
    reward: float | None = None


class D3QLAgent:
    """Learning agent driven by the harness one decision point at a time.

    With ``symmetry_aware=True`` contexts that are channel relabellings of
    each other share one stored learner; otherwise every announcement starts
    a fresh one.
    """

    def __init__(self, num_channels: int, hyper: Hyperparams, rng: np.random.Generator, symmetry_aware: bool = True, registry: ContextRegistry | None = None):
        self.C = num_channels
        self.hyper = hyper
        self.rng = rng
        self.kind = "cl-d3ql" if symmetry_aware else "d3ql"
        self.registry = registry or ContextRegistry(symmetry_aware=symmetry_aware)
        self.epsilon = hyper.eps_start
        self.decision_step = 0
        self.learner: Learner | None = None
        self.snapshot = None
        self.perm = tuple(range(num_channels))
        self.state: AgentState | None = None
        self._pending: _Pending | None = None
        self._announcement = None
        self.last_loss: float | None = None
        self.trace: list | None = None

    def announce(self, ann) -> None:
        """Load (or create) the learner for the announced context right away.

        A transmission still in flight is credited to the learner that chose
        it; the history restarts at the next decision point.
        """
        snap, perm, _ = self.registry.lookup_or_create(
            ann.context, ann.time, lambda: Learner.fresh(self.hyper, self.C, self.rng)
        )
        self.snapshot = snap
        self.learner = snap.payload
        self.perm = perm
        self._announcement = ann

    def _finish_pending(self, ratios):
        p = self._pending
        self._pending = None
        if p is None or p.obs is None:
            return
        h = self.hyper
        next_state = p.state.push(p.obs, p.env_action, ratios)
        self.state = next_state
        s_vec = encode_state(transform_state(p.state, p.perm), h.max_packet_len, self.C)
        n_vec = encode_state(transform_state(next_state, p.perm), h.max_packet_len, self.C)
        p.learner.memory.push(s_vec, p.canon_action.index(self.C), p.reward, n_vec, p.canon_action.slots)
        self.decision_step += 1
        loss = None
        if self.decision_step % h.train_every == 0:
            loss = training_step(p.learner, h, self.rng)
            if loss is not None:
                p.snapshot.decisions_trained += 1
        if self.decision_step % h.target_sync_every == 0:
            p.learner.target.copy_from(p.learner.online)
        self.last_loss = loss
        self.epsilon = decay_epsilon(self.epsilon, h.eps_decay, h.eps_floor)

    def decide(self, slot: int, ratios) -> Action:
        self._finish_pending(ratios)
        if self.learner is None:
            raise RuntimeError("agent has no context yet")
        if self._announcement is not None:
            self._announcement = None
            self.state = AgentState.initial(self.hyper.history_len, ratios)
        else:
            # ratios are refreshed at every decision point
            self.state = AgentState(self.state.history, tuple(float(r) for r in ratios))
        env, canon = select_action(self.state, self.learner.online, self.epsilon, self.perm, self.rng, self.hyper.max_packet_len, self.C)
        self._pending = _Pending(self.state, env, canon, self.learner, self.perm, self.snapshot)
        return env

    def complete(self, obs: Observation, reward: float) -> None:
        if self._pending is not None:
            self._pending.obs = obs
            self._pending.reward = reward
