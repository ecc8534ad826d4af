"""Dueling Q-network in plain numpy, with exact gradients.

Layout: a tanh trunk over the flattened (observation, action) history, a
second tanh trunk over the per-channel throughput ratios, both concatenated
and fed to a value stream and an advantage stream (two tanh layers each,
linear heads). Q = V + (A - mean A).
"""
from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass

import numpy as np

SNAPSHOT_VERSION = 1
_MAGIC = b"CLMACNET"


@dataclass(frozen=True)
class NetConfig:
    history_dim: int
    ratio_dim: int
    num_actions: int
    trunk_width: int = 64
    ratio_width: int = 64
    stream_widths: tuple[int, ...] = (64, 32)

    @property
    def input_dim(self) -> int:
        return self.history_dim + self.ratio_dim


def _layer_shapes(cfg: NetConfig) -> list[tuple[str, tuple[int, int]]]:
    shapes = [("hist", (cfg.trunk_width, cfg.history_dim)), ("ratio", (cfg.ratio_width, cfg.ratio_dim))]
    for stream, out in (("v", 1), ("a", cfg.num_actions)):
        fan_in = cfg.trunk_width + cfg.ratio_width
        for k, w in enumerate(cfg.stream_widths):
            shapes.append((f"{stream}{k}", (w, fan_in)))
            fan_in = w
        shapes.append((f"{stream}_out", (out, fan_in)))
    return shapes


class ValueNet:
    """Parameters live in ``self.params`` as ``W_<layer>`` / ``b_<layer>``."""

    def __init__(self, config: NetConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params
        self._stream_layers = len(config.stream_widths)

    @classmethod
    def init(cls, config: NetConfig, rng: np.random.Generator) -> "ValueNet":
        params = {}
        for name, (n_out, n_in) in _layer_shapes(config):
            bound = 1.0 / np.sqrt(n_in)
            params[f"W_{name}"] = rng.uniform(-bound, bound, size=(n_out, n_in))
            params[f"b_{name}"] = np.zeros(n_out)
        return cls(config, params)

    @property
    def num_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def clone(self) -> "ValueNet":
        return ValueNet(self.config, {k: v.copy() for k, v in self.params.items()})

    def copy_from(self, other: "ValueNet") -> None:
        for k, v in other.params.items():
            np.copyto(self.params[k], v)

    def _split(self, x):
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.config.input_dim:
            raise ValueError(f"state encoding has width {x.shape[1]}, net expects {self.config.input_dim}")
        return x, squeeze

    def _forward(self, x):
        p = self.params
        hd = self.config.history_dim
        cache = {"x_hist": x[:, :hd], "x_ratio": x[:, hd:]}
        h = np.tanh(cache["x_hist"] @ p["W_hist"].T + p["b_hist"])
        g = np.tanh(cache["x_ratio"] @ p["W_ratio"].T + p["b_ratio"])
        z = np.concatenate([h, g], axis=1)
        cache.update(h=h, g=g, z=z)
        heads = {}
        for s in ("v", "a"):
            act = z
            for k in range(self._stream_layers):
                act = np.tanh(act @ p[f"W_{s}{k}"].T + p[f"b_{s}{k}"])
                cache[f"{s}{k}"] = act
            heads[s] = act @ p[f"W_{s}_out"].T + p[f"b_{s}_out"]
        v = heads["v"]
        a = heads["a"]
        q = v + a - a.mean(axis=1, keepdims=True)
        return q, v[:, 0], a, cache

    def forward(self, x):
        """Q-values, plus V and A for inspection. Accepts one state or a batch."""
        x, squeeze = self._split(x)
        q, v, a, _ = self._forward(x)
        if squeeze:
            return q[0], v[0], a[0]
        return q, v, a

    def q_values(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, x, actions, targets):
        """Gradient of the mean of 0.5 * (target - Q(s, a))**2 over the batch.

        Returns ``(grads, loss)``; only the chosen action's Q enters the loss.
        """
        x, _ = self._split(x)
        actions = np.atleast_1d(np.asarray(actions, dtype=int))
        targets = np.atleast_1d(np.asarray(targets, dtype=float))
        if not np.all(np.isfinite(targets)):
            raise FloatingPointError("non-finite TD target")
        n = x.shape[0]
        p = self.params
        q, _, _, cache = self._forward(x)
        rows = np.arange(n)
        resid = targets - q[rows, actions]
        loss = float(0.5 * np.mean(resid**2))
        dq = np.zeros_like(q)
        dq[rows, actions] = -resid / n
        d_heads = {"v": dq.sum(axis=1, keepdims=True), "a": dq - dq.mean(axis=1, keepdims=True)}
        grads = {}
        dz = np.zeros_like(cache["z"])
        for s in ("v", "a"):
            top = cache[f"{s}{self._stream_layers - 1}"]
            d = d_heads[s]
            grads[f"W_{s}_out"] = d.T @ top
            grads[f"b_{s}_out"] = d.sum(axis=0)
            d = d @ p[f"W_{s}_out"]
            for k in reversed(range(self._stream_layers)):
                act = cache[f"{s}{k}"]
                d = d * (1.0 - act * act)
                below = cache["z"] if k == 0 else cache[f"{s}{k - 1}"]
                grads[f"W_{s}{k}"] = d.T @ below
                grads[f"b_{s}{k}"] = d.sum(axis=0)
                d = d @ p[f"W_{s}{k}"]
            dz += d
        tw = self.config.trunk_width
        for name, act, inp, dpart in (
            ("hist", cache["h"], cache["x_hist"], dz[:, :tw]),
            ("ratio", cache["g"], cache["x_ratio"], dz[:, tw:]),
        ):
            d = dpart * (1.0 - act * act)
            grads[f"W_{name}"] = d.T @ inp
            grads[f"b_{name}"] = d.sum(axis=0)
        for k, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient in layer {k}")
        return grads, loss

    # -- snapshot format: magic, u32 header length, JSON header, raw float64 arrays

    def to_bytes(self) -> bytes:
        names = sorted(self.params)
        header = {
            "version": SNAPSHOT_VERSION,
            "config": asdict(self.config),
            "arrays": [[k, list(self.params[k].shape)] for k in names],
        }
        blob = json.dumps(header, sort_keys=True).encode()
        buf = io.BytesIO()
        buf.write(_MAGIC)
        buf.write(len(blob).to_bytes(4, "little"))
        buf.write(blob)
        for k in names:
            buf.write(np.ascontiguousarray(self.params[k], dtype="<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ValueNet":
        if data[: len(_MAGIC)] != _MAGIC:
            raise ValueError("not a network snapshot")
        off = len(_MAGIC)
        n = int.from_bytes(data[off : off + 4], "little")
        off += 4
        header = json.loads(data[off : off + n])
        off += n
        if header["version"] != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {header['version']}")
        cfg = header["config"]
        cfg["stream_widths"] = tuple(cfg["stream_widths"])
        params = {}
        for name, shape in header["arrays"]:
            size = int(np.prod(shape)) * 8
            if off + size > len(data):
                raise ValueError("truncated network snapshot")
            params[name] = np.frombuffer(data[off : off + size], dtype="<f8").reshape(shape).astype(float)
            off += size
        if off != len(data):
            raise ValueError("trailing bytes in network snapshot")
        return cls(NetConfig(**cfg), params)


def clone_into_target(net: ValueNet) -> ValueNet:
    return net.clone()


@dataclass
class OptimizerState:
    """Gradient descent, optionally Adam-scaled.

    ``clip`` rescales the whole gradient to at most that global norm.
    """

    learning_rate: float = 1e-3
    method: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip: float | None = None
    step: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be nonnegative")
        if self.method not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.method!r}")
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}


def apply_update(net: ValueNet, opt: OptimizerState, grads: dict[str, np.ndarray]) -> None:
    for k, g in grads.items():
        if g.shape != net.params[k].shape:
            raise ValueError(f"gradient shape mismatch for {k}")
    if opt.clip is not None:
        norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        if norm > opt.clip:
            grads = {k: g * (opt.clip / norm) for k, g in grads.items()}
    opt.step += 1
    lr = opt.learning_rate
    if opt.method == "sgd":
        for k, g in grads.items():
            net.params[k] -= lr * g
        return
    b1, b2 = opt.beta1, opt.beta2
    corr1 = 1 - b1**opt.step
    corr2 = 1 - b2**opt.step
    for k, g in grads.items():
        m = opt._m.get(k)
        if m is None:
            m = opt._m[k] = np.zeros_like(g)
            opt._v[k] = np.zeros_like(g)
        v = opt._v[k]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        net.params[k] -= lr * (m / corr1) / (np.sqrt(v / corr2) + opt.eps)
