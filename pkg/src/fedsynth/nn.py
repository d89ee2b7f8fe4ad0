"""Minimal dense-network core: float64 forward, reverse-mode backward, Adam.

Parameters live in one flat vector with a (name, shape, offset) manifest so
they can be averaged, serialized and diffed without knowing the architecture.
Only fully connected stacks are supported; the output layer is split into
segments with per-segment activations so a generator can emit bounded
scalars next to soft one-hot blocks.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HIDDEN_ACTIVATIONS = ("relu", "leaky_relu", "tanh")
OUTPUT_ACTIVATIONS = ("identity", "tanh", "softmax", "gumbel")
LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class LayerSpec:
    width: int
    activation: str

    def __post_init__(self) -> None:
        if self.width < 1:
            raise ValueError("layer width must be >= 1")
        if self.activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.activation!r}")


@dataclass(frozen=True)
class SegmentSpec:
    width: int
    activation: str

    def __post_init__(self) -> None:
        if self.width < 1:
            raise ValueError("segment width must be >= 1")
        if self.activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.activation!r}")


@dataclass(frozen=True)
class NetSpec:
    input_width: int
    hidden: tuple[LayerSpec, ...]
    outputs: tuple[SegmentSpec, ...]
    gumbel_tau: float = 0.2
    # noisy gumbel segments emit the argmax one-hot while the backward pass
    # differentiates the soft sample; off, they emit the soft sample itself
    straight_through: bool = True

    def __post_init__(self) -> None:
        if self.input_width < 1:
            raise ValueError("input width must be >= 1")
        if not self.outputs:
            raise ValueError("at least one output segment required")
        if self.gumbel_tau <= 0:
            raise ValueError("gumbel_tau must be positive")

    @property
    def output_width(self) -> int:
        return sum(seg.width for seg in self.outputs)

    def layer_dims(self) -> list[tuple[int, int]]:
        widths = [self.input_width] + [h.width for h in self.hidden] + [self.output_width]
        return list(zip(widths[:-1], widths[1:]))

    def gumbel_segments(self) -> list[SegmentSpec]:
        return [seg for seg in self.outputs if seg.activation == "gumbel"]


@dataclass
class ModelParams:
    """Flat float64 parameter vector plus its layout manifest."""

    flat: np.ndarray
    manifest: tuple[tuple[str, tuple[int, ...], int], ...]

    def view(self, name: str) -> np.ndarray:
        for entry_name, shape, offset in self.manifest:
            if entry_name == name:
                size = int(np.prod(shape))
                return self.flat[offset : offset + size].reshape(shape)
        raise KeyError(name)

    def copy(self) -> "ModelParams":
        return ModelParams(self.flat.copy(), self.manifest)

    @property
    def size(self) -> int:
        return self.flat.size


def init_params(spec: NetSpec, seed: int) -> ModelParams:
    """Xavier-uniform weights, zero biases; deterministic for a fixed seed."""
    rng = np.random.default_rng(seed)
    chunks: list[np.ndarray] = []
    manifest: list[tuple[str, tuple[int, ...], int]] = []
    offset = 0
    for i, (fan_in, fan_out) in enumerate(spec.layer_dims()):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        b = np.zeros(fan_out)
        for name, arr in ((f"w{i}", w), (f"b{i}", b)):
            manifest.append((name, arr.shape, offset))
            chunks.append(arr.ravel())
            offset += arr.size
    return ModelParams(np.concatenate(chunks), tuple(manifest))


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax."""
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def gumbel_softmax(
    logits: np.ndarray,
    tau: float,
    rng: np.random.Generator | None = None,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """softmax((logits + g) / tau) with g ~ Gumbel(0, 1).

    Pass ``noise`` to reuse fixed draws; with neither ``rng`` nor ``noise``
    the noise is disabled and the result is softmax(logits / tau).
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if noise is None and rng is not None:
        noise = rng.gumbel(size=logits.shape)
    if noise is not None:
        if noise.shape != logits.shape:
            raise ValueError("noise shape must match logits")
        logits = logits + noise
    return softmax(logits / tau)


@dataclass
class Tape:
    """Intermediates recorded by forward, consumed once by backward."""

    spec: NetSpec
    params: ModelParams
    inputs: list[np.ndarray] = field(default_factory=list)  # per layer
    pre_acts: list[np.ndarray] = field(default_factory=list)  # hidden z
    segment_outputs: list[np.ndarray] = field(default_factory=list)

    @property
    def batch_size(self) -> int:
        return self.inputs[0].shape[0]


def forward(
    params: ModelParams,
    spec: NetSpec,
    batch: np.ndarray,
    gumbel_noise: list[np.ndarray] | None = None,
) -> tuple[np.ndarray, Tape]:
    """Run the network; returns output and the tape for backward.

    ``gumbel_noise`` supplies one pre-drawn array per gumbel segment (training
    mode); None disables the noise (evaluation mode).
    """
    if batch.ndim != 2 or batch.shape[1] != spec.input_width:
        raise ValueError(f"expected batch with {spec.input_width} columns")
    n_gumbel = len(spec.gumbel_segments())
    if gumbel_noise is not None and len(gumbel_noise) != n_gumbel:
        raise ValueError(f"expected {n_gumbel} gumbel noise arrays")

    tape = Tape(spec, params)
    x = batch
    for i, layer in enumerate(spec.hidden):
        tape.inputs.append(x)
        z = x @ params.view(f"w{i}") + params.view(f"b{i}")
        tape.pre_acts.append(z)
        if layer.activation == "relu":
            x = np.maximum(z, 0.0)
        elif layer.activation == "leaky_relu":
            x = np.where(z > 0.0, z, LEAKY_SLOPE * z)
        else:
            x = np.tanh(z)

    last = len(spec.hidden)
    tape.inputs.append(x)
    z_out = x @ params.view(f"w{last}") + params.view(f"b{last}")

    out = np.empty_like(z_out)
    offset = 0
    g_idx = 0
    for seg in spec.outputs:
        z_seg = z_out[:, offset : offset + seg.width]
        emitted = None
        if seg.activation == "identity":
            y = z_seg
        elif seg.activation == "tanh":
            y = np.tanh(z_seg)
        elif seg.activation == "softmax":
            y = softmax(z_seg)
        else:  # gumbel
            noise = gumbel_noise[g_idx] if gumbel_noise is not None else None
            y = gumbel_softmax(z_seg, spec.gumbel_tau, noise=noise)
            if noise is not None and spec.straight_through:
                # hard sample downstream, soft jacobian on the tape
                emitted = np.zeros_like(y)
                emitted[np.arange(y.shape[0]), y.argmax(axis=-1)] = 1.0
            g_idx += 1
        out[:, offset : offset + seg.width] = y if emitted is None else emitted
        tape.segment_outputs.append(y)
        offset += seg.width
    return out, tape


def _softmax_backward(upstream: np.ndarray, y: np.ndarray) -> np.ndarray:
    inner = (upstream * y).sum(axis=-1, keepdims=True)
    return y * (upstream - inner)


def backward(tape: Tape, upstream: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Accumulate gradients; returns (flat parameter gradient, input gradient)."""
    spec, params = tape.spec, tape.params
    if upstream.shape != (tape.batch_size, spec.output_width):
        raise ValueError("upstream gradient shape mismatch")

    grads = np.zeros_like(params.flat)
    gparams = ModelParams(grads, params.manifest)

    dz_out = np.empty_like(upstream)
    offset = 0
    for seg, y in zip(spec.outputs, tape.segment_outputs):
        u = upstream[:, offset : offset + seg.width]
        if seg.activation == "identity":
            d = u
        elif seg.activation == "tanh":
            d = u * (1.0 - y * y)
        elif seg.activation == "softmax":
            d = _softmax_backward(u, y)
        else:  # gumbel: y = softmax((z + g) / tau)
            d = _softmax_backward(u, y) / spec.gumbel_tau
        dz_out[:, offset : offset + seg.width] = d
        offset += seg.width

    last = len(spec.hidden)
    dz = dz_out
    for i in range(last, -1, -1):
        x = tape.inputs[i]
        gparams.view(f"w{i}")[...] = x.T @ dz
        gparams.view(f"b{i}")[...] = dz.sum(axis=0)
        dx = dz @ params.view(f"w{i}").T
        if i == 0:
            return grads, dx
        z = tape.pre_acts[i - 1]
        act = spec.hidden[i - 1].activation
        if act == "relu":
            dz = dx * (z > 0.0)
        elif act == "leaky_relu":
            dz = dx * np.where(z > 0.0, 1.0, LEAKY_SLOPE)
        else:
            a = np.tanh(z)
            dz = dx * (1.0 - a * a)
    raise AssertionError("unreachable")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size))


def adam_step(
    params: ModelParams,
    grads: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.5,
    beta2: float = 0.9,
    eps: float = 1e-8,
) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update, in place on params and state."""
    if grads.shape != params.flat.shape:
        raise ValueError("gradient shape mismatch")
    state.t += 1
    state.m *= beta1
    state.m += (1.0 - beta1) * grads
    state.v *= beta2
    state.v += (1.0 - beta2) * grads * grads
    m_hat = state.m / (1.0 - beta1**state.t)
    v_hat = state.v / (1.0 - beta2**state.t)
    params.flat -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state
