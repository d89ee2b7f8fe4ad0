"""Tabular GAN on encoded rows.

The generator maps Gaussian noise to one encoded row: a tanh scalar per
continuous column's offset and a gumbel-softmax block per one-hot segment.
The discriminator scores encoded rows with a single unbounded logit. Both
train with the non-saturating GAN loss, real labels smoothed to 0.9.

The training step is split into small helpers (draw fakes, update the
discriminator, compute generator feedback, apply it) because one deployment
mode runs the generator on the aggregation server and the discriminators on
clients; reusing these helpers keeps the split run numerically identical to
a local loop with the same streams.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ColumnKind, Table
from .encoders import EncodedLayout, decode_rows
from .nn import (
    AdamState,
    LayerSpec,
    ModelParams,
    NetSpec,
    SegmentSpec,
    Tape,
    adam_step,
    backward,
    forward,
    init_params,
)
from .seeding import derive_seed, derived_rng

SAMPLE_CHUNK = 4096


@dataclass(frozen=True)
class GanConfig:
    noise_dim: int = 128
    gen_hidden: tuple[int, ...] = (256, 256)
    disc_hidden: tuple[int, ...] = (256, 256)
    batch_size: int = 500
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.9
    adam_eps: float = 1e-8
    gumbel_tau: float = 0.2
    label_smoothing: float = 0.9
    seed: int = 0

    def __post_init__(self) -> None:
        if self.noise_dim < 1 or self.batch_size < 1:
            raise ValueError("noise_dim and batch_size must be >= 1")
        if self.lr <= 0 or self.gumbel_tau <= 0:
            raise ValueError("lr and gumbel_tau must be positive")
        if not 0.0 < self.label_smoothing <= 1.0:
            raise ValueError("label_smoothing must be in (0, 1]")


@dataclass
class GanModel:
    gen: ModelParams
    disc: ModelParams
    gen_spec: NetSpec
    disc_spec: NetSpec
    gen_opt: AdamState
    disc_opt: AdamState


@dataclass
class EpochLosses:
    gen: float
    disc: float


def generator_spec(layout: EncodedLayout, cfg: GanConfig) -> NetSpec:
    segments: list[SegmentSpec] = []
    for seg in layout.segments:
        if seg.kind is ColumnKind.CONTINUOUS:
            segments.append(SegmentSpec(1, "tanh"))
            segments.append(SegmentSpec(seg.width - 1, "gumbel"))
        else:
            segments.append(SegmentSpec(seg.width, "gumbel"))
    return NetSpec(
        cfg.noise_dim,
        tuple(LayerSpec(w, "relu") for w in cfg.gen_hidden),
        tuple(segments),
        gumbel_tau=cfg.gumbel_tau,
    )


def discriminator_spec(layout: EncodedLayout, cfg: GanConfig) -> NetSpec:
    return NetSpec(
        layout.width,
        tuple(LayerSpec(w, "leaky_relu") for w in cfg.disc_hidden),
        (SegmentSpec(1, "identity"),),
    )


def build_gan(layout: EncodedLayout, cfg: GanConfig) -> GanModel:
    """Build generator and discriminator for a layout; identical for every
    participant holding the same layout and config."""
    g_spec = generator_spec(layout, cfg)
    d_spec = discriminator_spec(layout, cfg)
    gen = init_params(g_spec, derive_seed(cfg.seed, "init", "gen"))
    disc = init_params(d_spec, derive_seed(cfg.seed, "init", "disc"))
    return GanModel(
        gen,
        disc,
        g_spec,
        d_spec,
        AdamState.zeros(gen.size),
        AdamState.zeros(disc.size),
    )


def _sigmoid(logits: np.ndarray) -> np.ndarray:
    out = np.empty_like(logits)
    pos = logits >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
    e = np.exp(logits[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def draw_generator_batch(
    model: GanModel, cfg: GanConfig, batch_size: int, rng: np.random.Generator
) -> tuple[np.ndarray, Tape]:
    """Sample noise and gumbel perturbations from ``rng``, run the generator."""
    z = rng.standard_normal((batch_size, cfg.noise_dim))
    noise = [
        rng.gumbel(size=(batch_size, seg.width))
        for seg in model.gen_spec.gumbel_segments()
    ]
    return forward(model.gen, model.gen_spec, z, gumbel_noise=noise)


def discriminator_update(
    model: GanModel, real: np.ndarray, fake: np.ndarray, cfg: GanConfig
) -> float:
    """One discriminator Adam step on a real batch vs a fake batch."""
    smooth = cfg.label_smoothing
    logit_r, tape_r = forward(model.disc, model.disc_spec, real)
    logit_f, tape_f = forward(model.disc, model.disc_spec, fake)
    lr_ = logit_r[:, 0]
    lf_ = logit_f[:, 0]
    loss = float(
        (np.logaddexp(0.0, lr_) - smooth * lr_).mean() + np.logaddexp(0.0, lf_).mean()
    )
    up_r = ((_sigmoid(lr_) - smooth) / lr_.size)[:, None]
    up_f = (_sigmoid(lf_) / lf_.size)[:, None]
    grads_r, _ = backward(tape_r, up_r)
    grads_f, _ = backward(tape_f, up_f)
    adam_step(
        model.disc,
        grads_r + grads_f,
        model.disc_opt,
        cfg.lr,
        cfg.beta1,
        cfg.beta2,
        cfg.adam_eps,
    )
    return loss


def generator_feedback(
    model: GanModel, fake: np.ndarray, cfg: GanConfig
) -> tuple[float, np.ndarray]:
    """Generator loss on ``fake`` against the current discriminator, plus the
    loss gradient with respect to the fake batch."""
    logit, tape = forward(model.disc, model.disc_spec, fake)
    lf_ = logit[:, 0]
    loss = float(np.logaddexp(0.0, -lf_).mean())
    upstream = ((_sigmoid(lf_) - 1.0) / lf_.size)[:, None]
    _, d_fake = backward(tape, upstream)
    return loss, d_fake


def apply_generator_feedback(
    model: GanModel, tape: Tape, d_fake: np.ndarray, cfg: GanConfig
) -> None:
    """Backpropagate a fake-batch gradient through the recorded generator tape
    and take one Adam step."""
    grads, _ = backward(tape, d_fake)
    adam_step(
        model.gen, grads, model.gen_opt, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps
    )


def train_local(
    model: GanModel,
    encoded: np.ndarray,
    epochs: int,
    cfg: GanConfig,
    client_id: int = 0,
    epoch_offset: int = 0,
) -> list[EpochLosses]:
    """Train in place for ``epochs`` full passes of full batches.

    Every epoch reshuffles with a stream derived from (seed, client, global
    epoch index), so results do not depend on how epochs are grouped into
    aggregation rounds. Returns per-epoch mean losses.
    """
    n = encoded.shape[0]
    if n < cfg.batch_size:
        raise ValueError(f"shard has {n} rows, batch_size is {cfg.batch_size}")
    n_batches = n // cfg.batch_size
    history: list[EpochLosses] = []
    for e in range(epochs):
        global_epoch = epoch_offset + e
        shuffle_rng = derived_rng(cfg.seed, "shuffle", client_id, global_epoch)
        noise_rng = derived_rng(cfg.seed, "noise", client_id, global_epoch)
        perm = shuffle_rng.permutation(n)
        g_sum = 0.0
        d_sum = 0.0
        for b in range(n_batches):
            real = encoded[perm[b * cfg.batch_size : (b + 1) * cfg.batch_size]]
            fake, tape = draw_generator_batch(model, cfg, cfg.batch_size, noise_rng)
            d_sum += discriminator_update(model, real, fake, cfg)
            g_loss, d_fake = generator_feedback(model, fake, cfg)
            apply_generator_feedback(model, tape, d_fake, cfg)
            g_sum += g_loss
        history.append(EpochLosses(g_sum / n_batches, d_sum / n_batches))
    return history


def sample_synthetic(
    model: GanModel,
    n: int,
    layout: EncodedLayout,
    encoders: dict[str, object],
    cfg: GanConfig,
    seed: int,
) -> Table:
    """Draw n synthetic rows with gumbel noise disabled, then decode."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    blocks: list[np.ndarray] = []
    remaining = n
    while remaining > 0:
        chunk = min(remaining, SAMPLE_CHUNK)
        z = rng.standard_normal((chunk, cfg.noise_dim))
        out, _ = forward(model.gen, model.gen_spec, z, gumbel_noise=None)
        blocks.append(out)
        remaining -= chunk
    return decode_rows(np.concatenate(blocks), layout, encoders)
