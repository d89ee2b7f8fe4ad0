"""Round engine: the federator control loop and the client worker.

One federator drives P clients over message channels. Initialization
collects per-column statistics, builds the shared encoders and aggregation
weights, and distributes the encoder bundle; every training round then
either averages locally trained parameters (weighted by similarity or
uniformly) or, in the split mode, keeps the single generator on the
federator and trains one discriminator per client from fake batches.

All computation is driven by derived RNG streams keyed on (seed, purpose,
client, epoch), so a run is reproducible bit for bit regardless of thread
scheduling or the order in which client replies arrive: the federator always
reads replies per client id, never first-come-first-served.

Timing written to the metrics log is a deterministic cost model (a constant
per optimizer step plus bytes over a nominal link rate), which keeps runs
with identical configuration byte-identical; real elapsed time is a property
of the host, not of the experiment.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..data import ColumnKind, ColumnMeta, Table
from ..encoders import (
    CategoricalStats,
    GmmParams,
    LabelEncoder,
    aggregate_categorical,
    aggregate_gmm,
    build_layout,
    encode_table,
    local_categorical_stats,
)
from ..gan import (
    GanConfig,
    GanModel,
    apply_generator_feedback,
    build_gan,
    discriminator_update,
    draw_generator_batch,
    generator_feedback,
    train_local,
)
from ..nn import ModelParams
from ..seeding import derive_seed, derived_rng
from ..similarity import FUSIONS, client_weights, divergence_matrix, uniform_weights
from . import messages as msg
from .transport import ChannelClosed, MessageEndpoint, ProtocolError

logger = logging.getLogger(__name__)

MODES = ("fed", "vanilla", "centralized", "md")

# Deterministic cost model for the metrics wall clock.
STEP_SECONDS = 2e-3  # one discriminator+generator step pair
BYTES_PER_SECOND = 1.25e8  # nominal 1 Gbit/s link


@dataclass(frozen=True)
class FederationConfig:
    gan: GanConfig = field(default_factory=GanConfig)
    mode: str = "fed"
    local_epochs: int = 1
    swap_interval: int = 1
    weight_fusion: str = "multiplicative"
    wd_sample_n: int = 10_000
    max_modes: int = 10

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be >= 1")
        if self.swap_interval < 0:
            raise ValueError("swap_interval must be >= 0 (0 disables swapping)")
        if self.weight_fusion not in FUSIONS:
            raise ValueError(
                f"unknown weight_fusion {self.weight_fusion!r}, expected one of {FUSIONS}"
            )
        if self.max_modes < 1:
            raise ValueError("max_modes must be >= 1")

    @property
    def seed(self) -> int:
        return self.gan.seed


@dataclass
class RoundRecord:
    round: int
    duration_s: float
    bytes_sent: int
    bytes_received: int
    gen_losses: dict[int, float]
    disc_losses: dict[int, float]

    @property
    def mean_gen_loss(self) -> float | None:
        values = [v for v in self.gen_losses.values() if v is not None]
        return float(np.mean(values)) if values else None

    @property
    def mean_disc_loss(self) -> float | None:
        values = [v for v in self.disc_losses.values() if v is not None]
        return float(np.mean(values)) if values else None

    def to_json_dict(self) -> dict:
        return {
            "round": self.round,
            "duration_s": self.duration_s,
            "bytes_sent": self.bytes_sent,
            "bytes_received": self.bytes_received,
            "gen_losses": {str(k): v for k, v in self.gen_losses.items()},
            "disc_losses": {str(k): v for k, v in self.disc_losses.items()},
        }


def local_column_stats(
    shard: Table, cfg: FederationConfig, client_id: int
) -> tuple[tuple[str, ColumnKind, CategoricalStats | GmmParams], ...]:
    """Everything a client reveals about its shard: counts and mixtures."""
    columns: list[tuple[str, ColumnKind, CategoricalStats | GmmParams]] = []
    for meta in shard.schema:
        if meta.kind is ColumnKind.CATEGORICAL:
            columns.append((meta.name, meta.kind, local_categorical_stats(shard, meta.name)))
        else:
            gmm = _fit_column_gmm(shard.column(meta.name), cfg, client_id, meta.name)
            columns.append((meta.name, meta.kind, gmm))
    return tuple(columns)


def _fit_column_gmm(values, cfg: FederationConfig, client_id: int, name: str) -> GmmParams:
    from ..encoders import fit_gmm

    return fit_gmm(
        values, max_modes=cfg.max_modes, seed=derive_seed(cfg.seed, "gmm", client_id, name)
    )


def aggregate_encoders(
    schema_cols: list[tuple[str, ColumnKind]],
    per_client: list[dict[str, CategoricalStats | GmmParams]],
    row_counts: list[int],
    cfg: FederationConfig,
) -> tuple[dict[str, LabelEncoder | GmmParams], dict[str, CategoricalStats | GmmParams]]:
    """Merge client statistics into shared encoders plus global statistics."""
    encoders: dict[str, LabelEncoder | GmmParams] = {}
    global_stats: dict[str, CategoricalStats | GmmParams] = {}
    for name, kind in schema_cols:
        if kind is ColumnKind.CATEGORICAL:
            stats = [c[name] for c in per_client]
            encoder, merged = aggregate_categorical(stats)  # type: ignore[arg-type]
            encoders[name] = encoder
            global_stats[name] = merged
        else:
            locals_ = [(c[name], n) for c, n in zip(per_client, row_counts)]
            merged_gmm = aggregate_gmm(
                locals_,  # type: ignore[arg-type]
                max_modes=cfg.max_modes,
                seed=derive_seed(cfg.seed, "gmm-agg", name),
            )
            encoders[name] = merged_gmm
            global_stats[name] = merged_gmm
    return encoders, global_stats


def _schema_from_cols(schema_cols: list[tuple[str, ColumnKind]]) -> tuple[ColumnMeta, ...]:
    return tuple(ColumnMeta(name, kind, i) for i, (name, kind) in enumerate(schema_cols))


class ClientWorker:
    """Client half of the protocol; owns one shard and its local model."""

    def __init__(self, client_id: int, shard: Table, cfg: FederationConfig):
        if shard.n_rows < 1:
            raise ValueError(f"client {client_id}: empty shard")
        self.client_id = client_id
        self.shard = shard
        self.cfg = cfg
        self.model: GanModel | None = None
        self.encoders: dict | None = None
        self.layout = None
        self.encoded: np.ndarray | None = None
        self._epochs_done = 0
        self._md_epoch: int | None = None
        self._md_perm: np.ndarray | None = None
        self._md_ptr = 0

    def run(self, channel) -> None:
        """Serve the protocol until the federator closes the channel."""
        endpoint = channel if isinstance(channel, MessageEndpoint) else MessageEndpoint(channel)
        try:
            stats = local_column_stats(self.shard, self.cfg, self.client_id)
            endpoint.send(
                msg.StatsReport(0, self.client_id, self.shard.n_rows, stats)
            )
            while True:
                try:
                    incoming = endpoint.recv()
                except ChannelClosed:
                    return
                self._dispatch(endpoint, incoming)
        finally:
            endpoint.close()

    def _dispatch(self, endpoint: MessageEndpoint, incoming: msg.Message) -> None:
        if isinstance(incoming, msg.EncoderBundle):
            self._on_encoders(endpoint, incoming)
        elif isinstance(incoming, msg.TrainRequest):
            self._on_train(endpoint, incoming)
        elif isinstance(incoming, msg.ModelBroadcast):
            self._on_broadcast(endpoint, incoming)
        elif isinstance(incoming, msg.FakeBatch):
            self._on_fake_batch(endpoint, incoming)
        elif isinstance(incoming, msg.SwapOrder):
            self._on_swap(endpoint, incoming)
        else:
            raise ProtocolError(
                f"client {self.client_id}: unexpected {type(incoming).__name__}"
            )

    def _on_encoders(self, endpoint: MessageEndpoint, bundle: msg.EncoderBundle) -> None:
        names = [name for name, _, _ in bundle.encoders]
        if names != [m.name for m in self.shard.schema]:
            raise ProtocolError(f"client {self.client_id}: encoder bundle names {names} do not match shard")
        encoders = {name: enc for name, _, enc in bundle.encoders}
        layout = build_layout(self.shard.schema, encoders)
        if layout.width != bundle.encoded_width:
            raise ProtocolError(
                f"client {self.client_id}: layout width {layout.width} != announced {bundle.encoded_width}"
            )
        self.encoders = encoders
        self.layout = layout
        self.encoded = encode_table(self.shard, layout, encoders)
        self.model = build_gan(layout, self.cfg.gan)
        endpoint.send(msg.Ack(bundle.round, self.client_id))

    def _on_train(self, endpoint: MessageEndpoint, request: msg.TrainRequest) -> None:
        assert self.model is not None and self.encoded is not None
        history = train_local(
            self.model,
            self.encoded,
            request.epochs,
            self.cfg.gan,
            client_id=self.client_id,
            epoch_offset=self._epochs_done,
        )
        self._epochs_done += request.epochs
        endpoint.send(
            msg.ModelUpload(
                request.round,
                self.client_id,
                self.model.gen,
                self.model.disc,
                float(np.mean([h.gen for h in history])),
                float(np.mean([h.disc for h in history])),
            )
        )

    def _on_broadcast(self, endpoint: MessageEndpoint, broadcast: msg.ModelBroadcast) -> None:
        assert self.model is not None
        if broadcast.gen is not None:
            self._install(self.model.gen, broadcast.gen, "generator")
        if broadcast.disc is not None:
            self._install(self.model.disc, broadcast.disc, "discriminator")
        endpoint.send(msg.Ack(broadcast.round, self.client_id))

    def _install(self, target: ModelParams, incoming: ModelParams, what: str) -> None:
        if incoming.manifest != target.manifest:
            raise ProtocolError(f"client {self.client_id}: {what} manifest mismatch")
        target.flat[:] = incoming.flat

    def _on_fake_batch(self, endpoint: MessageEndpoint, batch: msg.FakeBatch) -> None:
        assert self.model is not None and self.encoded is not None
        cfg = self.cfg.gan
        if batch.epoch != self._md_epoch:
            shuffle_rng = derived_rng(cfg.seed, "shuffle", self.client_id, batch.epoch)
            self._md_perm = shuffle_rng.permutation(self.encoded.shape[0])
            self._md_ptr = 0
            self._md_epoch = batch.epoch
        assert self._md_perm is not None
        start = self._md_ptr * cfg.batch_size
        if start + cfg.batch_size > self.encoded.shape[0]:
            raise ProtocolError(f"client {self.client_id}: out of real batches in epoch {batch.epoch}")
        real = self.encoded[self._md_perm[start : start + cfg.batch_size]]
        self._md_ptr += 1
        disc_loss = discriminator_update(self.model, real, batch.rows, cfg)
        gen_loss, d_fake = generator_feedback(self.model, batch.rows, cfg)
        endpoint.send(
            msg.DiscFeedback(batch.round, self.client_id, d_fake, gen_loss, disc_loss)
        )

    def _on_swap(self, endpoint: MessageEndpoint, order: msg.SwapOrder) -> None:
        assert self.model is not None
        endpoint.send(
            msg.ModelUpload(order.round, self.client_id, None, self.model.disc, 0.0, 0.0)
        )


def run_client(client_id: int, shard: Table, cfg: FederationConfig, channel) -> None:
    """Convenience wrapper for running a worker on a raw byte channel."""
    ClientWorker(client_id, shard, cfg).run(channel)


class Federator:
    """Federator half of the protocol, one endpoint per client."""

    def __init__(self, channels: list, cfg: FederationConfig):
        if cfg.mode == "centralized":
            raise ValueError("centralized mode does not use a federator")
        if not channels:
            raise ValueError("at least one client channel required")
        self.cfg = cfg
        self._endpoints = [
            ch if isinstance(ch, MessageEndpoint) else MessageEndpoint(ch) for ch in channels
        ]
        self.client_count = len(self._endpoints)
        self.round = 0
        self.clock_s = 0.0
        self.records: list[RoundRecord] = []
        self.weights: np.ndarray | None = None
        self.weight_trace = None
        self.divergence = None
        self.model: GanModel | None = None
        self.layout = None
        self.encoders: dict | None = None
        self.row_counts: list[int] | None = None

    # -------------------------------------------------------------- plumbing

    @property
    def bytes_sent(self) -> int:
        return sum(ep.bytes_sent for ep in self._endpoints)

    @property
    def bytes_received(self) -> int:
        return sum(ep.bytes_received for ep in self._endpoints)

    def message_counts(self) -> dict[str, int]:
        totals: dict[str, int] = {}
        for ep in self._endpoints:
            for name, count in (ep.sent_by_tag + ep.received_by_tag).items():
                totals[name] = totals.get(name, 0) + count
        return totals

    def _recv_expected(self, endpoint: MessageEndpoint, expected_type, round_: int, client_id: int):
        try:
            incoming = endpoint.recv()
        except ChannelClosed as exc:
            raise ProtocolError(f"client {client_id} disconnected mid-round") from exc
        if not isinstance(incoming, expected_type):
            raise ProtocolError(
                f"client {client_id}: expected {expected_type.__name__}, got {type(incoming).__name__}"
            )
        if incoming.round != round_:
            raise ProtocolError(
                f"client {client_id}: round {incoming.round} out of order, expected {round_}"
            )
        reported = getattr(incoming, "client_id", client_id)
        if reported != client_id:
            raise ProtocolError(f"channel for client {client_id} spoke as client {reported}")
        return incoming

    def _broadcast(self, message: msg.Message) -> None:
        for ep in self._endpoints:
            ep.send(message)

    def _collect(self, expected_type, round_: int) -> list:
        return [
            self._recv_expected(ep, expected_type, round_, cid)
            for cid, ep in enumerate(self._endpoints)
        ]

    # ------------------------------------------------------------------ init

    def initialize(self) -> None:
        """Stats collection, encoder construction, weighting, distribution."""
        cfg = self.cfg
        reports_raw = []
        for ep in self._endpoints:
            try:
                incoming = ep.recv()
            except ChannelClosed as exc:
                raise ProtocolError("client disconnected before reporting stats") from exc
            if not isinstance(incoming, msg.StatsReport):
                raise ProtocolError(f"expected StatsReport, got {type(incoming).__name__}")
            reports_raw.append((incoming, ep))

        ids = sorted(report.client_id for report, _ in reports_raw)
        if ids != list(range(self.client_count)):
            raise ProtocolError(f"client ids {ids} are not 0..{self.client_count - 1}")
        by_id = {report.client_id: (report, ep) for report, ep in reports_raw}
        self._endpoints = [by_id[cid][1] for cid in range(self.client_count)]
        reports = [by_id[cid][0] for cid in range(self.client_count)]

        schema_cols = [(name, kind) for name, kind, _ in reports[0].columns]
        for report in reports[1:]:
            other = [(name, kind) for name, kind, _ in report.columns]
            if other != schema_cols:
                raise ProtocolError(
                    f"client {report.client_id} schema {other} differs from client 0 {schema_cols}"
                )

        self.row_counts = [self._verified_rows(r) for r in reports]
        batch = cfg.gan.batch_size
        for cid, n in enumerate(self.row_counts):
            if n < batch:
                raise ProtocolError(
                    f"client {cid} has {n} rows, fewer than one batch of {batch}"
                )

        per_client = [{name: stats for name, _, stats in r.columns} for r in reports]
        self.encoders, self.global_stats = aggregate_encoders(
            schema_cols, per_client, self.row_counts, cfg
        )
        self.schema = _schema_from_cols(schema_cols)
        self.layout = build_layout(self.schema, self.encoders)

        if cfg.mode == "fed":
            self.divergence = divergence_matrix(
                schema_cols,
                self.global_stats,
                per_client,
                sample_n=cfg.wd_sample_n,
                seed=cfg.seed,
            )
            self.weight_trace = client_weights(
                self.divergence, self.row_counts, fusion=cfg.weight_fusion
            )
            self.weights = self.weight_trace.weights
        else:
            self.weights = uniform_weights(self.client_count)

        self.model = build_gan(self.layout, cfg.gan)

        bundle = msg.EncoderBundle(
            0,
            tuple(
                (meta.name, meta.kind, self.encoders[meta.name]) for meta in self.schema
            ),
            self.layout.width,
        )
        self._broadcast(bundle)
        self._collect(msg.Ack, 0)

    @staticmethod
    def _verified_rows(report: msg.StatsReport) -> int:
        """Row count from category totals when available, else as reported."""
        for _, kind, stats in report.columns:
            if kind is ColumnKind.CATEGORICAL:
                assert isinstance(stats, CategoricalStats)
                total = stats.total
                if report.n_rows != total:
                    raise ProtocolError(
                        f"client {report.client_id}: counts sum to {total}, reported {report.n_rows} rows"
                    )
                return total
        return report.n_rows

    # ---------------------------------------------------------------- rounds

    def run_round(self) -> RoundRecord:
        if self.model is None:
            raise ProtocolError("initialize() must run before training rounds")
        bytes_before = (self.bytes_sent, self.bytes_received)
        if self.cfg.mode == "md":
            record = self._round_md()
        else:
            record = self._round_average()
        record.bytes_sent = self.bytes_sent - bytes_before[0]
        record.bytes_received = self.bytes_received - bytes_before[1]
        record.duration_s += (record.bytes_sent + record.bytes_received) / BYTES_PER_SECOND
        self.clock_s += record.duration_s
        self.records.append(record)
        return record

    def _round_average(self) -> RoundRecord:
        cfg = self.cfg
        r = self.round + 1
        request = msg.TrainRequest(r, cfg.local_epochs)
        self._broadcast(request)
        uploads = self._collect(msg.ModelUpload, r)

        assert self.model is not None and self.weights is not None
        gen_avg = self._average([u.gen for u in uploads], self.model.gen)
        disc_avg = self._average([u.disc for u in uploads], self.model.disc)
        self.model.gen.flat[:] = gen_avg
        self.model.disc.flat[:] = disc_avg

        self._broadcast(
            msg.ModelBroadcast(
                r,
                ModelParams(gen_avg, self.model.gen.manifest),
                ModelParams(disc_avg, self.model.disc.manifest),
            )
        )
        self._collect(msg.Ack, r)
        self.round = r

        assert self.row_counts is not None
        steps_max = max(n // cfg.gan.batch_size for n in self.row_counts)
        return RoundRecord(
            round=r,
            duration_s=cfg.local_epochs * steps_max * STEP_SECONDS,
            bytes_sent=0,
            bytes_received=0,
            gen_losses={u.client_id: u.gen_loss for u in uploads},
            disc_losses={u.client_id: u.disc_loss for u in uploads},
        )

    def _average(self, uploads: list[ModelParams | None], reference: ModelParams) -> np.ndarray:
        assert self.weights is not None
        flats = []
        for cid, params in enumerate(uploads):
            if params is None or params.manifest != reference.manifest:
                raise ProtocolError(f"client {cid}: upload does not match the model layout")
            flats.append(params.flat)
        stacked = np.stack(flats)
        averaged = (self.weights[:, None] * stacked).sum(axis=0)
        if not np.isfinite(averaged).all():
            raise ProtocolError("aggregated parameters are not finite")
        return averaged

    def _round_md(self) -> RoundRecord:
        cfg = self.cfg
        gan_cfg = cfg.gan
        r = self.round + 1
        assert self.model is not None and self.row_counts is not None
        steps = min(n // gan_cfg.batch_size for n in self.row_counts)
        p = self.client_count
        gen_sums = np.zeros(p)
        disc_sums = np.zeros(p)

        for e in range(cfg.local_epochs):
            global_epoch = (r - 1) * cfg.local_epochs + e
            noise_rng = derived_rng(gan_cfg.seed, "noise", 0, global_epoch)
            for _ in range(steps):
                fake, tape = draw_generator_batch(self.model, gan_cfg, gan_cfg.batch_size, noise_rng)
                self._broadcast(msg.FakeBatch(r, global_epoch, fake))
                feedback = self._collect(msg.DiscFeedback, r)
                grads = np.stack([fb.grad for fb in feedback])
                apply_generator_feedback(self.model, tape, grads.mean(axis=0), gan_cfg)
                for fb in feedback:
                    gen_sums[fb.client_id] += fb.gen_loss
                    disc_sums[fb.client_id] += fb.disc_loss
            if p > 1 and cfg.swap_interval > 0 and (global_epoch + 1) % cfg.swap_interval == 0:
                self._swap_discriminators(r, global_epoch)

        self.round = r
        total_steps = cfg.local_epochs * steps
        return RoundRecord(
            round=r,
            duration_s=total_steps * STEP_SECONDS,
            bytes_sent=0,
            bytes_received=0,
            gen_losses={cid: gen_sums[cid] / total_steps for cid in range(p)},
            disc_losses={cid: disc_sums[cid] / total_steps for cid in range(p)},
        )

    def _swap_discriminators(self, round_: int, global_epoch: int) -> None:
        """Relay each discriminator to its permuted destination."""
        perm = derived_rng(self.cfg.seed, "swap", global_epoch).permutation(self.client_count)
        order = msg.SwapOrder(round_, tuple(int(v) for v in perm))
        self._broadcast(order)
        uploads = self._collect(msg.ModelUpload, round_)
        for cid, ep in enumerate(self._endpoints):
            source = uploads[perm[cid]]
            if source.disc is None:
                raise ProtocolError(f"client {perm[cid]}: swap upload missing discriminator")
            ep.send(msg.ModelBroadcast(round_, None, source.disc))
        self._collect(msg.Ack, round_)

    # ------------------------------------------------------------------ loop

    def train(self, rounds: int, hook=None) -> list[RoundRecord]:
        """Run training rounds; ``hook(self, record)`` fires after each."""
        if rounds < 0:
            raise ValueError("rounds must be >= 0")
        out = []
        for _ in range(rounds):
            record = self.run_round()
            out.append(record)
            if hook is not None:
                hook(self, record)
        return out

    def close(self) -> None:
        for ep in self._endpoints:
            ep.close()


class CentralizedRun:
    """Single-site baseline sharing the federated code path minus messaging.

    Encoders are built through the same aggregation step with this site as
    the only participant, so a one-client federation reproduces this run's
    trajectory exactly.
    """

    def __init__(self, table: Table, cfg: FederationConfig):
        if cfg.gan.batch_size > table.n_rows:
            raise ValueError(
                f"table has {table.n_rows} rows, fewer than one batch of {cfg.gan.batch_size}"
            )
        self.cfg = cfg
        self.table = table
        stats = local_column_stats(table, cfg, client_id=0)
        schema_cols = [(name, kind) for name, kind, _ in stats]
        per_client = [{name: s for name, _, s in stats}]
        self.encoders, self.global_stats = aggregate_encoders(
            schema_cols, per_client, [table.n_rows], cfg
        )
        self.schema = _schema_from_cols(schema_cols)
        self.layout = build_layout(self.schema, self.encoders)
        self.model = build_gan(self.layout, cfg.gan)
        self.encoded = encode_table(table, self.layout, self.encoders)
        self.weights = np.array([1.0])
        self.weight_trace = None
        self.divergence = None
        self.row_counts = [table.n_rows]
        self.round = 0
        self.clock_s = 0.0
        self.records: list[RoundRecord] = []
        self.bytes_sent = 0
        self.bytes_received = 0

    def message_counts(self) -> dict[str, int]:
        return {}

    def run_round(self) -> RoundRecord:
        cfg = self.cfg
        r = self.round + 1
        history = train_local(
            self.model,
            self.encoded,
            cfg.local_epochs,
            cfg.gan,
            client_id=0,
            epoch_offset=(r - 1) * cfg.local_epochs,
        )
        self.round = r
        steps = self.encoded.shape[0] // cfg.gan.batch_size
        record = RoundRecord(
            round=r,
            duration_s=cfg.local_epochs * steps * STEP_SECONDS,
            bytes_sent=0,
            bytes_received=0,
            gen_losses={0: float(np.mean([h.gen for h in history]))},
            disc_losses={0: float(np.mean([h.disc for h in history]))},
        )
        self.clock_s += record.duration_s
        self.records.append(record)
        return record

    def train(self, rounds: int, hook=None) -> list[RoundRecord]:
        if rounds < 0:
            raise ValueError("rounds must be >= 0")
        out = []
        for _ in range(rounds):
            record = self.run_round()
            out.append(record)
            if hook is not None:
                hook(self, record)
        return out

    def close(self) -> None:
        pass
