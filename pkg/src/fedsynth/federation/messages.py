"""Binary wire format for federator-client traffic.

Every message is framed as a 4-byte little-endian payload length followed by
the payload: a 1-byte tag, a 4-byte little-endian round number, then the
tag-specific body. Numeric payloads are little-endian float64, so a message
round-trips bit-exactly on any platform.

Each message class declares the semantic kind of every field. Synthetic row
matrices appear in exactly one variant (FakeBatch); no other variant has a
field capable of carrying table cells, which is what keeps raw data on the
clients by construction.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, fields
from typing import ClassVar, Union

import numpy as np

from ..data import ColumnKind
from ..encoders import CategoricalStats, GmmParams, LabelEncoder
from ..nn import ModelParams

_U8 = struct.Struct("<B")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_F64 = struct.Struct("<d")


class Tag:
    STATS_REPORT = 1
    ENCODER_BUNDLE = 2
    TRAIN_REQUEST = 3
    MODEL_UPLOAD = 4
    MODEL_BROADCAST = 5
    FAKE_BATCH = 6
    DISC_FEEDBACK = 7
    SWAP_ORDER = 8
    ACK = 9


# Semantic field kinds, audited by the privacy tests.
KIND_INT = "int"
KIND_FLOAT = "float"
KIND_COLUMN_STATS = "column_stats"
KIND_ENCODERS = "encoders"
KIND_PARAMS = "model_params"
KIND_GRADIENT = "gradient_matrix"
KIND_SYNTH_ROWS = "synthetic_rows"
KIND_PERMUTATION = "permutation"


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise TypeError(message)


@dataclass(frozen=True)
class StatsReport:
    """Client -> federator: per-column statistics, never raw values."""

    round: int
    client_id: int
    n_rows: int
    columns: tuple[tuple[str, ColumnKind, CategoricalStats | GmmParams], ...]

    TAG: ClassVar[int] = Tag.STATS_REPORT
    FIELD_KINDS: ClassVar[dict[str, str]] = {
        "round": KIND_INT,
        "client_id": KIND_INT,
        "n_rows": KIND_INT,
        "columns": KIND_COLUMN_STATS,
    }

    def __post_init__(self) -> None:
        for entry in self.columns:
            _require(len(entry) == 3, "column stats must be (name, kind, stats)")
            name, kind, stats = entry
            _require(isinstance(name, str), "column name must be str")
            _require(isinstance(kind, ColumnKind), "column kind must be ColumnKind")
            if kind is ColumnKind.CATEGORICAL:
                _require(isinstance(stats, CategoricalStats), "categorical column needs CategoricalStats")
            else:
                _require(isinstance(stats, GmmParams), "continuous column needs GmmParams")


@dataclass(frozen=True)
class EncoderBundle:
    """Federator -> clients: the shared encoders; the layout is derived."""

    round: int
    encoders: tuple[tuple[str, ColumnKind, LabelEncoder | GmmParams], ...]
    encoded_width: int

    TAG: ClassVar[int] = Tag.ENCODER_BUNDLE
    FIELD_KINDS: ClassVar[dict[str, str]] = {
        "round": KIND_INT,
        "encoders": KIND_ENCODERS,
        "encoded_width": KIND_INT,
    }

    def __post_init__(self) -> None:
        for entry in self.encoders:
            _require(len(entry) == 3, "encoder entry must be (name, kind, encoder)")
            name, kind, enc = entry
            _require(isinstance(name, str), "column name must be str")
            _require(isinstance(kind, ColumnKind), "column kind must be ColumnKind")
            if kind is ColumnKind.CATEGORICAL:
                _require(isinstance(enc, LabelEncoder), "categorical column needs LabelEncoder")
            else:
                _require(isinstance(enc, GmmParams), "continuous column needs GmmParams")


@dataclass(frozen=True)
class TrainRequest:
    """Federator -> clients: train this many local epochs, then upload."""

    round: int
    epochs: int

    TAG: ClassVar[int] = Tag.TRAIN_REQUEST
    FIELD_KINDS: ClassVar[dict[str, str]] = {"round": KIND_INT, "epochs": KIND_INT}


@dataclass(frozen=True)
class ModelUpload:
    """Client -> federator: trained parameters plus mean losses."""

    round: int
    client_id: int
    gen: ModelParams | None
    disc: ModelParams | None
    gen_loss: float
    disc_loss: float

    TAG: ClassVar[int] = Tag.MODEL_UPLOAD
    FIELD_KINDS: ClassVar[dict[str, str]] = {
        "round": KIND_INT,
        "client_id": KIND_INT,
        "gen": KIND_PARAMS,
        "disc": KIND_PARAMS,
        "gen_loss": KIND_FLOAT,
        "disc_loss": KIND_FLOAT,
    }

    def __post_init__(self) -> None:
        for name, value in (("gen", self.gen), ("disc", self.disc)):
            _require(value is None or isinstance(value, ModelParams), f"{name} must be ModelParams or None")


@dataclass(frozen=True)
class ModelBroadcast:
    """Federator -> clients: replace local parameters with these."""

    round: int
    gen: ModelParams | None
    disc: ModelParams | None

    TAG: ClassVar[int] = Tag.MODEL_BROADCAST
    FIELD_KINDS: ClassVar[dict[str, str]] = {
        "round": KIND_INT,
        "gen": KIND_PARAMS,
        "disc": KIND_PARAMS,
    }

    def __post_init__(self) -> None:
        for name, value in (("gen", self.gen), ("disc", self.disc)):
            _require(value is None or isinstance(value, ModelParams), f"{name} must be ModelParams or None")


@dataclass(frozen=True)
class FakeBatch:
    """Federator -> clients: one generator batch of encoded synthetic rows.

    The only message variant that carries row-shaped data, and it is
    generator output, never stored rows.
    """

    round: int
    epoch: int
    rows: np.ndarray

    TAG: ClassVar[int] = Tag.FAKE_BATCH
    FIELD_KINDS: ClassVar[dict[str, str]] = {
        "round": KIND_INT,
        "epoch": KIND_INT,
        "rows": KIND_SYNTH_ROWS,
    }

    def __post_init__(self) -> None:
        _require(isinstance(self.rows, np.ndarray) and self.rows.ndim == 2, "rows must be a 2-D array")


@dataclass(frozen=True)
class DiscFeedback:
    """Client -> federator: generator-loss gradient wrt a fake batch."""

    round: int
    client_id: int
    grad: np.ndarray
    gen_loss: float
    disc_loss: float

    TAG: ClassVar[int] = Tag.DISC_FEEDBACK
    FIELD_KINDS: ClassVar[dict[str, str]] = {
        "round": KIND_INT,
        "client_id": KIND_INT,
        "grad": KIND_GRADIENT,
        "gen_loss": KIND_FLOAT,
        "disc_loss": KIND_FLOAT,
    }

    def __post_init__(self) -> None:
        _require(isinstance(self.grad, np.ndarray) and self.grad.ndim == 2, "grad must be a 2-D array")


@dataclass(frozen=True)
class SwapOrder:
    """Federator -> clients: permutation for the discriminator swap."""

    round: int
    permutation: tuple[int, ...]

    TAG: ClassVar[int] = Tag.SWAP_ORDER
    FIELD_KINDS: ClassVar[dict[str, str]] = {
        "round": KIND_INT,
        "permutation": KIND_PERMUTATION,
    }

    def __post_init__(self) -> None:
        _require(sorted(self.permutation) == list(range(len(self.permutation))), "not a permutation")


@dataclass(frozen=True)
class Ack:
    round: int
    client_id: int

    TAG: ClassVar[int] = Tag.ACK
    FIELD_KINDS: ClassVar[dict[str, str]] = {"round": KIND_INT, "client_id": KIND_INT}


Message = Union[
    StatsReport,
    EncoderBundle,
    TrainRequest,
    ModelUpload,
    ModelBroadcast,
    FakeBatch,
    DiscFeedback,
    SwapOrder,
    Ack,
]

MESSAGE_TYPES: tuple[type, ...] = (
    StatsReport,
    EncoderBundle,
    TrainRequest,
    ModelUpload,
    ModelBroadcast,
    FakeBatch,
    DiscFeedback,
    SwapOrder,
    Ack,
)


class WireError(ValueError):
    """Malformed bytes on the wire."""


# ---------------------------------------------------------------- primitives


class _Writer:
    def __init__(self) -> None:
        self.chunks: list[bytes] = []

    def u8(self, v: int) -> None:
        self.chunks.append(_U8.pack(v))

    def u32(self, v: int) -> None:
        self.chunks.append(_U32.pack(v))

    def u64(self, v: int) -> None:
        self.chunks.append(_U64.pack(v))

    def f64(self, v: float) -> None:
        self.chunks.append(_F64.pack(v))

    def text(self, s: str) -> None:
        raw = s.encode("utf-8")
        self.u32(len(raw))
        self.chunks.append(raw)

    def f64_array(self, arr: np.ndarray) -> None:
        flat = np.ascontiguousarray(arr, dtype="<f8")
        self.u32(flat.size)
        self.chunks.append(flat.tobytes())

    def f64_matrix(self, mat: np.ndarray) -> None:
        mat = np.ascontiguousarray(mat, dtype="<f8")
        self.u32(mat.shape[0])
        self.u32(mat.shape[1])
        self.chunks.append(mat.tobytes())

    def getvalue(self) -> bytes:
        return b"".join(self.chunks)


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def _take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise WireError("truncated message")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return _U8.unpack(self._take(1))[0]

    def u32(self) -> int:
        return _U32.unpack(self._take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self._take(8))[0]

    def f64(self) -> float:
        return _F64.unpack(self._take(8))[0]

    def text(self) -> str:
        n = self.u32()
        return self._take(n).decode("utf-8")

    def f64_array(self) -> np.ndarray:
        n = self.u32()
        return np.frombuffer(self._take(8 * n), dtype="<f8").astype(np.float64)

    def f64_matrix(self) -> np.ndarray:
        rows = self.u32()
        cols = self.u32()
        flat = np.frombuffer(self._take(8 * rows * cols), dtype="<f8")
        return flat.astype(np.float64).reshape(rows, cols)

    def done(self) -> None:
        if self.pos != len(self.data):
            raise WireError(f"{len(self.data) - self.pos} trailing bytes")


_KIND_CODE = {ColumnKind.CATEGORICAL: 0, ColumnKind.CONTINUOUS: 1}
_KIND_FROM_CODE = {0: ColumnKind.CATEGORICAL, 1: ColumnKind.CONTINUOUS}


def _w_gmm(w: _Writer, gmm: GmmParams) -> None:
    w.u32(gmm.n_modes)
    for values in (gmm.weights, gmm.means, gmm.stds):
        for v in values:
            w.f64(v)


def _r_gmm(r: _Reader) -> GmmParams:
    k = r.u32()
    weights = tuple(r.f64() for _ in range(k))
    means = tuple(r.f64() for _ in range(k))
    stds = tuple(r.f64() for _ in range(k))
    return GmmParams(weights, means, stds)


def _w_params(w: _Writer, params: ModelParams | None) -> None:
    if params is None:
        w.u8(0)
        return
    w.u8(1)
    manifest = [[name, list(shape), offset] for name, shape, offset in params.manifest]
    w.text(json.dumps(manifest, separators=(",", ":")))
    w.f64_array(params.flat)


def _r_params(r: _Reader) -> ModelParams | None:
    if r.u8() == 0:
        return None
    manifest_raw = json.loads(r.text())
    manifest = tuple((name, tuple(shape), offset) for name, shape, offset in manifest_raw)
    flat = r.f64_array()
    expected = sum(int(np.prod(shape)) for _, shape, _ in manifest)
    if flat.size != expected:
        raise WireError(f"parameter payload has {flat.size} values, manifest expects {expected}")
    return ModelParams(flat, manifest)


def _encode_stats_report(w: _Writer, msg: StatsReport) -> None:
    w.u32(msg.client_id)
    w.u64(msg.n_rows)
    w.u32(len(msg.columns))
    for name, kind, stats in msg.columns:
        w.text(name)
        w.u8(_KIND_CODE[kind])
        if kind is ColumnKind.CATEGORICAL:
            assert isinstance(stats, CategoricalStats)
            w.u32(len(stats.counts))
            for token in sorted(stats.counts):
                w.text(token)
                w.u64(stats.counts[token])
        else:
            assert isinstance(stats, GmmParams)
            _w_gmm(w, stats)


def _decode_stats_report(round_: int, r: _Reader) -> StatsReport:
    client_id = r.u32()
    n_rows = r.u64()
    columns = []
    for _ in range(r.u32()):
        name = r.text()
        kind = _KIND_FROM_CODE[r.u8()]
        if kind is ColumnKind.CATEGORICAL:
            counts = {}
            for _ in range(r.u32()):
                token = r.text()
                counts[token] = r.u64()
            columns.append((name, kind, CategoricalStats(name, counts)))
        else:
            columns.append((name, kind, _r_gmm(r)))
    return StatsReport(round_, client_id, n_rows, tuple(columns))


def _encode_encoder_bundle(w: _Writer, msg: EncoderBundle) -> None:
    w.u32(msg.encoded_width)
    w.u32(len(msg.encoders))
    for name, kind, enc in msg.encoders:
        w.text(name)
        w.u8(_KIND_CODE[kind])
        if kind is ColumnKind.CATEGORICAL:
            assert isinstance(enc, LabelEncoder)
            w.u32(enc.n_categories)
            for token in enc.categories:
                w.text(token)
        else:
            assert isinstance(enc, GmmParams)
            _w_gmm(w, enc)


def _decode_encoder_bundle(round_: int, r: _Reader) -> EncoderBundle:
    width = r.u32()
    encoders = []
    for _ in range(r.u32()):
        name = r.text()
        kind = _KIND_FROM_CODE[r.u8()]
        if kind is ColumnKind.CATEGORICAL:
            categories = tuple(r.text() for _ in range(r.u32()))
            encoders.append((name, kind, LabelEncoder(name, categories)))
        else:
            encoders.append((name, kind, _r_gmm(r)))
    return EncoderBundle(round_, tuple(encoders), width)


def encode_message(msg: Message) -> bytes:
    """Serialize to the payload bytes (tag, round, body); no frame prefix."""
    w = _Writer()
    w.u8(msg.TAG)
    w.u32(msg.round)
    if isinstance(msg, StatsReport):
        _encode_stats_report(w, msg)
    elif isinstance(msg, EncoderBundle):
        _encode_encoder_bundle(w, msg)
    elif isinstance(msg, TrainRequest):
        w.u32(msg.epochs)
    elif isinstance(msg, ModelUpload):
        w.u32(msg.client_id)
        _w_params(w, msg.gen)
        _w_params(w, msg.disc)
        w.f64(msg.gen_loss)
        w.f64(msg.disc_loss)
    elif isinstance(msg, ModelBroadcast):
        _w_params(w, msg.gen)
        _w_params(w, msg.disc)
    elif isinstance(msg, FakeBatch):
        w.u32(msg.epoch)
        w.f64_matrix(msg.rows)
    elif isinstance(msg, DiscFeedback):
        w.u32(msg.client_id)
        w.f64_matrix(msg.grad)
        w.f64(msg.gen_loss)
        w.f64(msg.disc_loss)
    elif isinstance(msg, SwapOrder):
        w.u32(len(msg.permutation))
        for v in msg.permutation:
            w.u32(v)
    elif isinstance(msg, Ack):
        w.u32(msg.client_id)
    else:
        raise TypeError(f"not a protocol message: {type(msg).__name__}")
    return w.getvalue()


def decode_message(payload: bytes) -> Message:
    """Inverse of encode_message."""
    r = _Reader(payload)
    tag = r.u8()
    round_ = r.u32()
    if tag == Tag.STATS_REPORT:
        msg: Message = _decode_stats_report(round_, r)
    elif tag == Tag.ENCODER_BUNDLE:
        msg = _decode_encoder_bundle(round_, r)
    elif tag == Tag.TRAIN_REQUEST:
        msg = TrainRequest(round_, r.u32())
    elif tag == Tag.MODEL_UPLOAD:
        client_id = r.u32()
        gen = _r_params(r)
        disc = _r_params(r)
        msg = ModelUpload(round_, client_id, gen, disc, r.f64(), r.f64())
    elif tag == Tag.MODEL_BROADCAST:
        msg = ModelBroadcast(round_, _r_params(r), _r_params(r))
    elif tag == Tag.FAKE_BATCH:
        epoch = r.u32()
        msg = FakeBatch(round_, epoch, r.f64_matrix())
    elif tag == Tag.DISC_FEEDBACK:
        client_id = r.u32()
        grad = r.f64_matrix()
        msg = DiscFeedback(round_, client_id, grad, r.f64(), r.f64())
    elif tag == Tag.SWAP_ORDER:
        msg = SwapOrder(round_, tuple(r.u32() for _ in range(r.u32())))
    elif tag == Tag.ACK:
        msg = Ack(round_, r.u32())
    else:
        raise WireError(f"unknown message tag {tag}")
    r.done()
    return msg


FRAME_PREFIX_BYTES = 4


def message_size(msg: Message) -> int:
    """On-the-wire size of a message including its frame prefix."""
    return FRAME_PREFIX_BYTES + len(encode_message(msg))


def field_kind_table() -> dict[str, dict[str, str]]:
    """Declared field kinds for every message variant, for schema audits."""
    table = {}
    for cls in MESSAGE_TYPES:
        declared = set(cls.FIELD_KINDS)
        actual = {f.name for f in fields(cls)}
        if declared != actual:
            raise AssertionError(f"{cls.__name__}: field kinds out of sync")
        table[cls.__name__] = dict(cls.FIELD_KINDS)
    return table
