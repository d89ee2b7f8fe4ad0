"""Federated training: wire protocol, transports and the round engine."""
from __future__ import annotations

from .engine import (
    BYTES_PER_SECOND,
    STEP_SECONDS,
    CentralizedRun,
    FederationConfig,
    Federator,
    ClientWorker,
    RoundRecord,
    run_client,
)
from .messages import (
    Ack,
    DiscFeedback,
    EncoderBundle,
    FakeBatch,
    Message,
    ModelBroadcast,
    ModelUpload,
    StatsReport,
    SwapOrder,
    Tag,
    TrainRequest,
    decode_message,
    encode_message,
    message_size,
)
from .transport import (
    ChannelClosed,
    MessageEndpoint,
    ProtocolError,
    SocketChannel,
    inproc_pair,
    tcp_accept,
    tcp_connect,
    tcp_listen,
)

__all__ = [
    "Ack",
    "BYTES_PER_SECOND",
    "CentralizedRun",
    "ChannelClosed",
    "ClientWorker",
    "DiscFeedback",
    "EncoderBundle",
    "FakeBatch",
    "FederationConfig",
    "Federator",
    "Message",
    "MessageEndpoint",
    "ModelBroadcast",
    "ModelUpload",
    "ProtocolError",
    "RoundRecord",
    "STEP_SECONDS",
    "SocketChannel",
    "StatsReport",
    "SwapOrder",
    "Tag",
    "TrainRequest",
    "decode_message",
    "encode_message",
    "inproc_pair",
    "message_size",
    "run_client",
    "tcp_accept",
    "tcp_connect",
    "tcp_listen",
]
