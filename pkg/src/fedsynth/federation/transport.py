"""Byte channels and the typed endpoint wrapper.

Two transports carry identical frames: an in-process queue pair and a TCP
socket. Messages are always serialized, even in process, so byte counters
measure real wire traffic and every run exercises the codec.
"""
from __future__ import annotations

import queue
import socket
import struct
import time
from collections import Counter

from .messages import FRAME_PREFIX_BYTES, Message, decode_message, encode_message

_LEN = struct.Struct("<I")
_CLOSED = object()


class ChannelClosed(ConnectionError):
    """The peer closed the channel."""


class ProtocolError(RuntimeError):
    """The peer violated the message protocol."""


class QueueChannel:
    """One end of an in-process channel; frames are bytes on two queues."""

    def __init__(self, outgoing: queue.Queue, incoming: queue.Queue):
        self._out = outgoing
        self._in = incoming
        self._closed = False

    def send_frame(self, payload: bytes) -> None:
        if self._closed:
            raise ChannelClosed("channel is closed")
        self._out.put(payload)

    def recv_frame(self) -> bytes:
        if self._closed:
            raise ChannelClosed("channel is closed")
        item = self._in.get()
        if item is _CLOSED:
            self._closed = True
            raise ChannelClosed("peer closed the channel")
        return item

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._out.put(_CLOSED)


def inproc_pair() -> tuple[QueueChannel, QueueChannel]:
    """A connected channel pair: what one end sends the other receives."""
    a_to_b: queue.Queue = queue.Queue()
    b_to_a: queue.Queue = queue.Queue()
    return QueueChannel(a_to_b, b_to_a), QueueChannel(b_to_a, a_to_b)


class SocketChannel:
    """Length-prefixed frames over a TCP socket."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def send_frame(self, payload: bytes) -> None:
        try:
            self._sock.sendall(_LEN.pack(len(payload)) + payload)
        except OSError as exc:
            raise ChannelClosed(f"send failed: {exc}") from exc

    def _recv_exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            try:
                chunk = self._sock.recv(n - len(buf))
            except OSError as exc:
                raise ChannelClosed(f"recv failed: {exc}") from exc
            if not chunk:
                raise ChannelClosed("peer closed the connection")
            buf.extend(chunk)
        return bytes(buf)

    def recv_frame(self) -> bytes:
        (length,) = _LEN.unpack(self._recv_exact(4))
        return self._recv_exact(length)

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class MessageEndpoint:
    """Typed send/recv over a byte channel, with per-direction byte counts."""

    def __init__(self, channel):
        self.channel = channel
        self.bytes_sent = 0
        self.bytes_received = 0
        self.sent_by_tag: Counter = Counter()
        self.received_by_tag: Counter = Counter()

    def send(self, msg: Message) -> int:
        payload = encode_message(msg)
        self.channel.send_frame(payload)
        size = FRAME_PREFIX_BYTES + len(payload)
        self.bytes_sent += size
        self.sent_by_tag[type(msg).__name__] += 1
        return size

    def recv(self) -> Message:
        payload = self.channel.recv_frame()
        self.bytes_received += FRAME_PREFIX_BYTES + len(payload)
        msg = decode_message(payload)
        self.received_by_tag[type(msg).__name__] += 1
        return msg

    def close(self) -> None:
        self.channel.close()


def tcp_listen(host: str, port: int) -> socket.socket:
    """Bind and listen; port 0 picks a free port (read it back via getsockname)."""
    listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    listener.bind((host, port))
    listener.listen()
    return listener


def tcp_accept(listener: socket.socket, count: int, timeout: float = 60.0) -> list[SocketChannel]:
    listener.settimeout(timeout)
    channels = []
    try:
        for _ in range(count):
            sock, _addr = listener.accept()
            channels.append(SocketChannel(sock))
    except socket.timeout:
        raise ProtocolError(
            f"only {len(channels)} of {count} clients connected within {timeout}s"
        ) from None
    return channels


def tcp_connect(host: str, port: int, timeout: float = 30.0) -> SocketChannel:
    deadline = time.monotonic() + timeout
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
            return SocketChannel(sock)
        except OSError:
            if time.monotonic() >= deadline:
                raise
            time.sleep(0.05)
