"""Session event wire protocol and the local event socket.

Wire format: each message is a 4-byte big-endian length prefix followed by
that many bytes of UTF-8 JSON with fields {kind, n, payload}. The publisher
serves any number of subscribers over a local TCP socket; every subscriber
gets its own bounded queue and a slow or stalled subscriber only ever loses
its own messages — the producing session is never blocked. Subscribers may
send commands ({command, ...}) back on the same connection; the session
polls them between projections.
"""

from __future__ import annotations

import json
import queue
import socket
import struct
import threading

from .errors import InvalidArgumentError, ParseError

EVENT_KINDS = (
    "projection_added",
    "slices_updated",
    "metrics_updated",
    "stop_suggested",
    "history_restarted",
    "session_ended",
)
# ties on n resolve in emission order; session_ended always sorts last
KIND_PRECEDENCE = {kind: i for i, kind in enumerate(EVENT_KINDS)}

CONTROL_COMMANDS = ("stop", "continue", "reorient")

_HEADER = struct.Struct(">I")
MAX_FRAME_BYTES = 64 * 1024 * 1024


def make_event(kind: str, n: int, payload: dict | None = None) -> dict:
    if kind not in EVENT_KINDS:
        raise InvalidArgumentError(f"unknown event kind {kind!r}")
    return {"kind": kind, "n": int(n), "payload": payload or {}}


def encode_frame(record: dict) -> bytes:
    body = json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=False).encode()
    if len(body) > MAX_FRAME_BYTES:
        raise InvalidArgumentError(f"frame too large: {len(body)} bytes")
    return _HEADER.pack(len(body)) + body


class FrameDecoder:
    """Incremental decoder: feed arbitrary byte chunks, get whole records."""

    def __init__(self):
        self._buffer = bytearray()

    def feed(self, data: bytes):
        self._buffer.extend(data)
        records = []
        while True:
            if len(self._buffer) < _HEADER.size:
                return records
            (length,) = _HEADER.unpack_from(self._buffer)
            if length > MAX_FRAME_BYTES:
                raise ParseError(f"frame length {length} exceeds limit")
            if len(self._buffer) < _HEADER.size + length:
                return records
            body = bytes(self._buffer[_HEADER.size:_HEADER.size + length])
            del self._buffer[:_HEADER.size + length]
            try:
                records.append(json.loads(body.decode()))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise ParseError(f"malformed frame body: {exc}") from exc


class _Subscriber:
    def __init__(self, conn: socket.socket, max_queued: int):
        self.conn = conn
        self.queue = queue.Queue(maxsize=max_queued)
        self.dropped = 0
        self.alive = True


class EventPublisher:
    """Local TCP fan-out of session events plus inbound command collection."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, max_queued: int = 1024):
        self._listener = socket.create_server((host, port))
        self._listener.settimeout(0.2)
        self.address = self._listener.getsockname()
        self._max_queued = max_queued
        self._subscribers = []
        self._lock = threading.Lock()
        self._commands = queue.Queue()
        self._closing = threading.Event()
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    @property
    def port(self) -> int:
        return self.address[1]

    def _accept_loop(self):
        while not self._closing.is_set():
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            sub = _Subscriber(conn, self._max_queued)
            with self._lock:
                self._subscribers.append(sub)
            threading.Thread(target=self._writer_loop, args=(sub,), daemon=True).start()
            threading.Thread(target=self._reader_loop, args=(sub,), daemon=True).start()

    def _writer_loop(self, sub: _Subscriber):
        while True:
            frame = sub.queue.get()
            if frame is None or not sub.alive:
                break
            try:
                sub.conn.sendall(frame)
            except OSError:
                break
        sub.alive = False
        try:
            sub.conn.close()
        except OSError:
            pass

    def _reader_loop(self, sub: _Subscriber):
        decoder = FrameDecoder()
        while sub.alive and not self._closing.is_set():
            try:
                data = sub.conn.recv(4096)
            except OSError:
                break
            if not data:
                break
            try:
                for record in decoder.feed(data):
                    self._commands.put((sub, record))
            except ParseError:
                self.send_to(sub, {"kind": "control_error", "n": -1,
                                   "payload": {"error": "malformed command frame"}})

    def publish(self, event: dict):
        """Queue the event to every subscriber; drop for full queues."""
        frame = encode_frame(event)
        with self._lock:
            subs = list(self._subscribers)
        for sub in subs:
            if not sub.alive:
                continue
            try:
                sub.queue.put_nowait(frame)
            except queue.Full:
                sub.dropped += 1

    def send_to(self, sub: _Subscriber, record: dict):
        try:
            sub.queue.put_nowait(encode_frame(record))
        except queue.Full:
            sub.dropped += 1

    def pending_commands(self):
        """Drain inbound (subscriber, command) pairs received so far."""
        out = []
        while True:
            try:
                out.append(self._commands.get_nowait())
            except queue.Empty:
                return out

    def close(self):
        self._closing.set()
        try:
            self._listener.close()
        except OSError:
            pass
        with self._lock:
            subs = list(self._subscribers)
            self._subscribers.clear()
        for sub in subs:
            sub.alive = False
            try:
                sub.queue.put_nowait(None)
            except queue.Full:
                pass
            try:
                sub.conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                sub.conn.close()
            except OSError:
                pass


def read_events(sock: socket.socket):
    """Generator of decoded records from a connected subscriber socket."""
    decoder = FrameDecoder()
    while True:
        data = sock.recv(4096)
        if not data:
            return
        yield from decoder.feed(data)
