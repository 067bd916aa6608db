"""Framed wire protocol, episode container, A/V sync checking, and the
fan-out TCP server behind the finger's single Ethernet A/V output.

Wire format (little-endian, CRC-32 over header + payload):

    magic    4B  = "PLYT"
    version  1B  = 1
    msg_type 1B  (0 video, 1 audio, 2 proprio, 3 metadata, 4 heartbeat)
    flags    1B
    reserved 1B
    timestamp_us 8B unsigned
    seq      4B unsigned, per-type counter
    payload_len  4B unsigned
    payload  ...
    crc32    4B

The episode container is an append-only sequence of wire messages between
a JSON header block (magic "PLYTEPI1") and a JSON footer index that allows
random access; a truncated file is recovered by sequential scan.
"""

from __future__ import annotations

import json
import logging
import socket
import struct
import threading
import time
import zlib
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptionError, DomainError, FramingError

__all__ = [
    "MAGIC",
    "VERSION",
    "HEADER_SIZE",
    "MSG_VIDEO",
    "MSG_AUDIO",
    "MSG_PROPRIO",
    "MSG_METADATA",
    "MSG_HEARTBEAT",
    "FrameMessage",
    "encode_message",
    "decode_message",
    "MessageDecoder",
    "SequenceCounter",
    "PIXFMT_RAW",
    "PIXFMT_RLE",
    "encode_video_payload",
    "decode_video_payload",
    "encode_audio_payload",
    "decode_audio_payload",
    "audio_payload_duration_us",
    "encode_proprio_payload",
    "decode_proprio_payload",
    "EpisodeWriter",
    "EpisodeReader",
    "record_episode",
    "read_episode",
    "SyncState",
    "sync_check",
    "StreamServer",
    "serve_session",
    "SessionStats",
]

logger = logging.getLogger(__name__)

MAGIC = b"PLYT"
VERSION = 1
HEADER_FMT = "<4sBBBBQII"
HEADER_SIZE = struct.calcsize(HEADER_FMT)  # 24
CRC_SIZE = 4

MSG_VIDEO = 0
MSG_AUDIO = 1
MSG_PROPRIO = 2
MSG_METADATA = 3
MSG_HEARTBEAT = 4
_VALID_TYPES = (MSG_VIDEO, MSG_AUDIO, MSG_PROPRIO, MSG_METADATA, MSG_HEARTBEAT)

EPISODE_MAGIC = b"PLYTEPI1"
EPISODE_END_MAGIC = b"PLYTEND1"


@dataclass(frozen=True)
class FrameMessage:
    msg_type: int
    timestamp_us: int
    seq: int
    payload: bytes = b""
    flags: int = 0

    def __post_init__(self):
        if self.msg_type not in _VALID_TYPES:
            raise DomainError(f"unknown message type {self.msg_type}")
        if self.timestamp_us < 0 or self.seq < 0:
            raise DomainError("timestamp and seq must be non-negative")


def encode_message(msg: FrameMessage) -> bytes:
    header = struct.pack(
        HEADER_FMT,
        MAGIC,
        VERSION,
        msg.msg_type,
        msg.flags,
        0,
        msg.timestamp_us,
        msg.seq,
        len(msg.payload),
    )
    body = header + msg.payload
    return body + struct.pack("<I", zlib.crc32(body))


def decode_message(data: bytes, offset: int = 0):
    """Decode one message at `offset`.

    Returns (FrameMessage, bytes consumed), or None when more bytes are
    needed. Raises FramingError on bad magic/version and CorruptionError
    on a CRC mismatch (the caller decides whether to drop or abort).
    """
    if len(data) - offset < HEADER_SIZE:
        return None
    magic, version, msg_type, flags, _, ts, seq, plen = struct.unpack_from(
        HEADER_FMT, data, offset
    )
    if magic != MAGIC:
        raise FramingError(f"bad magic {magic!r} at offset {offset}")
    if version != VERSION:
        raise FramingError(f"unsupported protocol version {version}")
    total = HEADER_SIZE + plen + CRC_SIZE
    if len(data) - offset < total:
        return None
    body = bytes(data[offset : offset + HEADER_SIZE + plen])
    (crc,) = struct.unpack_from("<I", data, offset + HEADER_SIZE + plen)
    if zlib.crc32(body) != crc:
        raise CorruptionError(f"CRC mismatch for seq {seq} type {msg_type}")
    payload = body[HEADER_SIZE:]
    return FrameMessage(msg_type=msg_type, timestamp_us=ts, seq=seq, payload=payload, flags=flags), total


class MessageDecoder:
    """Incremental stream decoder with corruption accounting.

    CRC-failed messages are dropped and counted; bad magic raises
    FramingError (the byte stream is unrecoverable without resync).
    """

    def __init__(self):
        self._buf = bytearray()
        self.corrupted = 0
        self.decoded = 0

    def feed(self, data: bytes):
        self._buf.extend(data)
        out = []
        while True:
            try:
                result = decode_message(self._buf)
            except CorruptionError:
                # Skip the whole corrupt frame; its length field is part of
                # the CRC-protected header but still the best skip estimate.
                _, _, _, _, _, _, _, plen = struct.unpack_from(HEADER_FMT, self._buf, 0)
                del self._buf[: HEADER_SIZE + plen + CRC_SIZE]
                self.corrupted += 1
                continue
            if result is None:
                return out
            msg, consumed = result
            del self._buf[:consumed]
            self.decoded += 1
            out.append(msg)

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)


class SequenceCounter:
    """Per-type seq assignment with per-type timestamp monotonicity."""

    def __init__(self):
        self._seq = {t: 0 for t in _VALID_TYPES}
        self._last_ts = {t: -1 for t in _VALID_TYPES}

    def make(self, msg_type: int, timestamp_us: int, payload: bytes, flags: int = 0) -> FrameMessage:
        if timestamp_us < self._last_ts[msg_type]:
            raise DomainError(
                f"timestamp regression on type {msg_type}: "
                f"{timestamp_us} < {self._last_ts[msg_type]}"
            )
        msg = FrameMessage(msg_type, timestamp_us, self._seq[msg_type], payload, flags)
        self._seq[msg_type] += 1
        self._last_ts[msg_type] = timestamp_us
        return msg


# -- payloads -------------------------------------------------------------

PIXFMT_RAW = 0
PIXFMT_RLE = 1


def encode_video_payload(rgb: np.ndarray, pixfmt: int = PIXFMT_RAW) -> bytes:
    """Pack an (H, W, 3) uint8 image; RLE is byte-run-length per pixel."""
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    h, w = rgb.shape[:2]
    head = struct.pack("<HHB", w, h, pixfmt)
    if pixfmt == PIXFMT_RAW:
        return head + rgb.tobytes()
    if pixfmt != PIXFMT_RLE:
        raise DomainError(f"unknown pixel format {pixfmt}")
    flat = rgb.reshape(-1, 3)
    runs = bytearray()
    i = 0
    n = len(flat)
    while i < n:
        j = i + 1
        while j < n and j - i < 255 and np.array_equal(flat[j], flat[i]):
            j += 1
        runs.append(j - i)
        runs.extend(flat[i].tobytes())
        i = j
    return head + bytes(runs)


def decode_video_payload(payload: bytes) -> np.ndarray:
    if len(payload) < 5:
        raise CorruptionError("video payload too short")
    w, h, pixfmt = struct.unpack_from("<HHB", payload, 0)
    body = payload[5:]
    if pixfmt == PIXFMT_RAW:
        if len(body) != w * h * 3:
            raise CorruptionError("raw video payload size mismatch")
        return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)
    if pixfmt != PIXFMT_RLE:
        raise CorruptionError(f"unknown pixel format {pixfmt}")
    if len(body) % 4 != 0:
        raise CorruptionError("RLE video payload size mismatch")
    runs = np.frombuffer(body, dtype=np.uint8).reshape(-1, 4)
    counts = runs[:, 0].astype(np.int64)
    if counts.sum() != w * h:
        raise CorruptionError("RLE pixel count mismatch")
    flat = np.repeat(runs[:, 1:], counts, axis=0)
    return flat.reshape(h, w, 3)


def encode_audio_payload(samples: np.ndarray) -> bytes:
    return np.ascontiguousarray(samples, dtype="<i2").tobytes()


def decode_audio_payload(payload: bytes) -> np.ndarray:
    if len(payload) % 2 != 0:
        raise CorruptionError("audio payload must hold int16 samples")
    return np.frombuffer(payload, dtype="<i2")


def audio_payload_duration_us(payload: bytes, rate: int = 48000) -> int:
    return (len(payload) // 2) * 1_000_000 // rate


def encode_proprio_payload(values: np.ndarray, arms: int = 2) -> bytes:
    values = np.asarray(values, dtype="<f4").reshape(-1)
    if len(values) != arms * 14:
        raise DomainError(f"proprio vector must hold {arms * 14} floats")
    return struct.pack("<B", arms) + values.tobytes()


def decode_proprio_payload(payload: bytes) -> np.ndarray:
    if not payload:
        raise CorruptionError("empty proprio payload")
    arms = payload[0]
    body = payload[1:]
    if len(body) != arms * 14 * 4:
        raise CorruptionError("proprio payload size mismatch")
    return np.frombuffer(body, dtype="<f4").astype(np.float64)


# -- episode container ----------------------------------------------------


class EpisodeWriter:
    """Append-only on-disk episode: header, wire messages, footer index."""

    def __init__(self, path, session_id: str, config_hash: str = "", streams=(), start_wallclock_us: int | None = None):
        self.path = Path(path)
        self._fh = open(self.path, "wb")
        self._index = {str(t): [] for t in _VALID_TYPES}
        self._arrival = []
        self.message_count = 0
        header = {
            "session_id": session_id,
            "start_wallclock_us": int(time.time() * 1e6) if start_wallclock_us is None else start_wallclock_us,
            "config_hash": config_hash,
            "streams": list(streams),
        }
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        self._fh.write(EPISODE_MAGIC)
        self._fh.write(struct.pack("<I", len(blob)))
        self._fh.write(blob)
        self.header = header
        self._closed = False

    def append(self, msg: FrameMessage) -> None:
        offset = self._fh.tell()
        self._fh.write(encode_message(msg))
        self._index[str(msg.msg_type)].append([offset, msg.timestamp_us])
        self._arrival.append([msg.msg_type, offset, msg.timestamp_us])
        self.message_count += 1

    def close(self) -> None:
        if self._closed:
            return
        footer = {"index": self._index, "message_count": self.message_count}
        blob = json.dumps(footer, sort_keys=True).encode("utf-8")
        self._fh.write(blob)
        self._fh.write(struct.pack("<Q", len(blob)))
        self._fh.write(EPISODE_END_MAGIC)
        self._fh.close()
        self._closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class EpisodeReader:
    """Random-access reader; falls back to a sequential scan when the
    footer is missing or damaged, skipping CRC-failed messages."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "rb")
        raw_magic = self._fh.read(len(EPISODE_MAGIC))
        if raw_magic != EPISODE_MAGIC:
            raise FramingError(f"{path}: not an episode container")
        (hlen,) = struct.unpack("<I", self._fh.read(4))
        self.header = json.loads(self._fh.read(hlen).decode("utf-8"))
        self._data_start = self._fh.tell()
        self.recovered = False
        self.skipped_corrupt = 0
        self._entries = []  # (msg_type, offset, timestamp, arrival_idx)
        if not self._try_footer():
            self.recovered = True
            logger.warning("%s: footer missing or damaged; sequential scan", path)
            self._scan()

    def _try_footer(self) -> bool:
        self._fh.seek(0, 2)
        end = self._fh.tell()
        if end < self._data_start + 16:
            return False
        self._fh.seek(end - 16)
        tail = self._fh.read(16)
        if tail[8:] != EPISODE_END_MAGIC:
            return False
        (flen,) = struct.unpack("<Q", tail[:8])
        if end - 16 - flen < self._data_start:
            return False
        self._fh.seek(end - 16 - flen)
        try:
            footer = json.loads(self._fh.read(flen).decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            return False
        arrival = []
        for t_str, entries in footer["index"].items():
            for offset, ts in entries:
                arrival.append((int(t_str), offset, ts))
        arrival.sort(key=lambda e: e[1])  # file order is arrival order
        self._entries = [(t, off, ts, i) for i, (t, off, ts) in enumerate(arrival)]
        return True

    def _scan(self) -> None:
        self._fh.seek(0, 2)
        end = self._fh.tell()
        pos = self._data_start
        idx = 0
        self._fh.seek(pos)
        while pos + HEADER_SIZE <= end:
            self._fh.seek(pos)
            header = self._fh.read(HEADER_SIZE)
            if len(header) < HEADER_SIZE or not header.startswith(MAGIC):
                break
            plen = struct.unpack_from("<I", header, HEADER_SIZE - 4)[0]
            total = HEADER_SIZE + plen + CRC_SIZE
            if pos + total > end:
                break  # truncated final message
            self._fh.seek(pos)
            blob = self._fh.read(total)
            try:
                decode_message(blob)
            except CorruptionError:
                self.skipped_corrupt += 1
                pos += total
                continue
            except FramingError:
                break
            msg_type = blob[5]
            ts = struct.unpack_from("<Q", blob, 8)[0]
            self._entries.append((msg_type, pos, ts, idx))
            idx += 1
            pos += total

    def _read_at(self, offset: int) -> FrameMessage:
        self._fh.seek(offset)
        header = self._fh.read(HEADER_SIZE)
        plen = struct.unpack_from("<I", header, HEADER_SIZE - 4)[0]
        rest = self._fh.read(plen + CRC_SIZE)
        msg, _ = decode_message(header + rest)
        return msg

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        """Messages in timestamp order (arrival order breaks ties)."""
        for _, off, _, _ in sorted(self._entries, key=lambda e: (e[2], e[3])):
            yield self._read_at(off)

    def iter_arrival(self):
        for _, off, _, _ in sorted(self._entries, key=lambda e: e[3]):
            yield self._read_at(off)

    def count(self, msg_type: int) -> int:
        return sum(1 for e in self._entries if e[0] == msg_type)

    def get(self, msg_type: int, k: int) -> FrameMessage:
        """The k-th message of a type, in arrival (= seq) order."""
        entries = sorted(
            (e for e in self._entries if e[0] == msg_type), key=lambda e: e[3]
        )
        if not 0 <= k < len(entries):
            raise DomainError(f"no message #{k} of type {msg_type}")
        return self._read_at(entries[k][1])

    def timestamps(self, msg_type: int):
        return [ts for t, _, ts, _ in sorted(self._entries, key=lambda e: e[3]) if t == msg_type]

    def seq_gap_count(self) -> int:
        gaps = 0
        for t in _VALID_TYPES:
            seqs = [self._read_at(e[1]).seq for e in sorted(self._entries, key=lambda x: x[3]) if e[0] == t]
            for a, b in zip(seqs, seqs[1:]):
                gaps += max(0, b - a - 1)
        return gaps

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def record_episode(messages, path, session_id: str = "session", config_hash: str = "", streams=(), start_wallclock_us: int | None = None) -> Path:
    with EpisodeWriter(path, session_id, config_hash, streams, start_wallclock_us) as writer:
        for msg in messages:
            writer.append(msg)
    return Path(path)


def read_episode(path) -> EpisodeReader:
    return EpisodeReader(path)


# -- synchronization ------------------------------------------------------


@dataclass
class SyncState:
    last_video_us: int = -1
    audio_frontier_us: int = -1
    drift_us: int = 0


def sync_check(messages) -> int:
    """Maximum A/V drift over a message log (arrival order).

    Drift at each video frame is |video ts - audio frontier|, the frontier
    being the end time of the last completed audio chunk seen so far.
    """
    state = SyncState()
    max_drift = 0
    seen_video = seen_audio = False
    for msg in messages:
        if msg.msg_type == MSG_AUDIO:
            seen_audio = True
            state.audio_frontier_us = msg.timestamp_us + audio_payload_duration_us(msg.payload)
        elif msg.msg_type == MSG_VIDEO:
            seen_video = True
            state.last_video_us = msg.timestamp_us
            if state.audio_frontier_us >= 0:
                state.drift_us = abs(msg.timestamp_us - state.audio_frontier_us)
                max_drift = max(max_drift, state.drift_us)
    if not (seen_video and seen_audio):
        raise DomainError("sync check requires both video and audio messages")
    return max_drift


# -- streaming server ------------------------------------------------------


class _Client:
    def __init__(self, conn: socket.socket, addr, backlog_bytes: int):
        self.conn = conn
        self.addr = addr
        self.backlog_bytes = backlog_bytes
        self.queue = deque()
        self.queued_bytes = 0
        self.cond = threading.Condition()
        self.alive = True
        self.closing = False
        self.backlog_exceeded = False
        self.sent_bytes = 0
        self.thread = threading.Thread(target=self._run, daemon=True)
        self.thread.start()

    def offer(self, data: bytes, deadline: float | None = None) -> bool:
        """Enqueue for this client, waiting until `deadline` (monotonic
        seconds) for backlog space. A client still over its backlog at the
        deadline is slower than real time and gets dropped."""
        with self.cond:
            while self.alive and self.queued_bytes + len(data) > self.backlog_bytes:
                now = time.monotonic()
                if deadline is None or now >= deadline:
                    break
                self.cond.wait(timeout=min(0.05, deadline - now))
            if not self.alive:
                return False
            if self.queued_bytes + len(data) > self.backlog_bytes:
                self.backlog_exceeded = True
                self.alive = False
                self.cond.notify_all()
                return False
            self.queue.append(data)
            self.queued_bytes += len(data)
            self.cond.notify_all()
            return True

    def finish(self):
        with self.cond:
            self.closing = True
            self.cond.notify_all()

    def kill(self):
        """Hard-drop: unblocks a sender stuck in sendall on a stalled peer."""
        with self.cond:
            self.alive = False
            self.cond.notify_all()
        try:
            self.conn.close()
        except OSError:
            pass

    def _run(self):
        try:
            while True:
                with self.cond:
                    while self.alive and not self.queue and not self.closing:
                        self.cond.wait(timeout=0.5)
                    if not self.alive:
                        break
                    if not self.queue:
                        if self.closing:
                            break
                        continue
                    data = self.queue.popleft()
                    self.queued_bytes -= len(data)
                    self.cond.notify_all()
                try:
                    self.conn.sendall(data)
                    self.sent_bytes += len(data)
                except OSError:
                    with self.cond:
                        self.alive = False
                    break
        finally:
            try:
                self.conn.shutdown(socket.SHUT_WR)
            except OSError:
                pass
            try:
                self.conn.close()
            except OSError:
                pass


class StreamServer:
    """Single-producer fan-out: one bounded send queue per client.

    A slow client is disconnected once its backlog exceeds the bound; the
    producer and the other clients are never stalled.
    """

    def __init__(self, listen=("127.0.0.1", 0), backlog_bytes: int = 8 * 1024 * 1024):
        self.backlog_bytes = backlog_bytes
        self._clients = []
        self._lock = threading.Lock()
        self._accepting = True
        self.clients_served = 0
        self.backlog_disconnects = 0
        self.messages_published = 0
        try:
            self._listener = socket.create_server(listen)
        except OSError as exc:
            raise DomainError(f"cannot bind {listen}: {exc}") from exc
        self.address = self._listener.getsockname()
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    def _accept_loop(self):
        while self._accepting:
            try:
                self._listener.settimeout(0.2)
                conn, addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            client = _Client(conn, addr, self.backlog_bytes)
            with self._lock:
                self._clients.append(client)
                self.clients_served += 1
            logger.info("client connected from %s", addr)

    def publish(self, msg: FrameMessage) -> None:
        self.publish_bytes(encode_message(msg))

    def publish_bytes(self, data: bytes, deadline: float | None = None) -> None:
        """Fan out one encoded message.

        `deadline` (monotonic seconds) is the real-time instant by which a
        client must have freed backlog space; an accelerated producer sets
        it to the message's session time so only genuinely slow clients
        are dropped, and the simulation itself never stalls past it.
        """
        self.messages_published += 1
        with self._lock:
            clients = list(self._clients)
        for client in clients:
            if not client.offer(data, deadline=deadline):
                if client.backlog_exceeded:
                    self.backlog_disconnects += 1
                    logger.warning("client %s dropped: backlog exceeded", client.addr)
                client.kill()
                with self._lock:
                    if client in self._clients:
                        self._clients.remove(client)

    def client_count(self) -> int:
        with self._lock:
            return len(self._clients)

    def stop(self, drain_timeout: float = 10.0) -> None:
        self._accepting = False
        try:
            self._listener.close()
        except OSError:
            pass
        with self._lock:
            clients = list(self._clients)
        for client in clients:
            client.finish()
        for client in clients:
            client.thread.join(timeout=drain_timeout)


@dataclass
class SessionStats:
    duration_s: float
    video_messages: int = 0
    audio_messages: int = 0
    proprio_messages: int = 0
    clients_served: int = 0
    backlog_disconnects: int = 0
    max_drift_us: int = 0
    drift_at_1s_us: int = 0
    drift_at_end_us: int = 0
    wall_time_s: float = 0.0

    @property
    def real_time_factor(self) -> float:
        return self.duration_s / self.wall_time_s if self.wall_time_s > 0 else float("inf")


def serve_session(
    video_source,
    audio_source,
    duration_s: float,
    listen=("127.0.0.1", 0),
    server: StreamServer | None = None,
    recorder: EpisodeWriter | None = None,
    fps: float = 30.0,
    chunks_per_s: float = 50.0,
    backlog_bytes: int = 8 * 1024 * 1024,
    settle_s: float = 0.0,
) -> SessionStats:
    """Drive a session on the logical clock, interleaved in timestamp order.

    `video_source(k)` and `audio_source(k)` return payload bytes for the
    k-th frame/chunk. Audio chunk k (timestamp k/chunks_per_s) is emitted
    when its span completes. The loop runs as fast as the sinks allow; the
    returned stats report the achieved real-time factor.
    """
    own_server = server is None
    if own_server:
        server = StreamServer(listen=listen, backlog_bytes=backlog_bytes)
    if settle_s > 0:
        time.sleep(settle_s)
    counter = SequenceCounter()
    stats = SessionStats(duration_s=duration_s)

    # Frames at k / fps for k / fps < duration; audio chunk k (timestamp
    # k / rate) is emitted once its span [k, k+1) / rate completes.
    n_video = int(np.ceil(duration_s * fps - 1e-9))
    n_audio = int(np.floor(duration_s * chunks_per_s + 1e-9))
    events = []  # (emit_time_us, tiebreak, kind, index, timestamp_us)
    for k in range(n_video):
        ts = int(round(k * 1_000_000 / fps))
        events.append((ts, 1, MSG_VIDEO, k, ts))
    for k in range(n_audio):
        ts = int(round(k * 1_000_000 / chunks_per_s))
        end = int(round((k + 1) * 1_000_000 / chunks_per_s))
        events.append((end, 0, MSG_AUDIO, k, ts))
    events.sort(key=lambda e: (e[0], e[1]))

    audio_frontier = -1
    t0 = time.monotonic()
    grace_s = 1.0  # connection/warm-up slack on the real-time deadline
    for _, _, kind, k, ts in events:
        if kind == MSG_VIDEO:
            payload = video_source(k)
            msg = counter.make(MSG_VIDEO, ts, payload)
            stats.video_messages += 1
        else:
            payload = audio_source(k)
            msg = counter.make(MSG_AUDIO, ts, payload)
            stats.audio_messages += 1
            audio_frontier = ts + audio_payload_duration_us(payload)
        data = encode_message(msg)
        server.publish_bytes(data, deadline=t0 + grace_s + ts / 1e6)
        if recorder is not None:
            recorder.append(msg)
        if kind == MSG_VIDEO and audio_frontier >= 0:
            drift = abs(ts - audio_frontier)
            stats.max_drift_us = max(stats.max_drift_us, drift)
            if ts <= 1_000_000:
                stats.drift_at_1s_us = max(stats.drift_at_1s_us, drift)
            stats.drift_at_end_us = drift
    stats.wall_time_s = time.monotonic() - t0
    if own_server:
        server.stop()
    stats.clients_served = server.clients_served
    stats.backlog_disconnects = server.backlog_disconnects
    return stats
