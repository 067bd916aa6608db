"""Independent implementation of the finger's wire protocol and episode
container, written against the documented formats.

Framing (little-endian): magic "PLYT", version 1, msg_type, flags,
reserved, u64 timestamp_us, u32 seq, u32 payload_len, payload, u32 CRC-32
over header + payload. Episode files: "PLYTEPI1", u32 header length, JSON
header, then wire messages back to back; the optional footer index is
ignored here since clients read sequentially anyway.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"PLYT"
VERSION = 1
HEADER_FMT = "<4sBBBBQII"
HEADER_SIZE = struct.calcsize(HEADER_FMT)
CRC_SIZE = 4

MSG_VIDEO = 0
MSG_AUDIO = 1
MSG_PROPRIO = 2
MSG_METADATA = 3
MSG_HEARTBEAT = 4

EPISODE_MAGIC = b"PLYTEPI1"
AUDIO_RATE = 48000


class WireError(Exception):
    """Unrecoverable stream state (bad container magic, bad version)."""


@dataclass(frozen=True)
class Message:
    msg_type: int
    timestamp_us: int
    seq: int
    payload: bytes
    flags: int = 0

    def encode(self) -> bytes:
        header = struct.pack(
            HEADER_FMT, MAGIC, VERSION, self.msg_type, self.flags, 0,
            self.timestamp_us, self.seq, len(self.payload),
        )
        return header + self.payload + struct.pack("<I", zlib.crc32(header + self.payload))


class StreamDecoder:
    """Incremental decoder with resync: a corrupted frame is skipped (CRC)
    or scanned past (damaged magic), counted either way, never fatal."""

    def __init__(self):
        self._buf = bytearray()
        self.skipped = 0
        self.decoded = 0

    def feed(self, data: bytes):
        self._buf.extend(data)
        out = []
        while True:
            if len(self._buf) < HEADER_SIZE:
                return out
            if self._buf[:4] != MAGIC:
                idx = self._buf.find(MAGIC, 1)
                self.skipped += 1
                if idx < 0:
                    del self._buf[:-3]
                    return out
                del self._buf[:idx]
                continue
            magic, version, msg_type, flags, _, ts, seq, plen = struct.unpack_from(
                HEADER_FMT, self._buf, 0
            )
            total = HEADER_SIZE + plen + CRC_SIZE
            if len(self._buf) < total:
                return out
            body = bytes(self._buf[: HEADER_SIZE + plen])
            (crc,) = struct.unpack_from("<I", self._buf, HEADER_SIZE + plen)
            if version != VERSION or zlib.crc32(body) != crc:
                # Drop this frame; rescan from the next byte in case the
                # length field itself was the corrupted bit.
                del self._buf[:4]
                self.skipped += 1
                continue
            del self._buf[:total]
            self.decoded += 1
            out.append(Message(msg_type, ts, seq, body[HEADER_SIZE:], flags))


def decode_video(payload: bytes) -> np.ndarray:
    """(H, W, 3) uint8 from a raw or run-length video payload."""
    w, h, pixfmt = struct.unpack_from("<HHB", payload, 0)
    body = payload[5:]
    if pixfmt == 0:
        return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)
    if pixfmt == 1:
        runs = np.frombuffer(body, dtype=np.uint8).reshape(-1, 4)
        return np.repeat(runs[:, 1:], runs[:, 0].astype(np.int64), axis=0).reshape(h, w, 3)
    raise WireError(f"unknown pixel format {pixfmt}")


def decode_audio(payload: bytes) -> np.ndarray:
    return np.frombuffer(payload, dtype="<i2")


def decode_proprio(payload: bytes) -> np.ndarray:
    arms = payload[0]
    return np.frombuffer(payload[1:], dtype="<f4", count=arms * 14).astype(np.float64)


def read_episode(path):
    """Yield (header, messages): sequential scan of an episode container.

    Corrupt messages are skipped; the trailing footer block (which does not
    start with the message magic) ends the scan.
    """
    data = Path(path).read_bytes()
    if data[:8] != EPISODE_MAGIC:
        raise WireError(f"{path}: not an episode container")
    (hlen,) = struct.unpack_from("<I", data, 8)
    header = json.loads(data[12 : 12 + hlen].decode("utf-8"))
    pos = 12 + hlen
    messages = []
    skipped = 0
    while pos + HEADER_SIZE <= len(data):
        if data[pos : pos + 4] != MAGIC:
            break
        plen = struct.unpack_from("<I", data, pos + HEADER_SIZE - 4)[0]
        total = HEADER_SIZE + plen + CRC_SIZE
        if pos + total > len(data):
            break
        body = data[pos : pos + HEADER_SIZE + plen]
        (crc,) = struct.unpack_from("<I", data, pos + HEADER_SIZE + plen)
        if zlib.crc32(body) == crc:
            _, version, msg_type, flags, _, ts, seq, _ = struct.unpack_from(HEADER_FMT, body, 0)
            messages.append(Message(msg_type, ts, seq, body[HEADER_SIZE:], flags))
        else:
            skipped += 1
        pos += total
    header["skipped_corrupt"] = skipped
    return header, messages
