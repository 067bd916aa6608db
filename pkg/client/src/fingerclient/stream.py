"""Live stream client: connect, decode, and assemble aligned observations."""

from __future__ import annotations

import socket
from dataclasses import dataclass

import numpy as np

from .wire import (
    AUDIO_RATE,
    MSG_AUDIO,
    MSG_PROPRIO,
    MSG_VIDEO,
    StreamDecoder,
    decode_audio,
    decode_proprio,
    decode_video,
)

AUDIO_WINDOW_S = 1.0


@dataclass
class DecodedObservation:
    frame: np.ndarray  # (H, W, 3) float in [0, 1]
    audio: np.ndarray  # trailing window, int16, AUDIO_WINDOW_S seconds
    proprio: np.ndarray  # (28,)
    timestamp_us: int


class ObservationAssembler:
    """Groups decoded messages into per-frame observations.

    A video frame completes an observation once a proprio record with the
    same timestamp has arrived; the audio window is the trailing second of
    samples received so far (zero-padded before session start).
    """

    def __init__(self, audio_window_s: float = AUDIO_WINDOW_S):
        self._n_window = int(audio_window_s * AUDIO_RATE)
        self._ring = np.zeros(self._n_window, dtype=np.int16)
        self._audio_end_us = 0
        self._pending_frame = None
        self._pending_proprio = {}

    def _push_audio(self, msg):
        samples = decode_audio(msg.payload)
        n = len(samples)
        if n >= self._n_window:
            self._ring[:] = samples[-self._n_window :]
        else:
            self._ring[:-n] = self._ring[n:]
            self._ring[-n:] = samples
        self._audio_end_us = msg.timestamp_us + n * 1_000_000 // AUDIO_RATE

    def push(self, msg):
        """Feed one message; returns a DecodedObservation when complete."""
        if msg.msg_type == MSG_AUDIO:
            self._push_audio(msg)
        elif msg.msg_type == MSG_PROPRIO:
            self._pending_proprio[msg.timestamp_us] = decode_proprio(msg.payload)
        elif msg.msg_type == MSG_VIDEO:
            self._pending_frame = msg
        if self._pending_frame is not None:
            ts = self._pending_frame.timestamp_us
            if ts in self._pending_proprio:
                frame = decode_video(self._pending_frame.payload).astype(np.float64) / 255.0
                obs = DecodedObservation(
                    frame=frame,
                    audio=self._ring.copy(),
                    proprio=self._pending_proprio.pop(ts),
                    timestamp_us=ts,
                )
                self._pending_frame = None
                return obs
        return None


def connect_and_decode(endpoint, audio_window_s: float = AUDIO_WINDOW_S, timeout: float = 30.0):
    """Yield DecodedObservation from a live server until it disconnects.

    CRC-damaged messages are skipped and counted on the decoder, which is
    available as the generator's `.decoder` attribute via connect_stats.
    """
    host, port = endpoint
    decoder = StreamDecoder()
    assembler = ObservationAssembler(audio_window_s)

    def gen():
        with socket.create_connection((host, port), timeout=timeout) as sock:
            while True:
                data = sock.recv(1 << 20)
                if not data:
                    return
                for msg in decoder.feed(data):
                    obs = assembler.push(msg)
                    if obs is not None:
                        yield obs

    iterator = gen()
    return iterator, decoder
