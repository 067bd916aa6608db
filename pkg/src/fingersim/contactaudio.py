"""Contact-microphone channel synthesis at 48 kHz.

Impacts ring a small modal bank; slip events inject band-passed noise with
a square-root amplitude law in slip speed. The mixer assembles 20 ms PCM
chunks on the session clock.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import DomainError

__all__ = [
    "SAMPLE_RATE",
    "CHUNK_SAMPLES",
    "CHUNK_MICROS",
    "Mode",
    "ModalModel",
    "default_modal_model",
    "AudioChunk",
    "TimedWaveform",
    "synth_impact",
    "synth_slip",
    "mix_stream",
    "chunks_to_array",
    "write_wav",
]

SAMPLE_RATE = 48000
CHUNK_SAMPLES = 960  # 20 ms
CHUNK_MICROS = 20_000
PCM_FULL_SCALE = 32767


@dataclass(frozen=True)
class Mode:
    frequency: float  # Hz
    damping: float  # 1/s
    gain: float


@dataclass(frozen=True)
class ModalModel:
    modes: tuple
    impact_coeff: float = 0.05  # amplitude per newton
    slip_gain: float = 2.0
    band: tuple = (500.0, 8000.0)

    def __post_init__(self):
        for m in self.modes:
            if m.frequency >= SAMPLE_RATE / 2:
                raise DomainError(f"mode at {m.frequency} Hz exceeds Nyquist")
            if m.damping <= 0:
                raise DomainError("mode damping must be positive")


def default_modal_model() -> ModalModel:
    return ModalModel(
        modes=(
            Mode(frequency=850.0, damping=60.0, gain=1.0),
            Mode(frequency=2300.0, damping=140.0, gain=0.6),
            Mode(frequency=5100.0, damping=300.0, gain=0.35),
        )
    )


@dataclass(frozen=True)
class AudioChunk:
    samples: np.ndarray  # int16 PCM
    start: int  # microseconds on the session clock
    rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.rate != SAMPLE_RATE:
            raise DomainError("audio chunks are fixed at 48 kHz")
        if len(self.samples) == 0:
            raise DomainError("audio chunk cannot be empty")


@dataclass(frozen=True)
class TimedWaveform:
    start: float  # seconds on the session clock
    samples: np.ndarray  # float, full scale = 1.0


def synth_impact(force: float, model: ModalModel, duration: float):
    """Ring the modal bank: sum of damped sinusoids scaled by force.

    Returns (waveform, clipped); samples are hard-clamped to [-1, 1] and
    `clipped` reports whether the clamp engaged.
    """
    if force < 0:
        raise DomainError("impact force must be non-negative")
    n = int(round(duration * SAMPLE_RATE))
    t = np.arange(n) / SAMPLE_RATE
    wav = np.zeros(n)
    for m in model.modes:
        wav += m.gain * force * model.impact_coeff * np.exp(-m.damping * t) * np.sin(
            2.0 * np.pi * m.frequency * t
        )
    clipped = bool(np.any(np.abs(wav) > 1.0))
    return np.clip(wav, -1.0, 1.0), clipped


def synth_slip(slip_events, model: ModalModel, friction: float, seed: int = 0, first_index: int = 0):
    """Band-passed noise bursts, one per slip event.

    Burst amplitude is friction * pressure * sqrt(speed) * slip_gain; each
    burst is RMS-normalized before scaling so the amplitude law is exact.
    Deterministic per (seed, first_index + event index).
    """
    if any(b.time < a.time for a, b in zip(slip_events, slip_events[1:])):
        raise DomainError("slip events must be time-ordered")
    sos = signal.butter(4, model.band, btype="bandpass", fs=SAMPLE_RATE, output="sos")
    bursts = []
    for i, ev in enumerate(slip_events):
        n = max(8, int(round(ev.duration * SAMPLE_RATE)))
        rng = np.random.default_rng(np.random.SeedSequence((seed, first_index + i)))
        noise = signal.sosfilt(sos, rng.standard_normal(n))
        rms = np.sqrt(np.mean(noise**2))
        if rms > 0:
            noise = noise / rms
        amp = model.slip_gain * friction * ev.pressure * np.sqrt(ev.speed)
        bursts.append(TimedWaveform(start=ev.time, samples=amp * noise))
    return bursts


def mix_stream(waveforms, duration: float | None = None, clock_start_us: int = 0):
    """Place timed waveforms sample-accurately and cut 20 ms PCM chunks.

    Mixing is additive with a saturating clamp at full scale. All chunks
    carry 960 samples except a final partial one.
    """
    end = 0.0
    for wf in waveforms:
        end = max(end, wf.start + len(wf.samples) / SAMPLE_RATE)
    if duration is not None:
        end = max(end, duration)
    total = int(np.ceil(end * SAMPLE_RATE))
    if duration is not None:
        total = int(round(duration * SAMPLE_RATE))
    if total <= 0:
        return []

    track = np.zeros(total)
    for wf in waveforms:
        i0 = int(round(wf.start * SAMPLE_RATE))
        if i0 >= total:
            continue
        seg = wf.samples[: max(0, total - i0)]
        track[i0 : i0 + len(seg)] += seg
    np.clip(track, -1.0, 1.0, out=track)
    pcm = np.round(track * PCM_FULL_SCALE).astype(np.int16)

    chunks = []
    for i0 in range(0, total, CHUNK_SAMPLES):
        seg = pcm[i0 : i0 + CHUNK_SAMPLES]
        start_us = clock_start_us + (i0 * 1_000_000) // SAMPLE_RATE
        chunks.append(AudioChunk(samples=seg, start=start_us))
    return chunks


def chunks_to_array(chunks) -> np.ndarray:
    if not chunks:
        return np.zeros(0, dtype=np.int16)
    return np.concatenate([c.samples for c in chunks])


def write_wav(chunks, path) -> None:
    """Mono 16-bit RIFF wave file of the chunk stream."""
    data = chunks_to_array(chunks)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(SAMPLE_RATE)
        fh.writeframes(data.tobytes())
