"""Log-mel spectrogram features for the contact-audio channel.

64 mel bins over 25 ms windows with a 10 ms hop at 48 kHz; these framing
constants are artifact choices exposed as arguments.
"""

from __future__ import annotations

import numpy as np

AUDIO_RATE = 48000


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, rate: int = AUDIO_RATE, fmin: float = 20.0, fmax: float | None = None) -> np.ndarray:
    """Triangular mel filters, shape (n_mels, n_fft // 2 + 1)."""
    fmax = fmax or rate / 2.0
    mel_pts = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    bins = np.fft.rfftfreq(n_fft, d=1.0 / rate)
    fb = np.zeros((n_mels, len(bins)))
    for i in range(n_mels):
        lo, mid, hi = hz_pts[i], hz_pts[i + 1], hz_pts[i + 2]
        up = (bins - lo) / max(mid - lo, 1e-9)
        down = (hi - bins) / max(hi - mid, 1e-9)
        fb[i] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def mel_center_freqs(n_mels: int, fmin: float = 20.0, fmax: float = AUDIO_RATE / 2.0) -> np.ndarray:
    mel_pts = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    return mel_to_hz(mel_pts)[1:-1]


def log_mel_spectrogram(
    samples: np.ndarray,
    rate: int = AUDIO_RATE,
    n_mels: int = 64,
    window_s: float = 0.025,
    hop_s: float = 0.010,
    floor: float = 1e-10,
) -> np.ndarray:
    """(frames, n_mels) log-power mel features of an int16 or float signal."""
    x = np.asarray(samples)
    if x.dtype.kind in "iu":
        x = x.astype(np.float64) / 32768.0
    else:
        x = x.astype(np.float64)
    win = int(round(window_s * rate))
    hop = int(round(hop_s * rate))
    if len(x) < win:
        x = np.pad(x, (0, win - len(x)))
    n_frames = 1 + (len(x) - win) // hop
    window = np.hanning(win)
    fb = mel_filterbank(n_mels, win, rate)
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx] * window
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    mel = power @ fb.T
    return np.log10(np.maximum(mel, floor))
