"""Episode files -> training samples.

Each sample pairs an observation window (history of 2 video-locked
observations) with the 16-step action chunk starting at its anchor frame;
actions are the desired pose + grip width halves of the proprio stream.

The finger's single camera carries both contact and peripheral signals,
so at toy scale the frame is split into a center crop (tactile stream)
and the full view (scene stream).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .features import log_mel_spectrogram
from .wire import AUDIO_RATE, MSG_AUDIO, MSG_PROPRIO, MSG_VIDEO, decode_audio, decode_proprio, decode_video, read_episode

logger = logging.getLogger(__name__)

OBSERVATION_HISTORY = 2
ACTION_HORIZON = 16
ACTIONS_TO_EXECUTE = 8
ACTION_DIM = 14  # per-step bimanual command: 2 x (pose 6 + grip 1)


@dataclass
class WindowConfig:
    image_size: int = 96
    audio_window_s: float = 1.0
    n_mels: int = 64


def _resize(frames: np.ndarray, size: int) -> np.ndarray:
    """(N, H, W, 3) float -> (N, size, size, 3) bilinear."""
    t = torch.from_numpy(frames).permute(0, 3, 1, 2)
    out = F.interpolate(t, size=(size, size), mode="bilinear", align_corners=False)
    return out.permute(0, 2, 3, 1).numpy()


def split_streams(frame: np.ndarray, size: int):
    """Center crop as tactile stream, full view as the scene stream."""
    h, w = frame.shape[:2]
    crop = frame[h // 4 : 3 * h // 4, w // 4 : 3 * w // 4]
    tactile = _resize(crop[None].astype(np.float64), size)[0]
    scene = _resize(frame[None].astype(np.float64), size)[0]
    return tactile, scene


@dataclass
class EpisodeArrays:
    """Dense per-frame arrays for one episode."""

    tactile: np.ndarray  # (T, S, S, 3)
    scene: np.ndarray  # (T, S, S, 3)
    mels: np.ndarray  # (T, frames, n_mels)
    proprio: np.ndarray  # (T, 28)
    actions: np.ndarray  # (T, 14)
    timestamps: np.ndarray  # (T,)


def proprio_to_action(vec: np.ndarray) -> np.ndarray:
    """Desired pose + width per arm from the 28-wide proprio layout."""
    per = vec.reshape(-1, 14)
    return np.concatenate([np.concatenate([arm[6:12], [arm[13]]]) for arm in per])


def load_episode_arrays(path, config: WindowConfig) -> EpisodeArrays | None:
    header, messages = read_episode(path)
    videos = [m for m in messages if m.msg_type == MSG_VIDEO]
    proprios = {m.timestamp_us: m for m in messages if m.msg_type == MSG_PROPRIO}
    audios = sorted((m for m in messages if m.msg_type == MSG_AUDIO), key=lambda m: m.timestamp_us)
    if len(videos) < ACTION_HORIZON:
        logger.warning("%s: only %d frames, need %d; skipped", path, len(videos), ACTION_HORIZON)
        return None

    track = (
        np.concatenate([decode_audio(m.payload) for m in audios])
        if audios
        else np.zeros(0, dtype=np.int16)
    )
    n_window = int(config.audio_window_s * AUDIO_RATE)

    tactile, scene, mels, prop, acts, stamps = [], [], [], [], [], []
    for msg in videos:
        if msg.timestamp_us not in proprios:
            logger.warning("%s: frame at %d us lacks proprio; skipped episode", path, msg.timestamp_us)
            return None
        frame = decode_video(msg.payload).astype(np.float64) / 255.0
        t_str, s_str = split_streams(frame, config.image_size)
        tactile.append(t_str)
        scene.append(s_str)
        end = msg.timestamp_us * AUDIO_RATE // 1_000_000
        lo = max(0, end - n_window)
        window = np.zeros(n_window, dtype=np.int16)
        if end > 0 and len(track):
            seg = track[lo : min(end, len(track))]
            window[n_window - (end - lo) : n_window - (end - lo) + len(seg)] = seg
        mels.append(log_mel_spectrogram(window, n_mels=config.n_mels))
        vec = decode_proprio(proprios[msg.timestamp_us].payload)
        prop.append(vec)
        acts.append(proprio_to_action(vec))
        stamps.append(msg.timestamp_us)
    return EpisodeArrays(
        tactile=np.stack(tactile),
        scene=np.stack(scene),
        mels=np.stack(mels),
        proprio=np.stack(prop),
        actions=np.stack(acts),
        timestamps=np.asarray(stamps),
    )


class ChunkDataset:
    """(observation window, 16-step action chunk) samples over episodes.

    An episode of T frames yields T - 16 + 1 chunk starts; observation
    history at the first frame pads by repeating it.
    """

    def __init__(self, episode_paths, config: WindowConfig | None = None):
        self.config = config or WindowConfig()
        self.episodes = []
        for path in episode_paths:
            arrays = load_episode_arrays(path, self.config)
            if arrays is not None:
                self.episodes.append(arrays)
        self._index = []
        for e_idx, ep in enumerate(self.episodes):
            t_len = len(ep.timestamps)
            for start in range(t_len - ACTION_HORIZON + 1):
                self._index.append((e_idx, start))

    def __len__(self):
        return len(self._index)

    def __getitem__(self, i: int):
        e_idx, start = self._index[i]
        ep = self.episodes[e_idx]
        hist = [max(0, start - 1), start]
        sample = {
            "tactile": np.stack([ep.tactile[j] for j in hist]),
            "scene": np.stack([ep.scene[j] for j in hist]),
            "audio_mel": np.stack([ep.mels[j] for j in hist]),
            "proprio": np.stack([ep.proprio[j] for j in hist]),
            "actions": ep.actions[start : start + ACTION_HORIZON],
        }
        if sample["actions"].shape[0] < ACTION_HORIZON:
            pad = np.repeat(sample["actions"][-1:], ACTION_HORIZON - sample["actions"].shape[0], axis=0)
            sample["actions"] = np.concatenate([sample["actions"], pad])
        return sample

    def batch(self, indices):
        samples = [self[i] for i in indices]
        return {
            key: torch.from_numpy(np.stack([s[key] for s in samples])).float()
            for key in samples[0]
        }


def receding_horizon_schedule(episode_length: int):
    """Prediction every 8 steps, executing 8 of the 16 predicted (fewer on
    the final chunk); covers each index exactly once."""
    if episode_length < ACTION_HORIZON:
        raise ValueError(f"need at least {ACTION_HORIZON} steps")
    return [
        (k, list(range(k, min(k + ACTIONS_TO_EXECUTE, episode_length))))
        for k in range(0, episode_length, ACTIONS_TO_EXECUTE)
    ]
