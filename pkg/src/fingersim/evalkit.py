"""Policy-evaluation metrics and the observation/action windowing contract.

Recorded episodes expose aligned multi-modal observation windows (history
of 2) and 16-step action chunks executed 8 steps at a time, so any policy
learner can consume them; progress/success metrics summarize evaluation
runs the way the task tables report them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .contactaudio import SAMPLE_RATE
from .errors import AlignmentError, DomainError
from .streamproto import (
    MSG_AUDIO,
    MSG_PROPRIO,
    MSG_VIDEO,
    EpisodeReader,
    decode_audio_payload,
    decode_proprio_payload,
    decode_video_payload,
)

__all__ = [
    "TaskSpec",
    "RunLog",
    "ProprioVector",
    "ObservationWindow",
    "ActionChunk",
    "OBSERVATION_HISTORY",
    "ACTION_HORIZON",
    "ACTIONS_TO_EXECUTE",
    "task_progress",
    "task_success",
    "format_percent",
    "build_obs_window",
    "receding_horizon_schedule",
    "load_run_logs",
    "parse_task_spec",
]

OBSERVATION_HISTORY = 2
ACTION_HORIZON = 16
ACTIONS_TO_EXECUTE = 8
AUDIO_WINDOW_S = 1.0  # trailing audio per observation


@dataclass(frozen=True)
class TaskSpec:
    name: str
    stage_count: int
    stage_labels: tuple = ()

    def __post_init__(self):
        if not 3 <= self.stage_count <= 7:
            raise DomainError("tasks are split into 3 to 7 stages")
        if self.stage_labels and len(self.stage_labels) != self.stage_count:
            raise DomainError("stage label count must match stage count")


@dataclass(frozen=True)
class RunLog:
    task: str
    completed: int
    success: bool


@dataclass(frozen=True)
class ProprioVector:
    """Per-arm actual/desired pose (rotation-vector, 6) and gripper width."""

    actual_pose: np.ndarray  # (arms, 6)
    desired_pose: np.ndarray  # (arms, 6)
    actual_width: np.ndarray  # (arms,)
    desired_width: np.ndarray  # (arms,)

    def __post_init__(self):
        if np.any(self.actual_width < 0) or np.any(self.desired_width < 0):
            raise DomainError("gripper widths must be non-negative")

    @property
    def arms(self) -> int:
        return self.actual_pose.shape[0]

    def to_array(self) -> np.ndarray:
        """Flat layout, 14 per arm: actual 6, desired 6, widths 2."""
        parts = []
        for a in range(self.arms):
            parts.extend(
                [
                    self.actual_pose[a],
                    self.desired_pose[a],
                    [self.actual_width[a]],
                    [self.desired_width[a]],
                ]
            )
        return np.concatenate(parts)

    @staticmethod
    def from_array(values: np.ndarray) -> "ProprioVector":
        values = np.asarray(values, dtype=float).reshape(-1)
        if len(values) % 14 != 0:
            raise DomainError("proprio vector length must be a multiple of 14")
        arms = len(values) // 14
        per = values.reshape(arms, 14)
        return ProprioVector(
            actual_pose=per[:, 0:6].copy(),
            desired_pose=per[:, 6:12].copy(),
            actual_width=per[:, 12].copy(),
            desired_width=per[:, 13].copy(),
        )

    def action(self) -> np.ndarray:
        """Desired pose + width per arm: the 14-wide bimanual command."""
        return np.concatenate(
            [np.concatenate([self.desired_pose[a], [self.desired_width[a]]]) for a in range(self.arms)]
        )


@dataclass
class ObservationWindow:
    timestamps_us: tuple  # the two video-locked observation times
    frames: tuple  # two (H, W, 3) uint8 arrays
    audio: tuple  # two trailing sample windows, int16
    proprio: tuple  # two ProprioVector


@dataclass(frozen=True)
class ActionChunk:
    steps: np.ndarray  # (16, 14)

    def __post_init__(self):
        steps = np.asarray(self.steps, dtype=float)
        if steps.shape[0] != ACTION_HORIZON:
            raise DomainError(f"action chunks hold exactly {ACTION_HORIZON} steps")
        object.__setattr__(self, "steps", steps)


def _validate_runs(runs, spec: TaskSpec | None):
    if not runs:
        raise DomainError("metrics need at least one run")
    for run in runs:
        if spec is not None:
            if run.task != spec.name:
                raise DomainError(f"run for task {run.task!r} does not match {spec.name!r}")
            if not 0 <= run.completed <= spec.stage_count:
                raise DomainError("completed stages out of range")
            if run.success and run.completed != spec.stage_count:
                raise DomainError("a successful run must complete every stage")


def task_progress(runs, spec: TaskSpec) -> float:
    """Mean fraction of stages completed per run."""
    _validate_runs(runs, spec)
    return float(np.mean([run.completed / spec.stage_count for run in runs]))


def task_success(runs) -> float:
    """Mean binary success rate."""
    _validate_runs(runs, None)
    return float(np.mean([1.0 if run.success else 0.0 for run in runs]))


def format_percent(fraction: float) -> str:
    """Table formatting convention: integer percent, e.g. 0.81 -> '81%'."""
    return f"{int(round(fraction * 100))}%"


def receding_horizon_schedule(episode_length: int):
    """Prediction points every 8 steps, each executing 8 of its 16-step
    chunk (the final chunk may execute fewer); covers every index once."""
    if episode_length < ACTION_HORIZON:
        raise DomainError(f"episode must hold at least {ACTION_HORIZON} steps")
    schedule = []
    for k in range(0, episode_length, ACTIONS_TO_EXECUTE):
        execute = list(range(k, min(k + ACTIONS_TO_EXECUTE, episode_length)))
        schedule.append((k, execute))
    return schedule


def build_obs_window(
    reader: EpisodeReader,
    t_us: int,
    fps: float = 30.0,
    audio_window_s: float = AUDIO_WINDOW_S,
) -> ObservationWindow:
    """The two most recent aligned observations at or before `t_us`.

    Modalities are video-locked: each proprio record must sit within half
    a frame period of its video frame, and the trailing audio window must
    cover the time up to the frame with no internal gap.
    """
    tol = int(round(1_000_000 / fps / 2.0))

    video_ts = reader.timestamps(MSG_VIDEO)
    anchor_ts = [ts for ts in video_ts if ts <= t_us][-OBSERVATION_HISTORY:]
    if len(anchor_ts) < OBSERVATION_HISTORY:
        raise DomainError("insufficient history: need 2 frames at or before t")

    video_idx = {ts: i for i, ts in enumerate(video_ts)}
    frames = tuple(
        decode_video_payload(reader.get(MSG_VIDEO, video_idx[ts]).payload) for ts in anchor_ts
    )

    proprio_ts = reader.timestamps(MSG_PROPRIO)
    proprio = []
    for ts in anchor_ts:
        candidates = [(i, pts) for i, pts in enumerate(proprio_ts) if pts <= ts]
        if not candidates:
            raise DomainError("insufficient history: no proprio before frame")
        i, pts = candidates[-1]
        if abs(ts - pts) > tol:
            raise AlignmentError(f"proprio lags video by {ts - pts} us (tolerance {tol})")
        proprio.append(ProprioVector.from_array(decode_proprio_payload(reader.get(MSG_PROPRIO, i).payload)))

    audio_entries = []
    for i, ats in enumerate(reader.timestamps(MSG_AUDIO)):
        samples = decode_audio_payload(reader.get(MSG_AUDIO, i).payload)
        end = ats + len(samples) * 1_000_000 // SAMPLE_RATE
        audio_entries.append((ats, end, samples))

    windows = []
    n_window = int(round(audio_window_s * SAMPLE_RATE))
    for ts in anchor_ts:
        start = ts - int(audio_window_s * 1_000_000)
        covered_end = max((end for ats, end, _ in audio_entries if ats <= ts), default=None)
        if covered_end is None or ts - covered_end > tol:
            raise AlignmentError("audio stream lags the video frame beyond tolerance")
        buf = np.zeros(n_window, dtype=np.int16)
        expected = max(0, start)  # gaps only count inside the session span
        for ats, end, samples in sorted(audio_entries):
            if end <= start or ats >= ts:
                continue
            if ats > expected + tol:
                raise AlignmentError(f"audio gap of {ats - expected} us inside window")
            expected = max(expected, end)
            lo = max(ats, start)
            hi = min(end, ts)
            src0 = (lo - ats) * SAMPLE_RATE // 1_000_000
            count = (hi - lo) * SAMPLE_RATE // 1_000_000
            dst0 = (lo - start) * SAMPLE_RATE // 1_000_000
            buf[dst0 : dst0 + count] = samples[src0 : src0 + count]
        if expected < ts - tol:
            raise AlignmentError("audio coverage ends before the video frame")
        windows.append(buf)

    return ObservationWindow(
        timestamps_us=tuple(anchor_ts),
        frames=frames,
        audio=tuple(windows),
        proprio=tuple(proprio),
    )


def parse_task_spec(text: str) -> TaskSpec:
    """Parse 'name:stage_count' or 'name:stage_count:label1,label2,...'."""
    parts = text.split(":")
    if len(parts) < 2:
        raise DomainError("task spec must look like 'name:stages'")
    labels = tuple(parts[2].split(",")) if len(parts) > 2 and parts[2] else ()
    try:
        stages = int(parts[1])
    except ValueError as exc:
        raise DomainError(f"bad stage count {parts[1]!r}") from exc
    return TaskSpec(name=parts[0], stage_count=stages, stage_labels=labels)


def load_run_logs(path):
    """One JSON record per line: {"task":..., "completed":..., "success":...}."""
    runs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                runs.append(
                    RunLog(task=rec["task"], completed=int(rec["completed"]), success=bool(rec["success"]))
                )
            except (ValueError, KeyError) as exc:
                raise DomainError(f"{path}:{lineno}: bad run record: {exc}") from exc
    return runs
