"""End-to-end simulation loop: contact physics, rendering, audio, streaming
and recording, all on one deterministic session clock.

The physics advances on a fixed timestep; frames render at every 1/fps
boundary; audio chunks are finalized as the clock passes their span. The
loop is the single owner of all mutable state; everything published is an
immutable encoded message.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .contactaudio import CHUNK_SAMPLES, SAMPLE_RATE, synth_impact, synth_slip
from .core import RgbImage
from .elastomer import (
    initial_state,
    quasi_static_indent,
    sensing_grid,
    step_dynamics,
    tangential_update,
)
from .optics import default_optics, load_optics_config, pixel_plate_map, trace_all
from .photorender import FrameCompositor, normals_from_heightmap, shade
from .scenario import Scenario
from .streamproto import (
    MSG_AUDIO,
    MSG_METADATA,
    MSG_PROPRIO,
    MSG_VIDEO,
    EpisodeWriter,
    PIXFMT_RAW,
    PIXFMT_RLE,
    SequenceCounter,
    StreamServer,
    encode_audio_payload,
    encode_message,
    encode_proprio_payload,
    encode_video_payload,
)

logger = logging.getLogger(__name__)

__all__ = ["RunReport", "run_scenario", "synthetic_backgrounds"]

NOMINAL_GRIP_WIDTH_MM = 40.0


@dataclass
class RunReport:
    frames_rendered: int = 0
    chunks_emitted: int = 0
    proprio_messages: int = 0
    slip_events: int = 0
    impacts: int = 0
    saturated_steps: int = 0
    clients_served: int = 0
    backlog_disconnects: int = 0
    episode_path: str = ""
    duration_s: float = 0.0
    wall_time_s: float = 0.0

    @property
    def real_time_factor(self) -> float:
        return self.duration_s / self.wall_time_s if self.wall_time_s > 0 else float("inf")


def synthetic_backgrounds(pmap, seed: int = 0):
    """Deterministic peripheral scenes for the side windows.

    Smooth color gradients stand in for the environment around the finger.
    """
    rng = np.random.default_rng(seed)
    backgrounds = {}
    for win_id, (w_mm, h_mm) in enumerate(pmap.window_sizes):
        h, w = 48, max(2, int(48 * w_mm / max(h_mm, 1e-6)))
        gy, gx = np.mgrid[0:h, 0:w]
        phase = rng.uniform(0, 2 * np.pi, size=3)
        img = np.stack(
            [0.5 + 0.4 * np.sin(2 * np.pi * (gx / w + gy / (2 * h)) + phase[c]) for c in range(3)],
            axis=-1,
        )
        backgrounds[win_id] = RgbImage(img)
    return backgrounds


def _build_optics(scenario: Scenario):
    if scenario.optics_config == "default":
        return default_optics()
    path = Path(scenario.optics_config)
    if not path.is_absolute():
        path = scenario.base_dir / path
    return load_optics_config(path)


def _proprio_vector(kf, next_kf, depth_mm: float) -> np.ndarray:
    """Single-finger rig mapped onto the bimanual 28-wide layout: arm 0
    carries the scripted motion, arm 1 stays parked."""
    actual_pose = np.concatenate(
        [
            [kf.x, kf.y, kf.z],
            np.deg2rad([kf.rx_deg, kf.ry_deg, kf.rz_deg]),
        ]
    )
    desired_pose = np.concatenate(
        [
            [next_kf.x, next_kf.y, next_kf.z],
            np.deg2rad([next_kf.rx_deg, next_kf.ry_deg, next_kf.rz_deg]),
        ]
    )
    actual_w = max(0.0, NOMINAL_GRIP_WIDTH_MM - depth_mm)
    desired_w = max(0.0, NOMINAL_GRIP_WIDTH_MM - depth_mm)
    arm0 = np.concatenate([actual_pose, desired_pose, [actual_w, desired_w]])
    arm1 = np.zeros(14)
    arm1[12] = arm1[13] = NOMINAL_GRIP_WIDTH_MM
    return np.concatenate([arm0, arm1]).astype(np.float32)


def run_scenario(
    scenario: Scenario,
    listen=None,
    record_path=None,
    server: StreamServer | None = None,
    start_wallclock_us: int | None = None,
    settle_s: float = 0.0,
) -> RunReport:
    """Run the scenario end to end; deterministic given its seed.

    Publishes to an optional stream server and/or episode recorder. Errors
    below the loop finalize the partial episode before re-raising.
    """
    optics = _build_optics(scenario)
    trace = trace_all(optics)
    pmap = pixel_plate_map(optics, trace=trace)
    backgrounds = synthetic_backgrounds(pmap, seed=scenario.seed)

    grid = sensing_grid()
    state = initial_state(grid)
    indenter = scenario.indenter_spec.build(scenario.base_dir)
    pixfmt = PIXFMT_RAW if scenario.video_format == "raw" else PIXFMT_RLE
    compositor = FrameCompositor(backgrounds, pmap, grid.values.shape)

    own_server = False
    if server is None and listen is not None:
        server = StreamServer(listen=listen)
        own_server = True
    if settle_s > 0:
        time.sleep(settle_s)

    recorder = None
    if record_path is not None:
        recorder = EpisodeWriter(
            record_path,
            session_id=f"scenario-{scenario.seed}",
            config_hash=scenario.config_hash(),
            streams=["video", "audio", "proprio"],
            start_wallclock_us=start_wallclock_us,
        )

    counter = SequenceCounter()
    report = RunReport(duration_s=scenario.duration_s)
    wall_t0 = time.monotonic()

    def publish(msg):
        if server is not None:
            # Real-time deadline: an accelerated loop must not shed clients
            # that are keeping up with the wall clock.
            server.publish_bytes(
                encode_message(msg), deadline=wall_t0 + 1.0 + msg.timestamp_us / 1e6
            )
        if recorder is not None:
            recorder.append(msg)

    dt = scenario.physics_dt
    n_steps = int(round(scenario.duration_s / dt))
    frame_period_us = 1_000_000 / scenario.fps
    n_video_total = int(np.ceil(scenario.duration_s * scenario.fps - 1e-9))
    total_samples = int(round(scenario.duration_s * SAMPLE_RATE))
    audio_track = np.zeros(total_samples + SAMPLE_RATE)  # slack for decay tails
    slip_events = []
    slip_noise_index = 0
    next_frame = 0
    next_chunk_end = CHUNK_SAMPLES
    prev_contact = False
    prev_xy = None
    impacts = []

    try:
        meta = counter.make(
            MSG_METADATA,
            0,
            (
                '{"config_hash": "%s", "duration_s": %s, "fps": %s}'
                % (scenario.config_hash(), scenario.duration_s, scenario.fps)
            ).encode("utf-8"),
        )
        publish(meta)

        for step in range(n_steps + 1):
            t = step * dt
            t_us = int(round(t * 1_000_000))
            kf = scenario.interpolate(t)
            pose = kf.pose()
            ind = replace(indenter, pose=pose, force=kf.force)

            solved = quasi_static_indent(scenario.elastomer, ind, grid)
            if solved.saturated:
                report.saturated_steps += 1
            state = step_dynamics(state, solved.displacement, dt, scenario.elastomer)

            xy = np.array([kf.x, kf.y])
            delta = (xy - prev_xy) if prev_xy is not None else np.zeros(2)
            prev_xy = xy
            state, contact = tangential_update(
                state, delta, scenario.elastomer, solved.pressure, dt
            )
            in_contact = contact.contact_area > 0.0
            if in_contact and not prev_contact and kf.force > 0:
                impacts.append((t, kf.force))
                report.impacts += 1
            prev_contact = in_contact
            for ev in contact.slip_events:
                slip_events.append(ev)
                report.slip_events += 1

            # Render at each frame boundary inside the step interval.
            while next_frame < n_video_total and next_frame * frame_period_us <= t_us + 1e-6:
                frame_ts = int(round(next_frame * frame_period_us))
                normals = normals_from_heightmap(state.displacement)
                tactile = shade(normals, scenario.illumination, scenario.albedo)
                payload = encode_video_payload(compositor.render(tactile), pixfmt=pixfmt)
                publish(counter.make(MSG_VIDEO, frame_ts, payload))
                report.frames_rendered += 1

                nxt = scenario.interpolate(frame_ts / 1e6 + 1.0 / scenario.fps)
                proprio = _proprio_vector(kf, nxt, solved.penetration)
                publish(counter.make(MSG_PROPRIO, frame_ts, encode_proprio_payload(proprio)))
                report.proprio_messages += 1
                next_frame += 1

            # Finalize audio chunks whose span has fully elapsed.
            sim_samples = int(round(t * SAMPLE_RATE))
            while next_chunk_end <= sim_samples and next_chunk_end <= total_samples:
                start = next_chunk_end - CHUNK_SAMPLES
                slip_noise_index = _mix_events_into(
                    audio_track, impacts, slip_events, scenario, slip_noise_index
                )
                seg = np.clip(audio_track[start:next_chunk_end], -1.0, 1.0)
                pcm = np.round(seg * 32767).astype(np.int16)
                ts = start * 1_000_000 // SAMPLE_RATE
                publish(counter.make(MSG_AUDIO, ts, encode_audio_payload(pcm)))
                report.chunks_emitted += 1
                next_chunk_end += CHUNK_SAMPLES
    except Exception:
        if recorder is not None:
            recorder.close()
        if own_server and server is not None:
            server.stop()
        raise

    report.wall_time_s = time.monotonic() - wall_t0
    if recorder is not None:
        recorder.close()
        report.episode_path = str(record_path)
    if server is not None:
        if own_server:
            server.stop()
        report.clients_served = server.clients_served
        report.backlog_disconnects = server.backlog_disconnects
    return report


def _mix_events_into(track, impacts, slip_events, scenario: Scenario, slip_noise_index: int) -> int:
    """Render any pending impact/slip events into the shared audio track.

    Events are consumed exactly once (lists are drained); decay tails land
    in the slack region beyond the current chunk and get picked up later.
    Returns the advanced slip-noise index so every burst stays unique.
    """
    model = scenario.audio_model
    while impacts:
        t_ev, force = impacts.pop(0)
        wav, _ = synth_impact(force, model, duration=0.25)
        i0 = int(round(t_ev * SAMPLE_RATE))
        seg = wav[: max(0, len(track) - i0)]
        track[i0 : i0 + len(seg)] += seg
    if slip_events:
        bursts = synth_slip(
            slip_events,
            model,
            friction=scenario.elastomer.friction,
            seed=scenario.seed,
            first_index=slip_noise_index,
        )
        slip_noise_index += len(bursts)
        for burst in bursts:
            i0 = int(round(burst.start * SAMPLE_RATE))
            seg = burst.samples[: max(0, len(track) - i0)]
            track[i0 : i0 + len(seg)] += seg
        slip_events.clear()
    return slip_noise_index
