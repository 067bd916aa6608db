import json
import struct
import zlib
from pathlib import Path

import numpy as np
import pytest

from fingerclient.wire import EPISODE_MAGIC, Message

PRIMARY_FIXTURES = Path(__file__).resolve().parents[2] / "tests" / "fixtures"


def encode_video_payload(rgb: np.ndarray) -> bytes:
    h, w = rgb.shape[:2]
    return struct.pack("<HHB", w, h, 0) + rgb.astype(np.uint8).tobytes()


def encode_audio_payload(samples: np.ndarray) -> bytes:
    return np.asarray(samples, dtype="<i2").tobytes()


def encode_proprio_payload(values: np.ndarray) -> bytes:
    return struct.pack("<B", 2) + np.asarray(values, dtype="<f4").tobytes()


def write_synthetic_episode(path, n_frames=100, frame_shape=(12, 16), fps=30.0, seed=0):
    """Minimal episode container written from the documented format alone."""
    rng = np.random.default_rng(seed)
    header = {"session_id": "synthetic", "start_wallclock_us": 0, "config_hash": "t", "streams": []}
    blob = json.dumps(header).encode()
    out = bytearray()
    out += EPISODE_MAGIC
    out += struct.pack("<I", len(blob))
    out += blob
    seqs = {0: 0, 1: 0, 2: 0}

    def emit(msg_type, ts, payload):
        msg = Message(msg_type, ts, seqs[msg_type], payload)
        seqs[msg_type] += 1
        out.extend(msg.encode())

    n_chunks = int(n_frames / fps * 50) + 2
    events = []
    for k in range(n_frames):
        ts = int(round(k * 1e6 / fps))
        events.append((ts, 1, 0, k))
        events.append((ts, 2, 2, k))
    for k in range(n_chunks):
        events.append(((k + 1) * 20_000, 0, 1, k))
    events.sort()
    for ts_emit, _, msg_type, k in events:
        if msg_type == 0:
            frame = rng.integers(0, 256, size=frame_shape + (3,), dtype=np.uint8)
            emit(0, int(round(k * 1e6 / fps)), encode_video_payload(frame))
        elif msg_type == 2:
            vec = np.zeros(28, dtype=np.float32)
            vec[6:12] = [k, k + 1, k + 2, 0.1, 0.2, 0.3]  # arm0 desired pose
            vec[13] = 30.0 + k  # arm0 desired width
            vec[12] = 30.0
            vec[26] = vec[27] = 40.0
            emit(2, int(round(k * 1e6 / fps)), encode_proprio_payload(vec))
        else:
            pcm = np.full(960, (k % 50) * 100, dtype=np.int16)
            emit(1, k * 20_000, encode_audio_payload(pcm))
    Path(path).write_bytes(bytes(out))
    return path


@pytest.fixture(scope="session")
def synthetic_episode(tmp_path_factory):
    path = tmp_path_factory.mktemp("episodes") / "synthetic.bin"
    return write_synthetic_episode(path)


@pytest.fixture(scope="session")
def recorded_episode(tmp_path_factory):
    """A real episode recorded by the simulator CLI (external interface)."""
    import subprocess
    import sys

    tmp = tmp_path_factory.mktemp("sim")
    scenario = tmp / "scenario.cfg"
    scenario.write_text(
        "[scenario]\n"
        "duration = 1.2\n"
        "seed = 11\n"
        "fps = 30\n"
        "video_format = rle\n"
        "[indenter]\n"
        "kind = sphere\n"
        "radius = 5.0\n"
        "[timeline]\n"
        "k0 = 0.0, 50, 12.5, 2, 0, 0, 0, 0\n"
        "k1 = 0.2, 50, 12.5, 0, 0, 0, 0, 1.5\n"
        "k2 = 0.9, 56, 12.5, 0, 0, 0, 0, 2.0\n"
        "k3 = 1.1, 56, 12.5, 1, 0, 0, 0, 0\n"
    )
    episode = tmp / "episode.bin"
    proc = subprocess.run(
        [sys.executable, "-m", "fingersim.cli", "simulate", "--scenario", str(scenario), "--record", str(episode)],
        capture_output=True,
        text=True,
        timeout=300,
    )
    assert proc.returncode == 0, proc.stderr
    return episode
