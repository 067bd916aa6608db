import numpy as np
import pytest

from conftest import write_synthetic_episode
from fingerclient.dataset import (
    ACTION_HORIZON,
    ChunkDataset,
    WindowConfig,
    load_episode_arrays,
    proprio_to_action,
    receding_horizon_schedule,
)

CONFIG = WindowConfig(image_size=32)


class TestChunkDataset:
    def test_chunk_start_count(self, synthetic_episode):
        ds = ChunkDataset([synthetic_episode], CONFIG)
        assert len(ds) == 100 - ACTION_HORIZON + 1  # 85

    def test_sample_shapes(self, synthetic_episode):
        ds = ChunkDataset([synthetic_episode], CONFIG)
        s = ds[0]
        assert s["tactile"].shape == (2, 32, 32, 3)
        assert s["scene"].shape == (2, 32, 32, 3)
        assert s["audio_mel"].shape[0] == 2
        assert s["audio_mel"].shape[2] == 64
        assert s["proprio"].shape == (2, 28)
        assert s["actions"].shape == (16, 14)

    def test_actions_are_desired_halves(self, synthetic_episode):
        ds = ChunkDataset([synthetic_episode], CONFIG)
        s = ds[10]
        k = 10
        expected0 = np.array([k, k + 1, k + 2, 0.1, 0.2, 0.3, 30.0 + k], dtype=np.float32)
        assert np.allclose(s["actions"][0, :7], expected0, atol=1e-5)
        assert np.allclose(s["actions"][0, 7:13], 0.0)
        assert s["actions"][0, 13] == pytest.approx(40.0)

    def test_history_pads_at_start(self, synthetic_episode):
        ds = ChunkDataset([synthetic_episode], CONFIG)
        first = ds[0]
        assert np.array_equal(first["tactile"][0], first["tactile"][1])
        later = ds[5]
        assert not np.array_equal(later["tactile"][0], later["tactile"][1])

    def test_short_episode_skipped_with_warning(self, tmp_path, caplog):
        short = write_synthetic_episode(tmp_path / "short.bin", n_frames=10)
        with caplog.at_level("WARNING"):
            ds = ChunkDataset([short], CONFIG)
        assert len(ds) == 0
        assert any("skipped" in rec.message for rec in caplog.records)

    def test_batch_collation(self, synthetic_episode):
        ds = ChunkDataset([synthetic_episode], CONFIG)
        batch = ds.batch([0, 1, 2])
        assert batch["actions"].shape == (3, 16, 14)
        assert batch["tactile"].dtype.is_floating_point


class TestProprioAction:
    def test_action_layout(self):
        vec = np.arange(28, dtype=float)
        action = proprio_to_action(vec)
        assert action.shape == (14,)
        assert np.allclose(action[:6], vec[6:12])
        assert action[6] == vec[13]
        assert np.allclose(action[7:13], vec[20:26])
        assert action[13] == vec[27]


class TestSchedule:
    def test_covers_every_index_once(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            t = int(rng.integers(16, 300))
            executed = [i for _, ex in receding_horizon_schedule(t) for i in ex]
            assert sorted(executed) == list(range(t))

    def test_prediction_points_every_8(self):
        sched = receding_horizon_schedule(24)
        assert [k for k, _ in sched] == [0, 8, 16]

    def test_too_short_raises(self):
        with pytest.raises(ValueError):
            receding_horizon_schedule(12)


class TestAudioWindows:
    def test_trailing_window_content(self, synthetic_episode):
        arrays = load_episode_arrays(synthetic_episode, CONFIG)
        # Synthetic audio chunk k holds the constant (k % 50) * 100; the mel
        # of a constant window is itself constant across frames.
        assert arrays.mels.shape[0] == 100
        assert arrays.mels.shape[2] == 64
        # The first frame (t=0) has an all-zero trailing window -> log floor.
        assert np.allclose(arrays.mels[0], arrays.mels[0].ravel()[0])
