import numpy as np
import pytest
import torch

from fingerclient.dataset import ChunkDataset, WindowConfig
from fingerclient.model import CombinerConfig, build_model
from fingerclient.train import (
    Normalizer,
    TrainingDiverged,
    overfit_single_batch,
    train_and_eval,
)

CFG = CombinerConfig(dim=96, image_size=32)


def toy_batch(b=2):
    torch.manual_seed(3)
    return {
        "tactile": torch.rand(b, 2, 32, 32, 3),
        "scene": torch.rand(b, 2, 32, 32, 3),
        "audio_mel": torch.rand(b, 2, 98, 64),
        "proprio": torch.rand(b, 2, 28),
        "actions": torch.rand(b, 16, 14) * 50,
    }


class TestOverfit:
    @pytest.mark.parametrize("variant", ["visuo-proprio", "multi-concate", "multi-crossatn"])
    def test_single_batch_overfit_under_5_percent(self, variant):
        model = build_model(variant, CFG, seed=0)
        result = overfit_single_batch(model, toy_batch(), max_steps=2000, lr=2e-3, seed=0)
        assert result.steps_to_overfit != -1
        assert result.steps_to_overfit <= 2000
        assert result.eval_final < 0.05 * result.eval_initial

    def test_deterministic_loss_curve(self):
        a = overfit_single_batch(build_model("multi-concate", CFG, seed=1), toy_batch(), max_steps=60, lr=1e-3, seed=4)
        b = overfit_single_batch(build_model("multi-concate", CFG, seed=1), toy_batch(), max_steps=60, lr=1e-3, seed=4)
        assert a.losses == b.losses

    def test_divergence_aborts_with_diagnostics(self):
        model = build_model("multi-concate", CFG, seed=0)
        with pytest.raises(TrainingDiverged, match="step"):
            overfit_single_batch(model, toy_batch(), max_steps=2000, lr=0.9, seed=0)

    def test_ema_decreases_on_toy_data(self):
        model = build_model("multi-concate", CFG, seed=0)
        result = overfit_single_batch(model, toy_batch(), max_steps=400, lr=1e-3, seed=0, target_fraction=0.0)
        ema = result.ema_losses
        probes = [ema[k] for k in (50, 150, 250, 399)]
        assert all(b < a for a, b in zip(probes, probes[1:]))


class TestTrainAndEval:
    def test_short_training_run_with_rollout(self, recorded_episode):
        dataset = ChunkDataset([recorded_episode], WindowConfig(image_size=32))
        assert len(dataset) > 0
        model = build_model("multi-crossatn", CFG, seed=0)
        result = train_and_eval(model, dataset, steps=60, batch_size=4, seed=0)
        assert result.ema_losses[-1] < result.eval_initial
        assert np.isfinite(result.rollout_mse)

    def test_empty_dataset_rejected(self):
        ds = ChunkDataset([], WindowConfig(image_size=32))
        model = build_model("multi-concate", CFG, seed=0)
        with pytest.raises(ValueError):
            train_and_eval(model, ds, steps=5)


class TestNormalizer:
    def test_roundtrip(self):
        rng = np.random.default_rng(0)
        actions = rng.uniform(-30, 80, size=(50, 16, 14))
        norm = Normalizer.fit(actions)
        x = torch.from_numpy(actions[:4]).float()
        back = norm.decode(norm.encode(x))
        assert torch.allclose(back, x, atol=1e-4)
