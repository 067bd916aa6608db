"""Denoising-objective training with an overfit gate and rollout scoring."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from .dataset import ACTIONS_TO_EXECUTE, ChunkDataset, receding_horizon_schedule
from .model import TactileDiffusionPolicy

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @staticmethod
    def fit(actions: np.ndarray) -> "Normalizer":
        flat = actions.reshape(-1, actions.shape[-1])
        return Normalizer(mean=flat.mean(axis=0), std=np.maximum(flat.std(axis=0), 1e-3))

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        return (x - torch.from_numpy(self.mean).float()) / torch.from_numpy(self.std).float()

    def decode(self, x: torch.Tensor) -> torch.Tensor:
        return x * torch.from_numpy(self.std).float() + torch.from_numpy(self.mean).float()


@dataclass
class TrainResult:
    losses: list = field(default_factory=list)
    ema_losses: list = field(default_factory=list)
    eval_initial: float = 0.0
    eval_final: float = 0.0
    steps_to_overfit: int = -1
    rollout_mse: float = float("nan")


def _probe(model, batch, actions_norm, probe_t, probe_noise):
    """Deterministic denoising loss on a frozen (t, noise) probe set."""
    with torch.no_grad():
        noisy = model.schedule.add_noise(actions_norm, probe_noise, probe_t)
        pred = model(batch, noisy, probe_t)
        return float(torch.mean((pred - actions_norm) ** 2))


def overfit_single_batch(
    model: TactileDiffusionPolicy,
    batch: dict,
    max_steps: int = 2000,
    lr: float = 1e-3,
    target_fraction: float = 0.05,
    seed: int = 0,
    normalizer: Normalizer | None = None,
) -> TrainResult:
    """Drive the denoising loss on one fixed batch below 5% of its initial
    value; aborts if the loss diverges past 10x initial.
    """
    torch.manual_seed(seed)
    result = TrainResult()
    actions = batch["actions"]
    norm = normalizer or Normalizer.fit(actions.numpy())
    actions_norm = norm.encode(actions)
    b = actions.shape[0]

    gen = torch.Generator().manual_seed(seed)
    probe_t = torch.randint(0, model.schedule.steps, (b,), generator=gen)
    probe_noise = torch.randn(actions_norm.shape, generator=gen)
    result.eval_initial = _probe(model, batch, actions_norm, probe_t, probe_noise)

    opt = torch.optim.Adam(model.parameters(), lr=lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max_steps, eta_min=lr / 20)
    ema = None
    for step in range(1, max_steps + 1):
        t = torch.randint(0, model.schedule.steps, (b,), generator=gen)
        noise = torch.randn(actions_norm.shape, generator=gen)
        noisy = model.schedule.add_noise(actions_norm, noise, t)
        pred = model(batch, noisy, t)
        loss = torch.mean((pred - actions_norm) ** 2)
        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()
        val = float(loss.detach())
        result.losses.append(val)
        ema = val if ema is None else 0.98 * ema + 0.02 * val
        result.ema_losses.append(ema)
        if not np.isfinite(val) or (val > 10.0 * max(result.eval_initial, 1e-8) and step > 20):
            raise TrainingDiverged(
                f"loss {val:.4f} vs initial {result.eval_initial:.4f} at step {step}"
            )
        if step % 50 == 0 or step == max_steps:
            current = _probe(model, batch, actions_norm, probe_t, probe_noise)
            if current < target_fraction * result.eval_initial:
                result.steps_to_overfit = step
                result.eval_final = current
                return result
    result.eval_final = _probe(model, batch, actions_norm, probe_t, probe_noise)
    return result


def rollout_mse(model: TactileDiffusionPolicy, dataset: ChunkDataset, normalizer: Normalizer, seed: int = 0) -> float:
    """Receding-horizon rollout against a recorded episode.

    Predicts a 16-step chunk at every 8th frame and scores the executed 8
    steps against the recorded actions.
    """
    ep = dataset.episodes[0]
    t_len = len(ep.timestamps)
    gen = torch.Generator().manual_seed(seed)
    errors = []
    for start, execute in receding_horizon_schedule(t_len):
        sample_idx = min(start, len(dataset) - 1)
        batch = dataset.batch([sample_idx])
        pred = normalizer.decode(model.sample_actions(batch, generator=gen))[0].numpy()
        for j, frame_idx in enumerate(execute):
            if j >= ACTIONS_TO_EXECUTE or frame_idx >= t_len:
                break
            errors.append((pred[j] - ep.actions[frame_idx]) ** 2)
    return float(np.mean(errors))


def train_and_eval(
    model: TactileDiffusionPolicy,
    dataset: ChunkDataset,
    steps: int = 300,
    batch_size: int = 8,
    lr: float = 1e-3,
    seed: int = 0,
) -> TrainResult:
    """Short training run over the dataset plus a rollout score."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    torch.manual_seed(seed)
    gen = torch.Generator().manual_seed(seed)
    all_actions = np.concatenate([ep.actions for ep in dataset.episodes])
    norm = Normalizer.fit(all_actions)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    result = TrainResult()
    ema = None
    initial = None
    for step in range(1, steps + 1):
        idx = torch.randint(0, len(dataset), (min(batch_size, len(dataset)),), generator=gen)
        batch = dataset.batch(idx.tolist())
        actions_norm = norm.encode(batch["actions"])
        t = torch.randint(0, model.schedule.steps, (actions_norm.shape[0],), generator=gen)
        noise = torch.randn(actions_norm.shape, generator=gen)
        noisy = model.schedule.add_noise(actions_norm, noise, t)
        pred = model(batch, noisy, t)
        loss = torch.mean((pred - actions_norm) ** 2)
        opt.zero_grad()
        loss.backward()
        opt.step()
        val = float(loss.detach())
        initial = initial if initial is not None else val
        if not np.isfinite(val) or (val > 10.0 * max(initial, 1e-8) and step > 20):
            raise TrainingDiverged(f"loss {val:.4f} diverged at step {step}")
        result.losses.append(val)
        ema = val if ema is None else 0.98 * ema + 0.02 * val
        result.ema_losses.append(ema)
    result.eval_initial = initial
    result.eval_final = ema
    result.rollout_mse = rollout_mse(model, dataset, norm, seed=seed)
    return result
