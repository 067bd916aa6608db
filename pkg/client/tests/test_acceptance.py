"""Secondary acceptance: policy mechanics and bit-exact interoperability
with the primary's published formats. Prints one PASS line per criterion.
"""

import json

import numpy as np
import pytest
import torch

from conftest import PRIMARY_FIXTURES
from fingerclient.model import CombinerConfig, build_model
from fingerclient.train import overfit_single_batch
from fingerclient.wire import Message, StreamDecoder

CFG = CombinerConfig(dim=96, image_size=32)


def ok(line):
    print(f"ACCEPT PASS: {line}")


def toy_batch(b=2, requires_grad=False):
    torch.manual_seed(3)
    batch = {
        "tactile": torch.rand(b, 2, 32, 32, 3),
        "scene": torch.rand(b, 2, 32, 32, 3),
        "audio_mel": torch.rand(b, 2, 98, 64),
        "proprio": torch.rand(b, 2, 28),
        "actions": torch.rand(b, 16, 14) * 50,
    }
    if requires_grad:
        for key in ("tactile", "scene", "audio_mel", "proprio"):
            batch[key].requires_grad_(True)
    return batch


def denoise_loss(model, batch):
    b = batch["actions"].shape[0]
    gen = torch.Generator().manual_seed(0)
    t = torch.randint(0, model.schedule.steps, (b,), generator=gen)
    noise = torch.randn(b, 16, 14, generator=gen)
    noisy = model.schedule.add_noise(batch["actions"], noise, t)
    return torch.mean((model(batch, noisy, t) - batch["actions"]) ** 2)


class TestPolicyMechanics:
    def test_forward_shape(self):
        for variant in ("visuo-proprio", "multi-concate", "multi-crossatn"):
            model = build_model(variant, CFG, seed=0)
            out = model(toy_batch(3), torch.randn(3, 16, 14), torch.zeros(3, dtype=torch.long))
            assert out.shape == (3, 16, 14)
        ok("forward pass yields (batch, 16, 14) action chunks for all three variants")

    def test_masked_modality_gradients_exactly_zero(self):
        model = build_model("visuo-proprio", CFG, seed=0)
        batch = toy_batch(requires_grad=True)
        denoise_loss(model, batch).backward()
        assert torch.count_nonzero(batch["tactile"].grad) == 0
        assert torch.count_nonzero(batch["audio_mel"].grad) == 0
        ok("visuo-proprio: gradients w.r.t. masked tactile and audio inputs are exactly zero")

    def test_gradient_flow_to_every_branch(self):
        model = build_model("multi-crossatn", CFG, seed=0)
        batch = toy_batch(requires_grad=True)
        denoise_loss(model, batch).backward()
        norms = {k: float(batch[k].grad.norm()) for k in ("tactile", "scene", "audio_mel", "proprio")}
        assert all(v > 0 for v in norms.values()), norms
        ok(
            "multi-crossatn: nonzero gradient reaches every modality branch "
            + str({k: f"{v:.2e}" for k, v in norms.items()})
        )

    def test_single_batch_overfit_all_variants(self):
        lines = []
        for variant in ("visuo-proprio", "multi-concate", "multi-crossatn"):
            model = build_model(variant, CFG, seed=0)
            result = overfit_single_batch(model, toy_batch(), max_steps=2000, lr=2e-3, seed=0)
            frac = result.eval_final / result.eval_initial
            assert result.steps_to_overfit != -1 and result.steps_to_overfit <= 2000
            assert frac < 0.05
            lines.append(f"{variant}: {100 * frac:.1f}% at step {result.steps_to_overfit}")
        ok("single-batch overfit below 5% of initial within 2000 steps (" + "; ".join(lines) + ")")


class TestInteroperability:
    def test_golden_fixture_decode_bit_exact(self):
        golden = json.loads((PRIMARY_FIXTURES / "golden_wire.json").read_text())
        for name, entry in golden.items():
            dec = StreamDecoder()
            msgs = dec.feed(bytes.fromhex(entry["hex"]))
            assert len(msgs) == 1 and dec.skipped == 0, name
            msg = msgs[0]
            assert msg.payload == bytes.fromhex(entry["payload_hex"])
            assert (
                Message(entry["msg_type"], entry["timestamp_us"], entry["seq"], msg.payload).encode().hex()
                == entry["hex"]
            )
        ok(f"client decodes and re-encodes all {len(golden)} primary golden fixtures bit-exactly")
