"""Console entry points: pt-client (stream consumer) and pt-train."""

from __future__ import annotations

import argparse
import sys

import numpy as np


def client_main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pt-client", description="Decode a live finger A/V stream")
    parser.add_argument("--connect", required=True, help="host:port of the stream server")
    parser.add_argument("--max-observations", type=int, default=0, help="stop after N observations (0 = until EOF)")
    args = parser.parse_args(argv)

    from .stream import connect_and_decode

    host, _, port = args.connect.rpartition(":")
    iterator, decoder = connect_and_decode((host or "127.0.0.1", int(port)))
    count = 0
    try:
        for obs in iterator:
            count += 1
            if count % 30 == 0:
                print(
                    f"obs {count}: t={obs.timestamp_us} us frame={obs.frame.shape} "
                    f"audio_rms={np.sqrt(np.mean(obs.audio.astype(float) ** 2)):.1f}"
                )
            if args.max_observations and count >= args.max_observations:
                break
    except (ConnectionError, OSError) as exc:
        print(f"stream error: {exc}", file=sys.stderr)
        return 3
    print(f"decoded observations: {count} (skipped corrupt frames: {decoder.skipped})")
    return 0


def train_main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pt-train", description="Train a toy tactile-diffusion policy on recorded episodes")
    parser.add_argument("episodes", nargs="+", help="episode container files")
    parser.add_argument("--variant", default="multi-crossatn",
                        choices=["visuo-proprio", "multi-concate", "multi-crossatn"])
    parser.add_argument("--steps", type=int, default=300)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    from .dataset import ChunkDataset
    from .model import build_model
    from .train import TrainingDiverged, train_and_eval

    dataset = ChunkDataset(args.episodes)
    if len(dataset) == 0:
        print("no usable samples in the given episodes", file=sys.stderr)
        return 2
    model = build_model(args.variant, seed=args.seed)
    try:
        result = train_and_eval(model, dataset, steps=args.steps, seed=args.seed)
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    print(f"variant:        {args.variant}")
    print(f"samples:        {len(dataset)}")
    print(f"initial loss:   {result.eval_initial:.4f}")
    print(f"final EMA loss: {result.eval_final:.4f}")
    print(f"rollout MSE:    {result.rollout_mse:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(client_main())
