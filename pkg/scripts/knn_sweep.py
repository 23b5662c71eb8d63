#!/usr/bin/env python3
"""Sweep the soft-assignment neighbor count and report MAE/MSE per value.

Trains one weighted-encoding model per kappa on a shared synthetic dataset;
useful for picking the neighbor count the same way the per-dataset settings
were picked in the original comparative study.
"""

import argparse
import tempfile
from pathlib import Path

import crowdlaf as cl


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", help="dataset directory (default: a temp dir)")
    parser.add_argument("--frames", type=int, default=300)
    parser.add_argument("--split", type=int, default=120)
    parser.add_argument("--codebook-size", type=int, default=32)
    parser.add_argument("--kappas", default="1,2,3,5,8,12,20,32")
    parser.add_argument("--dataset-seed", type=int, default=11)
    parser.add_argument("--seed", type=int, default=5)
    args = parser.parse_args()

    out = Path(args.out) if args.out else Path(tempfile.mkdtemp(prefix="crowdlaf_"))
    template = cl.SceneSpec(
        height=48, width=64, channels=4, count=0, blob_radius=3.0, noise=0.05, seed=0
    )
    manifest, _ = cl.synth_dataset(
        out, template, frames=args.frames, count_range=(5, 50),
        seed=args.dataset_seed, split=args.split, radius_range=(1.5, 4.5),
    )

    print(f"{'kappa':>6}{'mae':>10}{'mse':>10}")
    for kappa in (int(v) for v in args.kappas.split(",")):
        config = cl.PipelineConfig(
            grid=(10, 10), pyramid=(2, 2), codebook_size=args.codebook_size,
            knn=kappa, pca_target=0.99, seed=args.seed,
        )
        bundle = cl.train(manifest, config)
        report, _ = cl.evaluate(manifest, bundle)
        print(f"{kappa:>6}{report.mae:>10.2f}{report.mse:>10.2f}")


if __name__ == "__main__":
    main()
