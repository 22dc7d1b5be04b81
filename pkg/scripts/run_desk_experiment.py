#!/usr/bin/env python3
"""Run the full desk-scale pipeline in one process.

Equivalent to chaining the CLI stages (gen-data ... report) but in memory,
so it is the quickest way to reproduce the headline numbers:

    python3 scripts/run_desk_experiment.py --out runs/desk --seed 0

Pass --quick for a tiny smoke-test configuration (finishes in under a
minute); the default configuration trains the anchor at CR=1/4 on 2,000
synthetic samples and takes roughly 10-15 minutes on one CPU core.
"""

import argparse
import json
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import torch

from csi_feedback.channel import ArrayDims, ScenarioConfig
from csi_feedback.decoder import TrainConfig
from csi_feedback.augment import AugmentConfig
from csi_feedback.experiment import ExperimentConfig, run_experiment, report


def desk_config(seed):
    return ExperimentConfig(
        anchor=ScenarioConfig(name="anchor"),
        new=ScenarioConfig(name="shifted", delay_offset_bins=16.0,
                           angle_offset=0.25),
        cr_list=[1 / 4],
        n_iters=3,
        channels=32,
        train=TrainConfig(epochs=50, lr_milestones=(30, 42)),
        transfer_train=TrainConfig(epochs=30),
        augment=AugmentConfig(angular_shift_range=(-8, 8),
                              delay_shift_range=(-3, 3), target_size=2000),
        n_train=2000,
        n_test=200,
        n_new_measured=200,
        search_delay_range=[-16, 16],
        search_angular_range=[-8, 8],
        seed=seed,
    )


def quick_config(seed):
    return ExperimentConfig(
        anchor=ScenarioConfig(name="anchor", num_paths=2, max_delay_bins=2.0),
        new=ScenarioConfig(name="shifted", num_paths=2, max_delay_bins=2.0,
                           delay_offset_bins=1.0),
        dims=ArrayDims(n_f=8, n_b=4, r_d=4),
        cr_list=[1 / 2],
        n_iters=2,
        channels=4,
        train=TrainConfig(epochs=5, batch_size=16),
        transfer_train=TrainConfig(epochs=3, batch_size=16),
        augment=AugmentConfig(angular_shift_range=(-1, 1),
                              delay_shift_range=(-1, 1), target_size=64),
        n_train=64,
        n_test=16,
        n_new_measured=16,
        search_max_samples=4,
        seed=seed,
    )


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="runs/desk")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--quick", action="store_true",
                        help="tiny smoke-test configuration")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args()

    torch.set_num_threads(max(1, os.cpu_count()))
    cfg = quick_config(args.seed) if args.quick else desk_config(args.seed)
    os.makedirs(args.out, exist_ok=True)
    cfg.to_json(os.path.join(args.out, "config.json"))

    t0 = time.time()
    rows = run_experiment(cfg, args.out, verbose=args.verbose)
    print(f"pipeline finished in {time.time() - t0:.1f} s")
    for r in rows:
        print(f"  {r['scenario']:<10} {r['method']:<18} CR={r['cr']:.3f} "
              f"NMSE={r['nmse_db']:.2f} dB")

    written = report(os.path.join(args.out, "results.csv"),
                     os.path.join(args.out, "report"))
    for path in written:
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
