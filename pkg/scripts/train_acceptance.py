#!/usr/bin/env python3
"""Full-scale depth-input training run used by the acceptance suite.

All training hyperparameters are the package defaults (300 episodes, 64x64
depth observations, replay 50000 / warm-up 10000, target sync every 10
episodes, gamma 0.99).  Writes checkpoints/acceptance/ramavt_depth_final.ckpt
and reports/acceptance/train_ramavt_depth.csv, which
tests/test_acceptance.py reuses instead of retraining.

Expect several hours on a desktop CPU.
"""

import sys

from ramavt.cli import main

if __name__ == "__main__":
    sys.exit(main([
        "train",
        "--input-format", "depth",
        "--variant", "ramavt",
        "--seed", "1",
        "--checkpoint-dir", "checkpoints/acceptance",
        "--report-dir", "reports/acceptance",
    ] + sys.argv[1:]))
