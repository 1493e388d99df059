#!/usr/bin/env python3
"""Robustness table for a trained checkpoint: noise / delay / blur / all / none."""

import sys

from ramavt.cli import main

CHECKPOINT = "checkpoints/acceptance/ramavt_depth_final.ckpt"

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--checkpoint" not in args:
        args = ["--checkpoint", CHECKPOINT] + args
    sys.exit(main(["perturb", "--input-format", "depth", "--seed", "1",
                   "--report-dir", "reports/acceptance"] + args))
