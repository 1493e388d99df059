#!/usr/bin/env python3
"""Desk-scale ablation matrix: Origin / Augment / SE / MHA / RAMAVT on RGBD.

The default here shortens training to 150 episodes per variant to keep the
five-variant sweep to a workday of CPU time; pass --episodes 300 to reproduce
the full-length configuration.
"""

import sys

from ramavt.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--episodes" not in args:
        args = ["--episodes", "150"] + args
    sys.exit(main(["ablate", "--input-format", "rgbd", "--seed", "1",
                   "--report-dir", "reports/ablation"] + args))
