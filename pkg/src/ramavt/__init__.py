"""Recurrent-attention deep Q-learning for active visual tracking.

A desk-scale stack: a kinematic chaser/target simulator with a software
depth/color renderer, a small reverse-mode autodiff engine, the RAMAVT
recurrent attention Q-network and its frame-stack baseline, hierarchical
episodic replay, a DRQN training loop, and an evaluation/ablation/robustness
harness.
"""

__version__ = "0.1.0"
