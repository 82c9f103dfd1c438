"""Corridor navigation workbench.

A deterministic 2D corridor simulator with moving pedestrians, a two-level
control stack (imitation-learned velocity-command navigator over an
RL-trained gait tracker), classical baselines (DWA, PD set-point tracking,
a lightweight MPC), demonstration collection, and benchmark harnesses.
"""

__version__ = "0.1.0"
