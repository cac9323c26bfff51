"""Hindsight relabeling on the bit-flipping task.

With ten bits and a reward only for an exact match, a DQN that learns from
its own goals almost never sees a success. Relabeling each stored step with
a goal the episode actually reached turns most of those failures into useful
signal. This script trains both variants for a few epochs on one seed and
prints the two success curves side by side.

Run: python demos/01_bitflip_her_vs_vanilla.py
"""

import dataclasses

from hercs.harness import ExperimentConfig, run_suite

base = ExperimentConfig(env="bitflip:10", epochs=15, seeds=(1,))

curves = {}
for algo in ("vanilla", "her"):
    summary = run_suite(dataclasses.replace(base, algo=algo))
    curves[algo] = summary.mean

print("epoch  vanilla  her")
for epoch, (v, h) in enumerate(zip(curves["vanilla"], curves["her"])):
    print(f"{epoch:5d}  {v:7.2f}  {h:4.2f}")
