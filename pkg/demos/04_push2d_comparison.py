"""A small four-way comparison on the pushing task, written to disk.

This writes per-seed CSVs, aggregate CSVs, a combined SVG chart and a JSON
manifest under runs/push2d_demo. Twenty epochs on two seeds take a few
minutes. The command line does the same thing:

    hercs compare --env push2d --algo her,her-cs,her-ebp,her-ebp-cs \
        --epochs 20 --seeds 1,2 --out runs/push2d_demo
"""

from hercs.harness import ExperimentConfig, compare, summary_table

cfg = ExperimentConfig(env="push2d", epochs=20, seeds=(1, 2))
summaries = compare(cfg, ["her", "her-cs", "her-ebp", "her-ebp-cs"], "runs/push2d_demo")
print(summary_table(summaries))
print("chart: runs/push2d_demo/comparison.svg")
