#!/usr/bin/env python3
"""Accuracy-vs-learning-rate sweep on the six desk-scale datasets.

For each dataset, attack, learning rate, and defense mode, runs the full
pipeline (pretrain, poison, defended stream, test evaluation) and writes
the report CSV, the formatted table, and per-dataset plot data files.

The online attack places its poison at the stream tail, the semi-online
attacker's strongest placement on these datasets.
"""

import argparse
import sys
from pathlib import Path

from poisonlab.data import desk_suite
from poisonlab.defense import DefenseConfig
from poisonlab.experiment import (
    AttackSpec,
    ExperimentConfig,
    ScheduleSpec,
    emit_plot_data,
    run_sweep,
    write_report,
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/desk_sweep")
    parser.add_argument("--parallelism", type=int, default=1)
    parser.add_argument("--budget", type=float, default=0.10)
    parser.add_argument(
        "--attacks", nargs="+", default=["online"],
        choices=["simplistic", "online"],
    )
    args = parser.parse_args()

    schedules = [
        ScheduleSpec(kind="constant", eta=0.01),
        ScheduleSpec(kind="constant", eta=0.05),
        ScheduleSpec(kind="constant", eta=0.09),
        ScheduleSpec(kind="optimal"),
    ]
    configs = []
    for spec in desk_suite():
        for attack in args.attacks:
            for schedule in schedules:
                for mode in ("none", "slab_influence"):
                    configs.append(ExperimentConfig(
                        dataset=spec,
                        attack=AttackSpec(kind=attack, position_policy="end"),
                        defense=DefenseConfig(mode=mode),
                        schedule=schedule,
                        budget_fraction=args.budget,
                        output_dir=str(
                            Path(args.out) / "runs"
                            / f"{spec.name}_{attack}_{schedule.label}_{mode}"
                        ),
                    ))

    rows = run_sweep(configs, parallelism=args.parallelism)
    report = write_report(rows, args.out)
    plots = emit_plot_data(rows, Path(args.out) / "plots")
    print(f"report: {report}")
    print((Path(args.out) / "report.txt").read_text())
    for p in plots:
        print(f"plot data: {p}")
    failures = [r for r in rows if r.error]
    for r in failures:
        print(f"FAILED {r.config.dataset.name}: {r.error}", file=sys.stderr)
    return 2 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
