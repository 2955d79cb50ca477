#!/usr/bin/env python3
"""Defense-on-clean-data study on the seeded 2-D synthetic split.

Trains the streaming classifier on the clean synthetic stream three ways
(no defense, slab only, slab plus influence minimization) and reports
training-set accuracy for each, plus how many points the slab rejected
and the influence step perturbed.
"""

import argparse

from poisonlab.data import load_split, synthetic_study_spec
from poisonlab.defense import DefenseConfig, run_defended_stream
from poisonlab.learner import ConstantRate
from poisonlab.model import accuracy


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--eta", type=float, default=0.05)
    parser.add_argument("--reg-c", type=float, default=0.01)
    parser.add_argument("--eta-def", type=float, default=0.05)
    parser.add_argument("--w-inf", type=int, default=10)
    parser.add_argument("--slab-quantile", type=float, default=0.95)
    args = parser.parse_args()

    split = load_split(synthetic_study_spec())
    schedule = ConstantRate(args.eta)

    print(f"{'defense':>16}  {'train acc':>9}  {'rejected':>8}  {'perturbed':>9}")
    for mode in ("none", "slab", "slab_influence"):
        cfg = DefenseConfig(
            mode=mode,
            eta_def=args.eta_def,
            w_inf=args.w_inf,
            slab_quantile=args.slab_quantile,
        )
        trace = run_defended_stream(
            split.train, split.pretrain, cfg, schedule, args.reg_c
        )
        acc = accuracy(trace.final_params, split.train)
        rejected = sum(1 for r in trace.records if not r.slab_accepted)
        perturbed = sum(1 for r in trace.records if r.perturbed)
        print(f"{mode:>16}  {acc:9.3f}  {rejected:8d}  {perturbed:9d}")


if __name__ == "__main__":
    main()
