"""Command-line interface: run experiments, sweeps, and reporting.

Exit codes: 0 on success, 1 on fatal error, 2 when a sweep finished with
some failed rows. Output directories honor the POISONLAB_OUTPUT_ROOT
environment variable as a root override for relative paths.
"""

from __future__ import annotations

import argparse
import glob
import json
import sys
from pathlib import Path

import yaml

from .data import gen_synthetic, load_split, write_points_csv
from .experiment import (
    ExperimentConfig,
    InsufficientAxesError,
    SweepRow,
    emit_plot_data,
    expand_sweep_doc,
    resolve_output_dir,
    run_experiment,
    run_sweep,
    write_report,
)
from .learner import pretrain


def _load_config_doc(path: str) -> dict:
    with open(path) as fh:
        return yaml.safe_load(fh)


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.from_dict(_load_config_doc(args.config))
    result = run_experiment(cfg)
    print(json.dumps(result.to_dict(), indent=2))
    return 0


def _cmd_sweep(args) -> int:
    paths = sorted(p for pattern in args.configs for p in glob.glob(pattern))
    if not paths:
        print(f"no config files match {args.configs}", file=sys.stderr)
        return 1
    configs = []
    for p in paths:
        configs.extend(expand_sweep_doc(_load_config_doc(p)))
    rows = run_sweep(configs, parallelism=args.parallelism)
    report_path = write_report(rows, args.out)
    print(f"report: {report_path}")
    failures = [r for r in rows if r.error]
    for r in failures:
        print(f"  FAILED {r.config.dataset.name}: {r.error}", file=sys.stderr)
    return 2 if failures else 0


def _cmd_gen_data(args) -> int:
    points = gen_synthetic(args.size, args.seed, args.d, noise=args.noise)
    write_points_csv(points, args.out, header_comment=(
        f"synthetic size={args.size} seed={args.seed} d={args.d} noise={args.noise}"
    ))
    print(f"wrote {len(points)} points to {args.out}")
    return 0


def _cmd_attack(args) -> int:
    cfg = ExperimentConfig.from_dict(_load_config_doc(args.config))
    from .experiment import _dataset_with_seed, build_attack_stream

    split = load_split(_dataset_with_seed(cfg))
    schedule = cfg.schedule.build(split.pretrain, cfg.reg_c)
    theta0 = pretrain(split.pretrain, schedule, cfg.reg_c, cfg.pretrain_epochs)
    stream = build_attack_stream(cfg, split.train, theta0, schedule)
    out_dir = resolve_output_dir(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    chash = cfg.config_hash()
    write_points_csv(
        stream.points, out_dir / "stream.csv",
        header_comment=f"config_hash: {chash}",
    )
    from .attacks import save_poison_ground_truth

    save_poison_ground_truth(stream, out_dir / "poisoned_indices.json")
    print(f"wrote poisoned stream ({len(stream.poisoned_indices)} poison "
          f"points) to {out_dir}")
    return 0


def _collect_rows(results_dir: str) -> list[SweepRow]:
    rows = []
    for path in sorted(Path(results_dir).rglob("result.json")):
        doc = json.loads(path.read_text())
        # Rebuild minimal row context from the persisted result extras.
        rows.append(_row_from_result_doc(doc))
    return rows


def _row_from_result_doc(doc: dict) -> SweepRow:
    from .data import TABLE_ROSTER, DatasetSpec, SplitSizes, SyntheticSource
    from .defense import DefenseConfig
    from .experiment import AttackSpec, RunResult, ScheduleSpec

    extras = doc.get("extras", {})
    lr = extras.get("lr", "0.01")
    sched = (
        ScheduleSpec(kind="optimal")
        if lr == "optimal"
        else ScheduleSpec(kind="constant", eta=float(lr))
    )
    name = extras.get("dataset", "unknown")
    # Placeholder spec for display only; roster-named datasets must carry
    # their published sizes to pass validation.
    d, pre, train, test = TABLE_ROSTER.get(name, (1, 1, 1, 1))
    cfg = ExperimentConfig(
        dataset=DatasetSpec(
            name=name,
            d=d,
            sizes=SplitSizes(pretrain=pre, train=train, test=test),
            source=SyntheticSource(),
        ),
        attack=AttackSpec(kind=extras.get("attack", "none")),
        defense=DefenseConfig(mode=extras.get("defense", "none")),
        schedule=sched,
        budget_fraction=float(extras.get("budget_fraction", 0.0)),
    )
    result = RunResult(
        test_accuracy=doc["test_accuracy"],
        retained_clean_fraction=doc["retained_clean_fraction"],
        retained_poison_count=doc["retained_poison_count"],
        poison_count=doc.get("poison_count", 0),
        trace_path=doc.get("trace_path", ""),
        wall_time=doc.get("wall_time", 0.0),
        config_hash=doc.get("config_hash", ""),
        extras=extras,
    )
    return SweepRow(cfg, result, None)


def _cmd_report(args) -> int:
    rows = _collect_rows(args.results_dir)
    if not rows:
        print(f"no result.json files under {args.results_dir}", file=sys.stderr)
        return 1
    path = write_report(rows, args.out or args.results_dir)
    print(f"report: {path}")
    return 0


def _cmd_plot(args) -> int:
    rows = _collect_rows(args.results_dir)
    if not rows:
        print(f"no result.json files under {args.results_dir}", file=sys.stderr)
        return 1
    try:
        paths = emit_plot_data(rows, args.out or args.results_dir)
    except InsufficientAxesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        print(f"plot data: {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poisonlab",
        description="Online learning under data poisoning: attacks, "
        "sanitization, and the influence-based defense.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a sweep of config files")
    p_sweep.add_argument("configs", nargs="+", help="config file globs")
    p_sweep.add_argument("--parallelism", type=int, default=1)
    p_sweep.add_argument("--out", default="results/sweep")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_gen = sub.add_parser("gen-data", help="generate a synthetic dataset CSV")
    p_gen.add_argument("--size", type=int, required=True)
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--d", type=int, required=True)
    p_gen.add_argument("--noise", type=float, default=1.2)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=_cmd_gen_data)

    p_atk = sub.add_parser("attack", help="emit the poisoned stream only")
    p_atk.add_argument("config")
    p_atk.set_defaults(func=_cmd_attack)

    p_rep = sub.add_parser("report", help="aggregate results into a report")
    p_rep.add_argument("results_dir")
    p_rep.add_argument("--out", default=None)
    p_rep.set_defaults(func=_cmd_report)

    p_plot = sub.add_parser("plot", help="emit accuracy-vs-LR plot data")
    p_plot.add_argument("results_dir")
    p_plot.add_argument("--out", default=None)
    p_plot.set_defaults(func=_cmd_plot)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
