"""Configuration-driven experiment runs, sweeps, reports, and plot data.

A run is fully determined by its config: dataset spec, attack, defense,
learning-rate schedule, poison budget, and seeds. Every output file
embeds the config hash so results can be traced back to the exact
configuration that produced them.
"""

from __future__ import annotations

import concurrent.futures
import csv as csv_mod
import hashlib
import json
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .attacks import (
    AttackBudget,
    AttackerObjective,
    PoisonedStream,
    attack_positions,
    online_attack,
    save_poison_ground_truth,
    simplistic_attack,
)
from .data import (
    CsvSource,
    DatasetSpec,
    SplitSizes,
    SyntheticSource,
    load_split,
    write_points_csv,
)
from .defense import DefenseConfig, run_defended_stream
from .learner import (
    ConstantRate,
    LearnerState,
    LearningRateSchedule,
    ogd_step,
    optimal_rate_for,
    pretrain,
)
from .model import LabeledPoint, ModelParams, accuracy

OUTPUT_ROOT_ENV = "POISONLAB_OUTPUT_ROOT"


class InsufficientAxesError(Exception):
    pass


@dataclass(frozen=True)
class ScheduleSpec:
    kind: Literal["constant", "optimal"] = "constant"
    eta: float = 0.01

    def build(
        self, probe: Sequence[LabeledPoint], reg_c: float
    ) -> LearningRateSchedule:
        if self.kind == "constant":
            return ConstantRate(self.eta)
        return optimal_rate_for(probe, reg_c)

    @property
    def label(self) -> str:
        return "optimal" if self.kind == "optimal" else f"{self.eta:g}"


@dataclass(frozen=True)
class AttackSpec:
    kind: Literal["none", "simplistic", "online"] = "none"
    eps: float = 0.05  # simplistic convergence tolerance
    alpha: float = 2.0  # online ascent rate
    inner_steps: int = 20
    subset_size: int = 50
    objective: Literal["neg_accuracy", "total_loss"] = "neg_accuracy"
    position_policy: Literal["interleaved", "end"] = "interleaved"
    prefix_only: bool = False


@dataclass(frozen=True)
class Seeds:
    data: int = 0
    attack: int = 7
    defense: int = 11


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec
    attack: AttackSpec = AttackSpec()
    defense: DefenseConfig = DefenseConfig(mode="none")
    schedule: ScheduleSpec = ScheduleSpec()
    budget_fraction: float = 0.10
    reg_c: float = 0.01
    pretrain_epochs: int = 1
    seeds: Seeds = Seeds()
    output_dir: str = "results/run"

    def to_dict(self) -> dict:
        src = self.dataset.source
        if isinstance(src, SyntheticSource):
            source = {
                "kind": "synthetic",
                "seeds": list(src.seeds),
                "noise": src.noise,
                "spread": src.spread,
            }
        else:
            source = {
                "kind": "csv",
                "path": src.path,
                "label_column": src.label_column,
                "positive_label": src.positive_label,
                "shuffle_seed": src.shuffle_seed,
                "reduce_to": src.reduce_to,
                "skip_bad_rows": src.skip_bad_rows,
                "drop_columns": list(src.drop_columns),
            }
        return {
            "dataset": {
                "name": self.dataset.name,
                "d": self.dataset.d,
                "sizes": {
                    "pretrain": self.dataset.sizes.pretrain,
                    "train": self.dataset.sizes.train,
                    "validation": self.dataset.sizes.validation,
                    "test": self.dataset.sizes.test,
                },
                "source": source,
            },
            "attack": {
                "kind": self.attack.kind,
                "eps": self.attack.eps,
                "alpha": self.attack.alpha,
                "inner_steps": self.attack.inner_steps,
                "subset_size": self.attack.subset_size,
                "objective": self.attack.objective,
                "position_policy": self.attack.position_policy,
                "prefix_only": self.attack.prefix_only,
            },
            "defense": self.defense.to_dict(),
            "schedule": {"kind": self.schedule.kind, "eta": self.schedule.eta},
            "budget_fraction": self.budget_fraction,
            "reg_c": self.reg_c,
            "pretrain_epochs": self.pretrain_epochs,
            "seeds": {
                "data": self.seeds.data,
                "attack": self.seeds.attack,
                "defense": self.seeds.defense,
            },
            "output_dir": self.output_dir,
        }

    @staticmethod
    def from_dict(doc: dict) -> "ExperimentConfig":
        ds = doc["dataset"]
        src_doc = ds.get("source", {"kind": "synthetic"})
        if src_doc["kind"] == "synthetic":
            source: SyntheticSource | CsvSource = SyntheticSource(
                seeds=tuple(src_doc.get("seeds", (0, 1, 2, 3))),
                noise=float(src_doc.get("noise", 1.2)),
                spread=src_doc.get("spread", "e1"),
            )
        else:
            seed = src_doc.get("shuffle_seed")
            source = CsvSource(
                path=src_doc["path"],
                label_column=src_doc["label_column"],
                positive_label=str(src_doc["positive_label"]),
                shuffle_seed=None if seed is None else int(seed),
                reduce_to=src_doc.get("reduce_to"),
                skip_bad_rows=bool(src_doc.get("skip_bad_rows", False)),
                drop_columns=tuple(src_doc.get("drop_columns", ())),
            )
        sizes = ds["sizes"]
        dataset = DatasetSpec(
            name=ds["name"],
            d=int(ds["d"]),
            sizes=SplitSizes(
                pretrain=int(sizes["pretrain"]),
                train=int(sizes["train"]),
                test=int(sizes["test"]),
                validation=int(sizes.get("validation", 0)),
            ),
            source=source,
        )
        atk = doc.get("attack", {})
        dfs = doc.get("defense", {})
        sch = doc.get("schedule", {})
        seeds = doc.get("seeds", {})
        return ExperimentConfig(
            dataset=dataset,
            attack=AttackSpec(
                kind=atk.get("kind", "none"),
                eps=float(atk.get("eps", 0.05)),
                alpha=float(atk.get("alpha", 2.0)),
                inner_steps=int(atk.get("inner_steps", 20)),
                subset_size=int(atk.get("subset_size", 50)),
                objective=atk.get("objective", "neg_accuracy"),
                position_policy=atk.get("position_policy", "interleaved"),
                prefix_only=bool(atk.get("prefix_only", False)),
            ),
            defense=DefenseConfig(
                mode=dfs.get("mode", "none"),
                eta_def=float(dfs.get("eta_def", 0.05)),
                w_inf=int(dfs.get("w_inf", 10)),
                slab_quantile=float(dfs.get("slab_quantile", 0.95)),
                inf_max_steps=int(dfs.get("inf_max_steps", 25)),
                damping=float(dfs.get("damping", 0.0)),
                hessian_refresh=int(dfs.get("hessian_refresh", 25)),
                hessian_reference=dfs.get(
                    "hessian_reference", "pretrain_plus_stream"
                ),
                project_box_first=bool(dfs.get("project_box_first", True)),
            ),
            schedule=ScheduleSpec(
                kind=sch.get("kind", "constant"), eta=float(sch.get("eta", 0.01))
            ),
            budget_fraction=float(doc.get("budget_fraction", 0.10)),
            reg_c=float(doc.get("reg_c", 0.01)),
            pretrain_epochs=int(doc.get("pretrain_epochs", 1)),
            seeds=Seeds(
                data=int(seeds.get("data", 0)),
                attack=int(seeds.get("attack", 7)),
                defense=int(seeds.get("defense", 11)),
            ),
            output_dir=str(doc.get("output_dir", "results/run")),
        )

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class RunResult:
    test_accuracy: float
    retained_clean_fraction: float
    retained_poison_count: int
    poison_count: int
    trace_path: str
    wall_time: float
    config_hash: str
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "test_accuracy": self.test_accuracy,
            "retained_clean_fraction": self.retained_clean_fraction,
            "retained_poison_count": self.retained_poison_count,
            "poison_count": self.poison_count,
            "trace_path": self.trace_path,
            "wall_time": self.wall_time,
            "extras": self.extras,
        }


def resolve_output_dir(cfg: ExperimentConfig) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    out = Path(cfg.output_dir)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def build_attack_stream(
    cfg: ExperimentConfig,
    train: Sequence[LabeledPoint],
    theta0: ModelParams,
    schedule: LearningRateSchedule,
) -> PoisonedStream:
    budget = AttackBudget.from_fraction(cfg.budget_fraction, len(train))
    atk = cfg.attack
    if atk.kind == "none" or budget.k == 0:
        return PoisonedStream(list(train), [], {"attack": "none"})
    if atk.kind == "simplistic":
        state = LearnerState(theta0, schedule)
        for p in train:
            state = ogd_step(state, p)
        target = state.params.with_theta(-state.params.theta)
        return simplistic_attack(
            train, theta0, target, budget, atk.eps, schedule, cfg.reg_c
        )
    if atk.kind == "online":
        positions = attack_positions(len(train), budget.k, atk.position_policy)
        objective = AttackerObjective(tuple(train), atk.objective)
        return online_attack(
            train,
            positions,
            objective,
            alpha=atk.alpha,
            inner_steps=atk.inner_steps,
            schedule=schedule,
            reg_c=cfg.reg_c,
            seed=cfg.seeds.attack,
            theta0=theta0,
            subset_size=atk.subset_size,
            prefix_only=atk.prefix_only,
        )
    raise ValueError(f"unknown attack kind {atk.kind!r}")


def _dataset_with_seed(cfg: ExperimentConfig) -> DatasetSpec:
    # CSV sources without an explicit shuffle seed inherit the
    # experiment's data seed; synthetic sources carry their own quadruple.
    src = cfg.dataset.source
    if isinstance(src, CsvSource) and src.shuffle_seed is None:
        return replace(
            cfg.dataset, source=replace(src, shuffle_seed=cfg.seeds.data)
        )
    return cfg.dataset


def run_experiment(cfg: ExperimentConfig, persist: bool = True) -> RunResult:
    """Load data, pretrain, attack, run the defended stream, and evaluate."""
    start = time.perf_counter()
    chash = cfg.config_hash()
    split = load_split(_dataset_with_seed(cfg))
    schedule = cfg.schedule.build(split.pretrain, cfg.reg_c)
    theta0 = pretrain(
        split.pretrain, schedule, cfg.reg_c, epochs=cfg.pretrain_epochs
    )
    stream = build_attack_stream(cfg, split.train, theta0, schedule)
    trace = run_defended_stream(
        stream.points, split.pretrain, cfg.defense, schedule, cfg.reg_c,
        theta0=theta0,
    )

    is_poison = stream.is_poison()
    clean_total = int((~is_poison).sum())
    accepted = np.array([r.slab_accepted for r in trace.records])
    retained_clean = int((accepted & ~is_poison).sum())
    retained_poison = int((accepted & is_poison).sum())

    test_acc = accuracy(trace.final_params, split.test)
    assert 0.0 <= test_acc <= 1.0

    out_dir = resolve_output_dir(cfg)
    trace_path = out_dir / "trace.jsonl"
    if persist:
        out_dir.mkdir(parents=True, exist_ok=True)
        trace.write_jsonl(trace_path, header={"config_hash": chash})
        write_points_csv(
            stream.points, out_dir / "stream.csv",
            header_comment=f"config_hash: {chash}",
        )
        save_poison_ground_truth(stream, out_dir / "poisoned_indices.json")

    result = RunResult(
        test_accuracy=test_acc,
        retained_clean_fraction=retained_clean / clean_total if clean_total else 1.0,
        retained_poison_count=retained_poison,
        poison_count=len(stream.poisoned_indices),
        trace_path=str(trace_path),
        wall_time=time.perf_counter() - start,
        config_hash=chash,
        extras={
            "dataset": cfg.dataset.name,
            "attack": cfg.attack.kind,
            "defense": cfg.defense.mode,
            "lr": cfg.schedule.label,
            "budget_fraction": cfg.budget_fraction,
            "attack_metadata": stream.metadata,
            "slab": trace.slab.to_dict() if trace.slab is not None else None,
        },
    )
    assert 0.0 <= result.retained_clean_fraction <= 1.0
    if persist:
        (out_dir / "result.json").write_text(
            json.dumps(result.to_dict(), indent=2) + "\n"
        )
    return result


@dataclass
class SweepRow:
    config: ExperimentConfig
    result: RunResult | None
    error: str | None

    def report_cells(self) -> dict:
        cells = {
            "dataset": self.config.dataset.name,
            "attack": self.config.attack.kind,
            "defense": self.config.defense.mode,
            "lr": self.config.schedule.label,
            "budget": self.config.budget_fraction,
            "accuracy": "",
            "retained_clean_fraction": "",
            "retained_poison_count": "",
            "error": self.error or "",
        }
        if self.result is not None:
            cells["accuracy"] = f"{self.result.test_accuracy:.6f}"
            cells["retained_clean_fraction"] = (
                f"{self.result.retained_clean_fraction:.6f}"
            )
            cells["retained_poison_count"] = str(self.result.retained_poison_count)
        return cells


def _run_one(cfg: ExperimentConfig) -> SweepRow:
    try:
        return SweepRow(cfg, run_experiment(cfg), None)
    except Exception as exc:  # noqa: BLE001 - per-row isolation is the contract
        return SweepRow(cfg, None, f"{type(exc).__name__}: {exc}")


def run_sweep(
    configs: Sequence[ExperimentConfig], parallelism: int = 1
) -> list[SweepRow]:
    """Run every config, isolating per-row failures; order is preserved."""
    if len(configs) == 0:
        raise ValueError("sweep needs at least one config")
    if parallelism <= 1 or len(configs) == 1:
        return [_run_one(c) for c in configs]
    with concurrent.futures.ProcessPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(_run_one, configs))


REPORT_FIELDS = [
    "dataset", "attack", "defense", "lr", "budget",
    "accuracy", "retained_clean_fraction", "retained_poison_count", "error",
]


def sweep_digest(rows: Sequence[SweepRow]) -> str:
    """Combined hash over the row configs, for aggregate file headers."""
    hashes = sorted(r.config.config_hash() for r in rows)
    return hashlib.sha256(",".join(hashes).encode()).hexdigest()[:16]


def write_report(rows: Sequence[SweepRow], out_dir: str | Path) -> Path:
    """CSV report plus a text table grouped dataset x defense over LR x attack."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digest = sweep_digest(rows)
    header = [f"# poisonlab sweep report config_digest={digest}"]
    if any(r.config.schedule.kind == "optimal" for r in rows):
        header.append(
            "# note: 'optimal' rows use this package's inverse-decay "
            "schedule sized from pre-train gradients; not comparable "
            "rate-for-rate with external implementations"
        )
    csv_path = out / "report.csv"
    with open(csv_path, "w", newline="") as fh:
        fh.write("\n".join(header) + "\n")
        writer = csv_mod.DictWriter(fh, fieldnames=REPORT_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row.report_cells())
    (out / "report.txt").write_text(
        "\n".join(header) + "\n" + format_report_table(rows)
    )
    return csv_path


def format_report_table(rows: Sequence[SweepRow]) -> str:
    lrs = sorted({r.config.schedule.label for r in rows}, key=_lr_sort_key)
    attacks = sorted({r.config.attack.kind for r in rows})
    cells: dict[tuple[str, str, str, str], str] = {}
    groups: list[tuple[str, str]] = []
    for r in rows:
        key = (r.config.dataset.name, r.config.defense.mode)
        if key not in groups:
            groups.append(key)
        val = f"{r.result.test_accuracy:.4f}" if r.result else "ERR"
        cells[key + (r.config.schedule.label, r.config.attack.kind)] = val

    header = ["dataset", "defense"] + [
        f"lr={lr}/{atk}" for lr in lrs for atk in attacks
    ]
    body = [
        [ds, mode] + [
            cells.get((ds, mode, lr, atk), "-") for lr in lrs for atk in attacks
        ]
        for ds, mode in groups
    ]
    widths = [
        max(len(h), *(len(row[i]) for row in body)) + 2 if body else len(h) + 2
        for i, h in enumerate(header)
    ]
    lines = ["".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.extend(
        "".join(c.ljust(w) for c, w in zip(row, widths)) for row in body
    )
    return "\n".join(lines) + "\n"


def _lr_sort_key(label: str):
    try:
        return (0, float(label))
    except ValueError:
        return (1, label)


def emit_plot_data(rows: Sequence[SweepRow], out_dir: str | Path) -> list[Path]:
    """Per (dataset, attack): accuracy-vs-learning-rate series for the
    undefended and defended runs, in a plain columnar format.

    Requires at least two learning rates; the undefended series comes from
    rows with defense mode "none", the defended series from the other rows.
    """
    lrs = sorted({r.config.schedule.label for r in rows}, key=_lr_sort_key)
    if len(lrs) < 2:
        raise InsufficientAxesError(
            f"plotting needs >= 2 learning rates, found {lrs}"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digest = sweep_digest(rows)
    paths = []
    pairs = sorted({(r.config.dataset.name, r.config.attack.kind) for r in rows})
    for ds, atk in pairs:
        lines = [
            f"# dataset={ds} attack={atk} config_digest={digest}",
            "# lr undefended defended",
        ]
        for lr in lrs:
            undef = defended = "nan"
            for r in rows:
                if (
                    r.config.dataset.name != ds
                    or r.config.attack.kind != atk
                    or r.config.schedule.label != lr
                    or r.result is None
                ):
                    continue
                if r.config.defense.mode == "none":
                    undef = f"{r.result.test_accuracy:.6f}"
                else:
                    defended = f"{r.result.test_accuracy:.6f}"
            lines.append(f"{lr} {undef} {defended}")
        path = out / f"{ds}_{atk}.dat"
        path.write_text("\n".join(lines) + "\n")
        paths.append(path)
    return paths


def expand_sweep_doc(doc: dict) -> list[ExperimentConfig]:
    """Expand a config document with a `sweep` section of templated axes.

    Each sweep key is a dotted path into the base document; each value is a
    list of settings. The cross product of all axes is expanded, and each
    expanded config's output_dir gains a unique suffix.
    """
    base = {k: v for k, v in doc.items() if k != "sweep"}
    axes = doc.get("sweep", {})
    if not axes:
        return [ExperimentConfig.from_dict(base)]
    keys = list(axes.keys())
    configs: list[ExperimentConfig] = []

    def assign(target: dict, dotted: str, value) -> None:
        parts = dotted.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = value

    def rec(i: int, current: dict) -> None:
        if i == len(keys):
            cfg = ExperimentConfig.from_dict(current)
            suffix = hashlib.sha256(
                json.dumps(current, sort_keys=True, default=str).encode()
            ).hexdigest()[:8]
            configs.append(
                replace(cfg, output_dir=str(Path(cfg.output_dir) / suffix))
            )
            return
        for value in axes[keys[i]]:
            nxt = json.loads(json.dumps(current))
            assign(nxt, keys[i], value)
            rec(i + 1, nxt)

    rec(0, json.loads(json.dumps(base)))
    return configs
