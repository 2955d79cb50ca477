"""Dataset generation, CSV ingestion, preprocessing, and split management.

All features end up in [-1, 1] (the learner's feasible box) with labels in
{-1, +1}. CSV preprocessing computes min-max statistics on the pre-train
and train rows only, so validation and test rows never leak into the
scaling. Synthetic data uses numpy's PCG64 generator; a given (size,
seed, d) always yields the same points.
"""

from __future__ import annotations

import csv as csv_mod
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .model import LabeledPoint


class BadLabelCardinalityError(Exception):
    pass


class NonNumericFeatureError(Exception):
    pass


class InsufficientRowsError(Exception):
    pass


@dataclass(frozen=True)
class SplitSizes:
    pretrain: int
    train: int
    test: int
    validation: int = 0

    @property
    def total(self) -> int:
        return self.pretrain + self.train + self.validation + self.test


@dataclass(frozen=True)
class SyntheticSource:
    seeds: tuple[int, int, int, int] = (0, 1, 2, 3)  # pretrain/train/val/test
    noise: float = 1.2
    spread: Literal["e1", "all"] = "e1"


@dataclass(frozen=True)
class CsvSource:
    path: str
    label_column: int | str
    positive_label: str
    shuffle_seed: int | None = None  # None: the experiment's data seed
    reduce_to: int | None = None
    skip_bad_rows: bool = False
    drop_columns: tuple[int, ...] = ()  # raw indices, e.g. an id column


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    d: int
    sizes: SplitSizes
    source: SyntheticSource | CsvSource

    def __post_init__(self):
        roster = TABLE_ROSTER.get(self.name)
        if roster is not None:
            d, pre, train, test = roster
            got = (self.d, self.sizes.pretrain, self.sizes.train, self.sizes.test)
            if got != (d, pre, train, test):
                raise ValueError(
                    f"{self.name}: split sizes {got} do not match the "
                    f"published roster {(d, pre, train, test)}"
                )


@dataclass(frozen=True, eq=False)
class Split:
    pretrain: tuple[LabeledPoint, ...]
    train: tuple[LabeledPoint, ...]
    validation: tuple[LabeledPoint, ...]
    test: tuple[LabeledPoint, ...]


# Feature count and pretrain/train/test sizes of the six benchmark datasets.
TABLE_ROSTER: dict[str, tuple[int, int, int, int]] = {
    "australian": (14, 200, 300, 150),
    "banknote": (4, 200, 400, 572),
    "mnist_1v7": (50, 8000, 1000, 2163),
    "spambase": (57, 2000, 1000, 1519),
    "uci_breast_cancer": (9, 100, 400, 100),
    "fashion_mnist_bag_sandal": (50, 8000, 1000, 1000),
}


def gen_synthetic(
    size: int,
    seed: int,
    d: int,
    noise: float = 1.2,
    spread: Literal["e1", "all"] = "e1",
) -> list[LabeledPoint]:
    """Two clamped Gaussian blobs with near-balanced {-1,+1} labels.

    Class means sit at +/- 1.2/sqrt(d) along the first axis ("e1") or along
    the all-ones diagonal ("all", which keeps the class separation constant
    as d grows). Samples are mean + noise * N(0, I), clamped to the box.
    """
    if size < 2:
        raise ValueError("size must be >= 2")
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = np.random.default_rng(seed)
    n_pos = (size + 1) // 2
    offset = 1.2 / np.sqrt(d)
    mean = np.zeros(d)
    if spread == "all":
        mean[:] = offset
    else:
        mean[0] = offset
    raw = rng.standard_normal((size, d)) * noise
    labels = np.concatenate([np.ones(n_pos), -np.ones(size - n_pos)])
    xs = np.clip(raw + labels[:, None] * mean, -1.0, 1.0)
    order = rng.permutation(size)
    return [LabeledPoint(xs[i], int(labels[i])) for i in order]


def synthetic_split(spec: DatasetSpec) -> Split:
    src = spec.source
    assert isinstance(src, SyntheticSource)
    s = spec.sizes

    def gen(size: int, seed: int) -> tuple[LabeledPoint, ...]:
        if size == 0:
            return ()
        return tuple(gen_synthetic(size, seed, spec.d, src.noise, src.spread))

    return Split(
        gen(s.pretrain, src.seeds[0]),
        gen(s.train, src.seeds[1]),
        gen(s.validation, src.seeds[2]),
        gen(s.test, src.seeds[3]),
    )


def make_split(
    data: Sequence[LabeledPoint], sizes: SplitSizes, shuffle_seed: int
) -> Split:
    """Seeded shuffle then sequential carve; surplus rows are dropped."""
    if len(data) < sizes.total:
        raise InsufficientRowsError(
            f"need {sizes.total} rows, have {len(data)}"
        )
    rng = np.random.default_rng(shuffle_seed)
    order = rng.permutation(len(data))
    shuffled = [data[i] for i in order]
    bounds = np.cumsum(
        [0, sizes.pretrain, sizes.train, sizes.validation, sizes.test]
    )
    parts = [tuple(shuffled[bounds[i]: bounds[i + 1]]) for i in range(4)]
    return Split(parts[0], parts[1], parts[2], parts[3])


def _parse_csv_rows(
    path: Path,
    label_column: int | str,
    positive_label: str,
    skip_bad: bool,
    drop_columns: tuple[int, ...] = (),
) -> tuple[np.ndarray, np.ndarray]:
    if not path.exists():
        raise FileNotFoundError(str(path))
    with open(path, newline="") as fh:
        rows = [r for r in csv_mod.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise InsufficientRowsError(f"{path} is empty")

    header: list[str] | None = None
    first = rows[0]
    if isinstance(label_column, str):
        header = first
        rows = rows[1:]
        try:
            label_idx = header.index(label_column)
        except ValueError:
            raise KeyError(f"label column {label_column!r} not in header")
    else:
        label_idx = label_column
        if not _row_is_numeric(first, label_idx, drop_columns):
            rows = rows[1:]  # headered file with a positional label column

    skip = set(drop_columns) | {label_idx}
    feats: list[list[float]] = []
    labels_raw: list[str] = []
    for ridx, row in enumerate(rows):
        cells = [c.strip() for c in row]
        raw_label = cells[label_idx]
        try:
            x = [float(c) for j, c in enumerate(cells) if j not in skip]
        except ValueError as exc:
            if skip_bad:
                continue
            raise NonNumericFeatureError(f"row {ridx}: {exc}") from exc
        feats.append(x)
        labels_raw.append(raw_label)

    uniq = sorted(set(labels_raw))
    if len(uniq) != 2:
        raise BadLabelCardinalityError(
            f"expected exactly 2 label values, found {uniq}"
        )
    if positive_label not in uniq:
        raise ValueError(
            f"positive_label {positive_label!r} not among labels {uniq}"
        )
    y = np.array([1 if lb == positive_label else -1 for lb in labels_raw])
    return np.array(feats, dtype=np.float64), y


def _row_is_numeric(
    row: Sequence[str], label_idx: int, drop_columns: tuple[int, ...] = ()
) -> bool:
    for j, c in enumerate(row):
        if j == label_idx or j in drop_columns:
            continue
        try:
            float(c)
        except ValueError:
            return False
    return True


def _top_variance_columns(x: np.ndarray, k: int) -> np.ndarray:
    var = x.var(axis=0)
    # Stable ordering: ties resolve toward the lower column index.
    order = np.lexsort((np.arange(var.size), -var))
    return np.sort(order[:k])


def minmax_scale(
    fit_rows: np.ndarray, *blocks: np.ndarray
) -> tuple[np.ndarray, ...]:
    """Scale every block into [-1, 1] using min/max of fit_rows only."""
    lo = fit_rows.min(axis=0)
    hi = fit_rows.max(axis=0)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    out = []
    for b in blocks:
        scaled = 2.0 * (b - lo) / safe - 1.0
        scaled[:, span == 0] = 0.0
        out.append(np.clip(scaled, -1.0, 1.0))
    return tuple(out)


def load_csv(spec: DatasetSpec) -> Split:
    """Load, shuffle, carve, and preprocess a CSV-backed dataset.

    Feature reduction (when requested) and min-max scaling both use
    statistics from the pre-train and train rows only.
    """
    src = spec.source
    assert isinstance(src, CsvSource)
    x, y = _parse_csv_rows(
        Path(src.path), src.label_column, src.positive_label,
        src.skip_bad_rows, src.drop_columns,
    )
    sizes = spec.sizes
    if len(x) < sizes.total:
        raise InsufficientRowsError(
            f"need {sizes.total} rows, {src.path} has {len(x)}"
        )
    rng = np.random.default_rng(src.shuffle_seed or 0)
    order = rng.permutation(len(x))
    x, y = x[order], y[order]

    b = np.cumsum([0, sizes.pretrain, sizes.train, sizes.validation, sizes.test])
    blocks = [(x[b[i]: b[i + 1]], y[b[i]: b[i + 1]]) for i in range(4)]
    fit_x = np.vstack([blocks[0][0], blocks[1][0]])

    if src.reduce_to is not None and x.shape[1] > src.reduce_to:
        cols = _top_variance_columns(fit_x, src.reduce_to)
        blocks = [(bx[:, cols], by) for bx, by in blocks]
        fit_x = fit_x[:, cols]

    if fit_x.shape[1] != spec.d:
        raise ValueError(
            f"{spec.name}: expected {spec.d} features, file yields {fit_x.shape[1]}"
        )

    scaled = minmax_scale(fit_x, *[bx for bx, _ in blocks])
    parts = [
        tuple(LabeledPoint(sx[i], int(by[i])) for i in range(len(by)))
        for sx, (_, by) in zip(scaled, blocks)
    ]
    return Split(parts[0], parts[1], parts[2], parts[3])


def load_split(spec: DatasetSpec) -> Split:
    if isinstance(spec.source, SyntheticSource):
        return synthetic_split(spec)
    return load_csv(spec)


def write_points_csv(
    points: Sequence[LabeledPoint],
    path: str | Path,
    header_comment: str | None = None,
) -> None:
    """Canonical CSV: feature columns then the {-1,+1} label, 17 significant
    digits so values round-trip exactly."""
    lines = []
    if header_comment:
        lines.append(f"# {header_comment}")
    for p in points:
        cells = [f"{v:.17g}" for v in p.x] + [str(p.y)]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def read_points_csv(path: str | Path) -> list[LabeledPoint]:
    points = []
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        cells = line.split(",")
        points.append(
            LabeledPoint(np.array([float(c) for c in cells[:-1]]), int(cells[-1]))
        )
    return points


def synthetic_study_spec() -> DatasetSpec:
    """The 2-D synthetic study dataset: 50/100/50/50 with seeds 0..3."""
    return DatasetSpec(
        name="synthetic",
        d=2,
        sizes=SplitSizes(pretrain=50, train=100, test=50, validation=50),
        source=SyntheticSource(seeds=(0, 1, 2, 3)),
    )


def desk_suite() -> list[DatasetSpec]:
    """Six self-contained desk-scale datasets mirroring the benchmark
    roster's feature counts, for sweeps that need no external files."""
    dims = {"desk1": 14, "desk2": 4, "desk3": 50, "desk4": 57, "desk5": 9,
            "desk6": 50}
    specs = []
    for i, (name, d) in enumerate(dims.items()):
        base = 100 + 10 * i
        specs.append(
            DatasetSpec(
                name=name,
                d=d,
                sizes=SplitSizes(pretrain=60, train=150, test=100, validation=40),
                source=SyntheticSource(
                    seeds=(base, base + 1, base + 2, base + 3),
                    noise=0.55,
                    spread="all",
                ),
            )
        )
    return specs
