"""End-to-end streaming defense: slab filtering plus influence control.

For each arriving point: box-project, test against the slab filter fit on
pre-train data (rejected points never touch the learner), compute the
point's influence score, and compare it to the running average of the
last w_inf accepted scores. When the score meets the threshold, the point
is perturbed by influence minimization and the perturbed version replaces
it only if its score did not increase. The learner then takes one OGD
step on whatever point survived.

The threshold window starts empty: with no history the threshold is +inf,
so the first accepted point is never perturbed. Perturbed points enter
the window with their final (consumed) score.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal, Sequence

import numpy as np

from .influence import InfluenceContext, build_context, influence_of, minimize_influence
from .learner import LearnerState, LearningRateSchedule, ogd_step, pretrain
from .model import LabeledPoint, ModelParams
from .sanitizers import SlabFilter, fit_slab, project_box, slab_accepts

DefenseMode = Literal["none", "slab", "slab_influence"]


@dataclass(frozen=True)
class DefenseConfig:
    mode: DefenseMode = "slab_influence"
    eta_def: float = 0.05
    w_inf: int = 10
    slab_quantile: float = 0.95
    inf_max_steps: int = 25
    damping: float = 0.0
    hessian_refresh: int = 25
    hessian_reference: Literal["pretrain", "pretrain_plus_stream"] = (
        "pretrain_plus_stream"
    )
    project_box_first: bool = True

    def __post_init__(self):
        if self.mode not in ("none", "slab", "slab_influence"):
            raise ValueError(f"unknown defense mode {self.mode!r}")
        if self.eta_def <= 0:
            raise ValueError("eta_def must be > 0")
        if self.w_inf < 1:
            raise ValueError("w_inf must be >= 1")
        if self.hessian_refresh < 1:
            raise ValueError("hessian_refresh must be >= 1")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "eta_def": self.eta_def,
            "w_inf": self.w_inf,
            "slab_quantile": self.slab_quantile,
            "inf_max_steps": self.inf_max_steps,
            "damping": self.damping,
            "hessian_refresh": self.hessian_refresh,
            "hessian_reference": self.hessian_reference,
            "project_box_first": self.project_box_first,
        }


@dataclass(frozen=True)
class PointRecord:
    index: int
    slab_accepted: bool
    influence_score: float | None
    influence_after: float | None
    perturbed: bool
    learner_step_applied: bool

    def to_json_dict(self) -> dict:
        return {
            "index": self.index,
            "slab_accepted": self.slab_accepted,
            "influence_score": self.influence_score,
            "influence_after": self.influence_after,
            "perturbed": self.perturbed,
            "learner_step_applied": self.learner_step_applied,
        }


@dataclass(eq=False)
class StreamTrace:
    records: list[PointRecord]
    final_params: ModelParams
    consumed: list[LabeledPoint] = field(default_factory=list)
    slab: SlabFilter | None = None

    @property
    def accepted_count(self) -> int:
        return sum(1 for r in self.records if r.slab_accepted)

    def write_jsonl(self, path: str | Path, header: dict | None = None) -> None:
        lines = []
        if header is not None:
            lines.append(json.dumps({"header": header}))
        lines.extend(json.dumps(r.to_json_dict()) for r in self.records)
        Path(path).write_text("\n".join(lines) + "\n")


def run_defended_stream(
    stream: Sequence[LabeledPoint],
    pretrain_data: Sequence[LabeledPoint],
    cfg: DefenseConfig,
    schedule: LearningRateSchedule,
    reg_c: float,
    pretrain_epochs: int = 1,
    theta0: ModelParams | None = None,
) -> StreamTrace:
    """Run the full defended stream and return the audit trace.

    theta0 overrides the internally pre-trained initial model when given
    (the step counter restarts at 0 for the stream either way).
    """
    if theta0 is None:
        theta0 = pretrain(pretrain_data, schedule, reg_c, epochs=pretrain_epochs)
    state = LearnerState(theta0, schedule)

    slab = fit_slab(pretrain_data, cfg.slab_quantile) if cfg.mode != "none" else None
    use_influence = cfg.mode == "slab_influence"

    window: deque[float] = deque(maxlen=cfg.w_inf)
    ctx: InfluenceContext | None = None
    accepted_points: list[LabeledPoint] = []
    accepted_since_refresh = 0

    def refresh_context() -> InfluenceContext:
        if cfg.hessian_reference == "pretrain":
            reference = list(pretrain_data)
        else:
            reference = list(pretrain_data) + accepted_points
        return build_context(state.params, reference, cfg.damping)

    records: list[PointRecord] = []
    consumed: list[LabeledPoint] = []
    for i, arrived in enumerate(stream):
        point = (
            LabeledPoint(project_box(arrived.x), arrived.y)
            if cfg.project_box_first
            else arrived
        )
        if slab is not None and not slab_accepts(slab, point):
            records.append(PointRecord(i, False, None, None, False, False))
            continue

        score: float | None = None
        score_after: float | None = None
        perturbed = False
        if use_influence:
            if ctx is None or accepted_since_refresh >= cfg.hessian_refresh:
                ctx = refresh_context()
                accepted_since_refresh = 0
            score = influence_of(ctx, state.params, point).score
            threshold = (
                sum(window) / len(window) if window else math.inf
            )
            final_score = score
            if score >= threshold:
                candidate = minimize_influence(
                    ctx, state.params, point, cfg.eta_def, cfg.inf_max_steps
                )
                cand_score = influence_of(ctx, state.params, candidate).score
                if cand_score <= score:
                    perturbed = not np.array_equal(candidate.x, point.x)
                    point = candidate
                    final_score = cand_score
            score_after = final_score
            window.append(final_score)

        state = ogd_step(state, point)
        accepted_points.append(point)
        accepted_since_refresh += 1
        consumed.append(point)
        records.append(
            PointRecord(i, True, score, score_after, perturbed, True)
        )

    return StreamTrace(records, state.params, consumed, slab)


def grid_search_w_inf(
    candidates: Sequence[int], evaluate: Callable[[int], float]
) -> int:
    """Pick the window size with the best validation score, ties to smaller."""
    if len(candidates) == 0:
        raise ValueError("candidates must be non-empty")
    best_w: int | None = None
    best_score = -np.inf
    for w in sorted(candidates):
        score = evaluate(w)
        if score > best_score:
            best_score, best_w = score, w
    assert best_w is not None
    return best_w
