"""Influence-function machinery for the streaming defense.

The influence of upweighting a training point on the fitted parameters is

    I(x) = -H^{-1} grad_loss(x, theta)

with H the mean Hessian of the loss over a reference set. The defense
scalarizes I by its Euclidean norm and perturbs high-influence points by
descending that score in feature space. H is treated as constant with
respect to the incoming point, so the score gradient has the closed form
implemented in `grad_influence_wrt_point` (finite differences are the
arbiter of its correctness in the test suite).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import (
    DimensionMismatchError,
    EmptyDatasetError,
    LabeledPoint,
    ModelParams,
    grad_loss,
    hessian_total,
    sigmoid,
)
from .numerics import SpdFactor
from .sanitizers import project_box

SCORE_KINK = 1e-12


@dataclass(frozen=True, eq=False)
class InfluenceContext:
    """Mean reference-set Hessian with a cached factorization."""

    hessian: np.ndarray
    factor: SpdFactor
    reference_size: int
    damping: float

    @property
    def dim(self) -> int:
        return self.factor.dim


@dataclass(frozen=True, eq=False)
class InfluenceReport:
    influence_vec: np.ndarray
    score: float


def build_context(
    params: ModelParams,
    reference: Sequence[LabeledPoint],
    damping: float = 0.0,
) -> InfluenceContext:
    """Factorize the mean Hessian of `reference` at the given parameters."""
    if len(reference) == 0:
        raise EmptyDatasetError("reference set must be non-empty")
    h = hessian_total(params, reference, mean=True)
    factor = SpdFactor(h, damping)
    return InfluenceContext(h, factor, len(reference), factor.damping_used)


def influence_of(
    ctx: InfluenceContext, params: ModelParams, p: LabeledPoint
) -> InfluenceReport:
    g = grad_loss(params, p)
    if g.size != ctx.dim:
        raise DimensionMismatchError(
            f"gradient has dimension {g.size}, context has {ctx.dim}"
        )
    vec = -ctx.factor.solve(g)
    return InfluenceReport(vec, float(np.linalg.norm(vec)))


def grad_influence_wrt_point(
    ctx: InfluenceContext, params: ModelParams, p: LabeledPoint
) -> np.ndarray:
    """Gradient of the influence score ||H^{-1} x (sigma(z) - y01)|| in x.

    With u = H^{-1} x (sigma - y01) and s = sigma(z)(1 - sigma(z)):

        grad = (1/||u||) * [ (sigma - y01) * H^{-1} u
                             + s * (x^T H^{-1} u) * theta ]

    At the norm's kink (score below 1e-12) the zero subgradient is
    returned. With the bias folded in as a trailing always-1 feature, the
    gradient covers only the d real feature coordinates.
    """
    x_aug = np.append(p.x, 1.0) if params.use_bias else p.x
    theta_aug = (
        np.append(params.theta, params.bias) if params.use_bias else params.theta
    )
    z = float(theta_aug @ x_aug)
    sig = sigmoid(z)
    r = sig - p.y01
    u = ctx.factor.solve(x_aug * r)
    norm_u = float(np.linalg.norm(u))
    if norm_u < SCORE_KINK:
        return np.zeros(p.x.size)
    hinv_u = ctx.factor.solve(u)
    s = sig * (1.0 - sig)
    grad = (r * hinv_u + s * float(x_aug @ hinv_u) * theta_aug) / norm_u
    return grad[: p.x.size] if params.use_bias else grad


def minimize_influence(
    ctx: InfluenceContext,
    params: ModelParams,
    p: LabeledPoint,
    eta_def: float,
    max_steps: int,
    min_improvement: float = 1e-6,
) -> LabeledPoint:
    """Descend the influence score in feature space, staying in the box.

    Each iteration takes a projected gradient step of size eta_def,
    halving the step while it would increase the score. The label never
    changes, every iterate stays in [-1,1]^d, and the returned point's
    score is <= the input's. Stops early once a step improves the score
    by less than `min_improvement`.
    """
    if eta_def <= 0:
        raise ValueError("eta_def must be > 0")
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")

    x = p.x
    score = influence_of(ctx, params, p).score
    if score < SCORE_KINK:
        return p
    for _ in range(max_steps):
        point = LabeledPoint(x, p.y)
        g = grad_influence_wrt_point(ctx, params, point)
        if not np.any(g):
            break
        step = eta_def
        cand_x = project_box(x - step * g)
        cand_score = influence_of(ctx, params, LabeledPoint(cand_x, p.y)).score
        halvings = 0
        while cand_score > score and halvings < 30:
            step *= 0.5
            cand_x = project_box(x - step * g)
            cand_score = influence_of(ctx, params, LabeledPoint(cand_x, p.y)).score
            halvings += 1
        if cand_score > score:
            break
        improvement = score - cand_score
        x, score = cand_x, cand_score
        if improvement < min_improvement:
            break
    return LabeledPoint(x, p.y)
