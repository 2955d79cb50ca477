"""Online gradient descent with pluggable learning-rate schedules.

The update at step t is theta <- theta - eta_t * (grad_loss + c * theta).
Two schedules are supported: a constant rate, and an "optimal-style"
inverse schedule eta_t = 1 / (alpha * (t0 + t)) that starts aggressive and
decays, initialized from a probe gradient so the first step is bounded.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .model import EmptyDatasetError, LabeledPoint, ModelParams, grad_loss


@dataclass(frozen=True)
class ConstantRate:
    eta: float

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("constant learning rate must be > 0")

    def rate(self, step: int) -> float:
        return self.eta

    def to_dict(self) -> dict:
        return {"kind": "constant", "eta": self.eta}


@dataclass(frozen=True)
class OptimalInverseRate:
    """eta_t = 1 / (alpha * (t0 + t)), strictly decreasing in t."""

    alpha: float
    t0: float

    def __post_init__(self):
        if self.alpha <= 0 or self.t0 <= 0:
            raise ValueError("alpha and t0 must be > 0")

    def rate(self, step: int) -> float:
        return 1.0 / (self.alpha * (self.t0 + step))

    def to_dict(self) -> dict:
        return {"kind": "optimal", "alpha": self.alpha, "t0": self.t0}


LearningRateSchedule = ConstantRate | OptimalInverseRate


def schedule_from_dict(d: dict) -> LearningRateSchedule:
    kind = d["kind"]
    if kind == "constant":
        return ConstantRate(float(d["eta"]))
    if kind == "optimal":
        return OptimalInverseRate(float(d["alpha"]), float(d["t0"]))
    raise ValueError(f"unknown schedule kind {kind!r}")


def optimal_rate_for(
    probe: Sequence[LabeledPoint], reg_c: float, fallback_alpha: float = 0.01
) -> OptimalInverseRate:
    """Optimal-style schedule sized from probe data.

    alpha is the regularization constant (the usual choice for this
    schedule family), with a fallback when reg_c is 0. t0 is chosen so
    that the first step satisfies eta_0 * ||grad|| <= 1 for the largest
    probe gradient at theta = 0.
    """
    if len(probe) == 0:
        raise EmptyDatasetError("probe data required to size the schedule")
    alpha = reg_c if reg_c > 0 else fallback_alpha
    zero = ModelParams.zeros(probe[0].x.size, reg_c)
    gmax = max(float(np.linalg.norm(grad_loss(zero, p))) for p in probe)
    t0 = max(1.0, gmax / alpha)
    return OptimalInverseRate(alpha, t0)


@dataclass(frozen=True)
class LearnerState:
    """Immutable snapshot of the online learner: params plus step count."""

    params: ModelParams
    schedule: LearningRateSchedule
    step: int = 0

    def __post_init__(self):
        if self.step < 0:
            raise ValueError("step must be >= 0")


def ogd_step(s: LearnerState, p: LabeledPoint) -> LearnerState:
    """One online gradient-descent update; returns a new state."""
    eta = s.schedule.rate(s.step)
    g = grad_loss(s.params, p)
    m = s.params
    if m.use_bias:
        theta = m.theta - eta * (g[:-1] + m.reg_c * m.theta)
        bias = m.bias - eta * (g[-1] + m.reg_c * m.bias)
        params = m.with_theta(theta, bias)
    else:
        params = m.with_theta(m.theta - eta * (g + m.reg_c * m.theta))
    return replace(s, params=params, step=s.step + 1)


def pretrain(
    data: Sequence[LabeledPoint],
    schedule: LearningRateSchedule,
    reg_c: float,
    epochs: int = 1,
    use_bias: bool = False,
) -> ModelParams:
    """Initial parameters from `epochs` in-order passes over the pre-train set.

    epochs = 0 returns the zero vector (no training).
    """
    if len(data) == 0:
        raise EmptyDatasetError("pre-train data must be non-empty")
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    state = LearnerState(
        ModelParams.zeros(data[0].x.size, reg_c, use_bias), schedule
    )
    for _ in range(epochs):
        for p in data:
            state = ogd_step(state, p)
    return state.params
