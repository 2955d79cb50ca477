"""Poisoned-stream generation under white-box semi/fully-online attackers.

Two attacks are implemented. The simplistic attack appends points chosen
greedily so each simulated victim update moves the parameters toward an
attacker target vector. The online attack crafts points by gradient
ascent on the attacker objective evaluated one victim step ahead:

    x* = argmax_x g(D_c, theta_t - eta * grad_loss(x, theta_t))

ascending x <- project_box(x + alpha * grad_x g). Accuracy-based
objectives use the total-loss surrogate for the ascent gradient (accuracy
has zero gradient almost everywhere). Every emitted point lies in the
feasible box with a label in {-1,+1}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .learner import LearnerState, LearningRateSchedule, ogd_step
from .model import (
    LabeledPoint,
    ModelParams,
    accuracy,
    grad_loss,
    sigmoid,
    total_loss,
)
from .sanitizers import project_box


class PositionOutOfRangeError(Exception):
    pass


@dataclass(frozen=True)
class AttackBudget:
    """Max number of inserted/updated points; k = round(fraction * |train|)."""

    k: int
    fraction: float = 0.0

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("budget k must be >= 0")

    @staticmethod
    def from_fraction(fraction: float, train_size: int) -> "AttackBudget":
        if fraction < 0:
            raise ValueError("fraction must be >= 0")
        return AttackBudget(k=round(fraction * train_size), fraction=fraction)


@dataclass(frozen=True, eq=False)
class AttackerObjective:
    """Attacker's objective over a target set; higher is better for them."""

    target_set: tuple[LabeledPoint, ...]
    kind: Literal["neg_accuracy", "total_loss"] = "neg_accuracy"

    def evaluate(self, params: ModelParams) -> float:
        if self.kind == "total_loss":
            return total_loss(params, self.target_set)
        return -accuracy(params, self.target_set)


@dataclass(eq=False)
class PoisonedStream:
    """Attack output: the full stream plus ground truth for evaluation."""

    points: list[LabeledPoint]
    poisoned_indices: list[int]
    metadata: dict = field(default_factory=dict)

    def is_poison(self) -> np.ndarray:
        mask = np.zeros(len(self.points), dtype=bool)
        mask[self.poisoned_indices] = True
        return mask


def attack_positions(
    stream_len: int, k: int, policy: Literal["interleaved", "end"] = "interleaved"
) -> list[int]:
    """Insertion offsets into the clean stream for k poison points."""
    if policy == "end":
        return [stream_len] * k
    return [round((i + 1) * stream_len / (k + 1)) for i in range(k)]


def _one_step_params(
    theta: ModelParams, p: LabeledPoint, eta: float
) -> ModelParams:
    # Attacker's lookahead uses the bare loss gradient (no regularizer).
    g = grad_loss(theta, p)
    if theta.use_bias:
        return theta.with_theta(theta.theta - eta * g[:-1], theta.bias - eta * g[-1])
    return theta.with_theta(theta.theta - eta * g)


def lookahead_objective_and_grad(
    x: np.ndarray,
    y: int,
    theta: ModelParams,
    eta: float,
    points: Sequence[LabeledPoint],
) -> tuple[float, np.ndarray]:
    """Total loss on `points` after one victim step on (x, y), and its
    gradient with respect to x via the chain rule through that step."""
    p = LabeledPoint(x, y)
    ahead = _one_step_params(theta, p, eta)
    value = total_loss(ahead, points)

    x_aug = np.append(x, 1.0) if theta.use_bias else np.asarray(x, dtype=np.float64)
    theta_aug = (
        np.append(theta.theta, theta.bias) if theta.use_bias else theta.theta
    )
    sig = sigmoid(float(theta_aug @ x_aug))
    r = sig - p.y01
    s = sig * (1.0 - sig)
    g_ahead = np.zeros(x_aug.size)
    for q in points:
        g_ahead += grad_loss(ahead, q)
    d = np.asarray(x).size
    grad_x = -eta * (r * g_ahead[:d] + s * float(x_aug @ g_ahead) * theta.theta)
    return value, grad_x


def _init_pool(points: Sequence[LabeledPoint], y: int) -> list[LabeledPoint]:
    return [p for p in points if p.y == y]


def _craft_point(
    state: LearnerState,
    knowledge: Sequence[LabeledPoint],
    objective: AttackerObjective,
    alpha: float,
    inner_steps: int,
    subset_size: int,
    prior_poisons: Sequence[LabeledPoint],
    rng: np.random.Generator,
) -> LabeledPoint:
    eta = state.schedule.rate(state.step)
    if len(knowledge) > subset_size:
        idx = rng.choice(len(knowledge), size=subset_size, replace=False)
        subset = [knowledge[i] for i in idx]
    else:
        subset = list(knowledge)
    subset = subset + list(prior_poisons)

    best_point: LabeledPoint | None = None
    best_value = (-np.inf, -np.inf)
    for y in (1, -1):
        pool = _init_pool(knowledge, y)
        if pool:
            x = pool[rng.integers(len(pool))].x.copy()
        else:
            x = np.zeros(state.params.dim)
        x = project_box(x)
        for _ in range(inner_steps):
            _, gx = lookahead_objective_and_grad(x, y, state.params, eta, subset)
            x = project_box(x + alpha * gx)
        cand = LabeledPoint(x, y)
        ahead = _one_step_params(state.params, cand, eta)
        # Coarse objectives (accuracy) tie between labels after one step;
        # the loss surrogate breaks those ties.
        value = (
            objective.evaluate(ahead),
            total_loss(ahead, objective.target_set),
        )
        if value > best_value:
            best_value, best_point = value, cand
    assert best_point is not None
    return best_point


def online_attack(
    clean: Sequence[LabeledPoint],
    positions: Sequence[int],
    objective: AttackerObjective,
    alpha: float,
    inner_steps: int,
    schedule: LearningRateSchedule,
    reg_c: float,
    seed: int,
    theta0: ModelParams | None = None,
    subset_size: int = 50,
    prefix_only: bool = False,
) -> PoisonedStream:
    """Insert gradient-ascent poison points at the given stream offsets.

    Offsets index into the clean stream (an offset of len(clean) appends at
    the end). The attacker simulates the undefended victim to know theta_t
    at each insertion. With prefix_only the crafting draws its random
    subset and initializers only from the stream consumed so far, matching
    the fully-online threat model; by default the whole clean stream is
    known (semi-online).
    """
    n = len(clean)
    for pos in positions:
        if not 0 <= pos <= n:
            raise PositionOutOfRangeError(f"position {pos} outside [0, {n}]")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")

    rng = np.random.default_rng(seed)
    dim = clean[0].x.size if clean else (theta0.dim if theta0 else 0)
    params = theta0 if theta0 is not None else ModelParams.zeros(dim, reg_c)
    state = LearnerState(params, schedule)

    remaining = sorted(positions)
    out: list[LabeledPoint] = []
    poison_idx: list[int] = []
    crafted: list[LabeledPoint] = []
    for i in range(n + 1):
        while remaining and remaining[0] == i:
            remaining.pop(0)
            knowledge = list(clean[:i]) if prefix_only else list(clean)
            if not knowledge:
                knowledge = list(crafted) or [
                    LabeledPoint(np.zeros(state.params.dim), 1)
                ]
            poison = _craft_point(
                state, knowledge, objective, alpha, inner_steps,
                subset_size, crafted, rng,
            )
            crafted.append(poison)
            poison_idx.append(len(out))
            out.append(poison)
            state = ogd_step(state, poison)
        if i < n:
            out.append(clean[i])
            state = ogd_step(state, clean[i])
    return PoisonedStream(
        out,
        poison_idx,
        metadata={
            "attack": "online",
            "kind": objective.kind,
            "inserted": len(poison_idx),
            "prefix_only": prefix_only,
        },
    )


_SIMPLISTIC_SCALES = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 1e6)


def simplistic_attack(
    clean: Sequence[LabeledPoint],
    theta0: ModelParams,
    theta_target: ModelParams,
    budget: AttackBudget,
    eps: float,
    schedule: LearningRateSchedule,
    reg_c: float,
) -> PoisonedStream:
    """Append points steering the simulated victim toward a target vector.

    Each appended point is the best of a small candidate family aligned
    with the current-to-target direction (both labels, several projected
    magnitudes), judged by the distance after one simulated OGD step. Stops
    once ||theta - theta_target|| <= eps, the budget is exhausted, or no
    candidate makes progress; non-convergence is flagged in the metadata.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    state = LearnerState(theta0, schedule)
    for p in clean:
        state = ogd_step(state, p)

    out = list(clean)
    poison_idx: list[int] = []
    target = theta_target.theta
    dist = float(np.linalg.norm(state.params.theta - target))
    stalled = False
    while len(poison_idx) < budget.k and dist > eps:
        v = state.params.theta - target
        v_hat = v / np.linalg.norm(v)
        best: tuple[float, LabeledPoint, LearnerState] | None = None
        for y in (1, -1):
            direction = -v_hat if y == 1 else v_hat
            for scale in _SIMPLISTIC_SCALES:
                cand = LabeledPoint(project_box(scale * direction), y)
                nxt = ogd_step(state, cand)
                d = float(np.linalg.norm(nxt.params.theta - target))
                if best is None or d < best[0]:
                    best = (d, cand, nxt)
        assert best is not None
        if best[0] >= dist:
            stalled = True
            break
        poison_idx.append(len(out))
        out.append(best[1])
        state = best[2]
        dist = best[0]

    return PoisonedStream(
        out,
        poison_idx,
        metadata={
            "attack": "simplistic",
            "converged": dist <= eps,
            "stalled": stalled,
            "final_distance": dist,
            "inserted": len(poison_idx),
        },
    )


def save_poison_ground_truth(stream: PoisonedStream, path: str | Path) -> None:
    """Sidecar JSON with the poisoned indices and attack metadata."""
    payload = {
        "poisoned_indices": stream.poisoned_indices,
        "metadata": stream.metadata,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
