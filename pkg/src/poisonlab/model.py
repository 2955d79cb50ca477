"""Binary logistic regression over {-1,+1} labels.

Labels are stored as -1/+1 throughout the package; the cross-entropy
formulas below map them to 0/1 at the boundary (y01 = (y + 1) / 2). The
L2 penalty is (c/2) * ||theta||^2.

The bias term is off by default so that the influence formulas apply to
theta verbatim. With use_bias on, the bias is folded in as an always-1
trailing feature for every loss/gradient/Hessian computation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .numerics import as_vector, symmetrize

SIGMA_CLAMP = 1e-12


class DimensionMismatchError(Exception):
    pass


class EmptyDatasetError(Exception):
    pass


@dataclass(frozen=True, eq=False)
class LabeledPoint:
    """Feature vector in [-1,1]^d with a label in {-1,+1}."""

    x: np.ndarray
    y: int

    def __post_init__(self):
        object.__setattr__(self, "x", as_vector(self.x))
        self.x.flags.writeable = False
        if self.y not in (-1, 1):
            raise ValueError(f"label must be -1 or +1, got {self.y}")

    @property
    def y01(self) -> float:
        return (self.y + 1) / 2.0


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Weights, optional bias, and L2 regularization strength."""

    theta: np.ndarray
    bias: float = 0.0
    reg_c: float = 0.0
    use_bias: bool = False

    def __post_init__(self):
        object.__setattr__(self, "theta", as_vector(self.theta))
        self.theta.flags.writeable = False
        if not np.isfinite(self.bias):
            raise ValueError("bias must be finite")
        if self.reg_c < 0:
            raise ValueError("reg_c must be >= 0")

    @property
    def dim(self) -> int:
        return self.theta.size

    def with_theta(self, theta: np.ndarray, bias: float | None = None) -> "ModelParams":
        return replace(self, theta=theta, bias=self.bias if bias is None else bias)

    @staticmethod
    def zeros(d: int, reg_c: float = 0.0, use_bias: bool = False) -> "ModelParams":
        return ModelParams(np.zeros(d), 0.0, reg_c, use_bias)


def sigmoid(z: float) -> float:
    # Split form avoids exp overflow for large |z|.
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


def _margin(m: ModelParams, x: np.ndarray) -> float:
    if x.size != m.dim:
        raise DimensionMismatchError(
            f"point has dimension {x.size}, model has {m.dim}"
        )
    return float(m.theta @ x) + (m.bias if m.use_bias else 0.0)


def predict(m: ModelParams, x: np.ndarray) -> int:
    """Sign of the decision function; an exact zero margin predicts +1."""
    return 1 if _margin(m, np.asarray(x, dtype=np.float64)) >= 0.0 else -1


def loss(m: ModelParams, p: LabeledPoint) -> float:
    """Per-point cross-entropy, sigma clamped away from {0,1} for the logs."""
    s = sigmoid(_margin(m, p.x))
    s = min(max(s, SIGMA_CLAMP), 1.0 - SIGMA_CLAMP)
    y = p.y01
    return float(-(y * np.log(s) + (1.0 - y) * np.log(1.0 - s)))


def grad_loss(m: ModelParams, p: LabeledPoint) -> np.ndarray:
    """Gradient of the per-point loss in theta: x * (sigma(z) - y01).

    With use_bias on, the bias component sigma(z) - y01 is appended, so the
    result has length d + 1.
    """
    r = sigmoid(_margin(m, p.x)) - p.y01
    g = p.x * r
    if m.use_bias:
        return np.append(g, r)
    return g


def hessian_total(
    m: ModelParams,
    data: Sequence[LabeledPoint],
    mean: bool = True,
    include_reg: bool = False,
) -> np.ndarray:
    """Hessian of the dataset loss: sum_i x_i x_i^T sigma(z_i)(1 - sigma(z_i)).

    `mean=True` (the default) divides by len(data). `include_reg` adds
    reg_c * I on top, for callers whose objective carries the L2 penalty.
    """
    if len(data) == 0:
        raise EmptyDatasetError("hessian requires at least one point")
    xs = np.stack([_augment(m, p.x) for p in data])
    w = np.array([_sigma_weight(m, p) for p in data])
    h = (xs * w[:, None]).T @ xs
    if mean:
        h /= len(data)
    if include_reg:
        h += m.reg_c * np.eye(h.shape[0])
    return symmetrize(h)


def _augment(m: ModelParams, x: np.ndarray) -> np.ndarray:
    return np.append(x, 1.0) if m.use_bias else x


def _sigma_weight(m: ModelParams, p: LabeledPoint) -> float:
    s = sigmoid(_margin(m, p.x))
    return s * (1.0 - s)


def accuracy(m: ModelParams, data: Sequence[LabeledPoint]) -> float:
    if len(data) == 0:
        raise EmptyDatasetError("accuracy requires at least one point")
    hits = sum(1 for p in data if predict(m, p.x) == p.y)
    return hits / len(data)


def total_loss(m: ModelParams, data: Sequence[LabeledPoint]) -> float:
    return sum(loss(m, p) for p in data)
