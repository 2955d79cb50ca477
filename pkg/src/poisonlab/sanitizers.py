"""Data-sanitization filters fit on trusted pre-train data.

The slab filter accepts a point iff the magnitude of its projection onto
the inter-centroid direction, measured from its own class centroid, is
within a per-class threshold:

    |<x - mu_y, mu_y - mu_{-y}>| <= s_y

The L2 filter accepts iff ||x - mu_y|| <= r_y. Thresholds are per-class
quantiles of the same statistic over the pre-train points, so a quantile
of q retains at least ceil(q * n_y) pre-train points of class y. Filters
are fit once on pre-train data and never refit during the stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import LabeledPoint
from .numerics import as_vector


class MissingClassError(Exception):
    pass


def project_box(x: np.ndarray) -> np.ndarray:
    """Componentwise clamp onto the feasible box [-1, 1]^d."""
    return np.clip(np.asarray(x, dtype=np.float64), -1.0, 1.0)


def _class_centroids(pretrain: Sequence[LabeledPoint]) -> tuple[np.ndarray, np.ndarray]:
    pos = [p.x for p in pretrain if p.y == 1]
    neg = [p.x for p in pretrain if p.y == -1]
    if not pos or not neg:
        raise MissingClassError("pre-train data must contain both classes")
    return np.mean(pos, axis=0), np.mean(neg, axis=0)


def _quantile_threshold(values: np.ndarray, quantile: float) -> float:
    # 'higher' keeps the threshold at an attained value, guaranteeing the
    # ceil(q * n) retention property on the fitting data.
    return float(np.quantile(values, quantile, method="higher"))


@dataclass(frozen=True, eq=False)
class SlabFilter:
    mu_pos: np.ndarray
    mu_neg: np.ndarray
    s_pos: float
    s_neg: float

    def __post_init__(self):
        object.__setattr__(self, "mu_pos", as_vector(self.mu_pos))
        object.__setattr__(self, "mu_neg", as_vector(self.mu_neg))
        if self.s_pos < 0 or self.s_neg < 0:
            raise ValueError("slab thresholds must be >= 0")

    def distance(self, p: LabeledPoint) -> float:
        mu = self.mu_pos if p.y == 1 else self.mu_neg
        other = self.mu_neg if p.y == 1 else self.mu_pos
        return abs(float((p.x - mu) @ (mu - other)))

    def to_dict(self) -> dict:
        return {
            "kind": "slab",
            "mu_pos": self.mu_pos.tolist(),
            "mu_neg": self.mu_neg.tolist(),
            "s_pos": self.s_pos,
            "s_neg": self.s_neg,
        }


@dataclass(frozen=True, eq=False)
class L2Filter:
    mu_pos: np.ndarray
    mu_neg: np.ndarray
    r_pos: float
    r_neg: float

    def __post_init__(self):
        object.__setattr__(self, "mu_pos", as_vector(self.mu_pos))
        object.__setattr__(self, "mu_neg", as_vector(self.mu_neg))
        if self.r_pos < 0 or self.r_neg < 0:
            raise ValueError("radii must be >= 0")

    def distance(self, p: LabeledPoint) -> float:
        mu = self.mu_pos if p.y == 1 else self.mu_neg
        return float(np.linalg.norm(p.x - mu))

    def to_dict(self) -> dict:
        return {
            "kind": "l2",
            "mu_pos": self.mu_pos.tolist(),
            "mu_neg": self.mu_neg.tolist(),
            "r_pos": self.r_pos,
            "r_neg": self.r_neg,
        }


def fit_slab(pretrain: Sequence[LabeledPoint], quantile: float = 0.95) -> SlabFilter:
    if not 0 < quantile <= 1:
        raise ValueError("quantile must be in (0, 1]")
    mu_pos, mu_neg = _class_centroids(pretrain)
    axis = mu_pos - mu_neg
    d_pos = np.array([abs((p.x - mu_pos) @ axis) for p in pretrain if p.y == 1])
    d_neg = np.array([abs((p.x - mu_neg) @ -axis) for p in pretrain if p.y == -1])
    return SlabFilter(
        mu_pos,
        mu_neg,
        _quantile_threshold(d_pos, quantile),
        _quantile_threshold(d_neg, quantile),
    )


def fit_l2(pretrain: Sequence[LabeledPoint], quantile: float = 0.95) -> L2Filter:
    if not 0 < quantile <= 1:
        raise ValueError("quantile must be in (0, 1]")
    mu_pos, mu_neg = _class_centroids(pretrain)
    d_pos = np.array([np.linalg.norm(p.x - mu_pos) for p in pretrain if p.y == 1])
    d_neg = np.array([np.linalg.norm(p.x - mu_neg) for p in pretrain if p.y == -1])
    return L2Filter(
        mu_pos,
        mu_neg,
        _quantile_threshold(d_pos, quantile),
        _quantile_threshold(d_neg, quantile),
    )


def slab_accepts(f: SlabFilter, p: LabeledPoint) -> bool:
    return f.distance(p) <= (f.s_pos if p.y == 1 else f.s_neg)


def l2_accepts(f: L2Filter, p: LabeledPoint) -> bool:
    return f.distance(p) <= (f.r_pos if p.y == 1 else f.r_neg)
