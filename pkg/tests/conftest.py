"""Shared test helpers: golden regression values and training oracles."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import minimize as sp_minimize

GOLDEN_PATH = Path(__file__).parent / "golden" / "baselines.json"


def _load_golden() -> dict:
    if GOLDEN_PATH.exists():
        return json.loads(GOLDEN_PATH.read_text())
    return {}


def _save_golden(values: dict) -> None:
    GOLDEN_PATH.parent.mkdir(parents=True, exist_ok=True)
    GOLDEN_PATH.write_text(json.dumps(values, indent=2, sort_keys=True) + "\n")


@pytest.fixture(scope="session")
def golden():
    """Compare a value against the blessed regression baseline.

    The first run records the value; later runs within the same build must
    match to 1e-9. Determinism across runs is checked separately from any
    comparison to published numbers.
    """
    values = _load_golden()
    dirty = {"flag": False}

    def check(name: str, value: float, atol: float = 1e-9) -> None:
        if name in values:
            assert value == pytest.approx(values[name], abs=atol), (
                f"regression baseline {name!r} drifted: "
                f"recorded {values[name]}, got {value}"
            )
        else:
            values[name] = value
            dirty["flag"] = True

    yield check
    if dirty["flag"]:
        _save_golden(values)


def batch_train_logistic(points, ridge: float, x0=None) -> np.ndarray:
    """Train logistic regression to convergence on the summed objective

        sum_i nll_i(theta) + (ridge / 2) * ||theta||^2

    via L-BFGS with an analytic gradient. Used as the retraining oracle for
    influence checks; independent of the package's solver path.
    """
    xs = np.stack([p.x for p in points])
    ys = np.array([p.y01 for p in points])
    d = xs.shape[1]
    if x0 is None:
        x0 = np.zeros(d)

    def f(theta):
        z = xs @ theta
        return float(np.sum(np.logaddexp(0.0, z) - ys * z)
                     + 0.5 * ridge * theta @ theta)

    def jac(theta):
        z = xs @ theta
        s = 1.0 / (1.0 + np.exp(-z))
        return xs.T @ (s - ys) + ridge * theta

    res = sp_minimize(f, x0, jac=jac, method="L-BFGS-B", tol=1e-14,
                      options={"maxiter": 2000})
    return res.x


def loo_influence_comparison(points, ridge_mean: float):
    """Predicted vs actual parameter deltas for removing each point.

    Returns (predicted, actual) stacked over all points and coordinates.
    The actual deltas come from full retraining without the point; the
    predicted ones from the influence approximation -(1/n) * I(x).
    """
    from poisonlab.influence import build_context, influence_of
    from poisonlab.model import ModelParams

    n = len(points)
    ridge_sum = ridge_mean * n
    theta_hat = batch_train_logistic(points, ridge_sum)
    params = ModelParams(theta_hat)
    ctx = build_context(params, points, damping=ridge_mean)
    predicted, actual = [], []
    for i in range(n):
        rep = influence_of(ctx, params, points[i])
        predicted.append(-rep.influence_vec / n)
        rest = list(points[:i]) + list(points[i + 1:])
        theta_loo = batch_train_logistic(rest, ridge_sum, x0=theta_hat)
        actual.append(theta_loo - theta_hat)
    return np.concatenate(predicted), np.concatenate(actual)
