"""Acceptance suite: one test per criterion, each printing a verdict line.

Run `pytest tests/test_acceptance.py -s -v` to see every verdict. The two
real-dataset spot checks (criterion 4) need local CSV copies of the
banknote and original Wisconsin breast-cancer datasets; point
POISONLAB_DATA at the directory holding them (defaults to ./data). When
the files are absent that criterion reports BLOCKED and is skipped.
"""

from __future__ import annotations

import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import pearsonr

from conftest import loo_influence_comparison
from poisonlab.attacks import (
    AttackBudget,
    AttackerObjective,
    attack_positions,
    lookahead_objective_and_grad,
    online_attack,
)
from poisonlab.data import (
    CsvSource,
    DatasetSpec,
    SplitSizes,
    desk_suite,
    gen_synthetic,
    load_split,
    synthetic_study_spec,
)
from poisonlab.defense import DefenseConfig, run_defended_stream
from poisonlab.influence import build_context, grad_influence_wrt_point, influence_of
from poisonlab.learner import optimal_rate_for, pretrain
from poisonlab.model import (
    LabeledPoint,
    ModelParams,
    accuracy,
    grad_loss,
    hessian_total,
    loss,
)
from poisonlab.numerics import finite_diff_grad
from poisonlab.sanitizers import fit_l2, fit_slab, l2_accepts, slab_accepts

DATA_DIR = Path(os.environ.get("POISONLAB_DATA", "data"))


def verdict(num: int, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


def test_criterion_1_influence_fidelity():
    start = time.perf_counter()
    worst_r, worst_sign = 1.0, 1.0
    for seed in range(10):
        points = gen_synthetic(30, 100 + seed, 5)
        predicted, actual = loo_influence_comparison(points, ridge_mean=1e-3)
        worst_r = min(worst_r, pearsonr(predicted, actual)[0])
        worst_sign = min(
            worst_sign, float(np.mean(np.sign(predicted) == np.sign(actual)))
        )
    elapsed = time.perf_counter() - start
    ok = worst_r >= 0.9 and worst_sign >= 0.8 and elapsed < 30
    verdict(
        1, ok,
        f"leave-one-out fidelity: min pearson={worst_r:.4f} (>=0.9), "
        f"min sign agreement={worst_sign:.3f} (>=0.8), {elapsed:.1f}s (<30s)",
    )


def test_criterion_2_gradient_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(77)

    worst_loss_grad = 0.0
    for _ in range(20):
        d = int(rng.integers(1, 7))
        p = LabeledPoint(rng.uniform(-1, 1, size=d), int(rng.choice([-1, 1])))
        theta = rng.normal(size=d)
        g = grad_loss(ModelParams(theta), p)
        gfd = finite_diff_grad(lambda t, p=p: loss(ModelParams(t), p), theta, 1e-5)
        worst_loss_grad = max(
            worst_loss_grad,
            np.linalg.norm(g - gfd) / max(np.linalg.norm(gfd), 1e-10),
        )

    worst_hess = 0.0
    for trial in range(20):
        d = int(rng.integers(2, 6))
        pts = gen_synthetic(8, 300 + trial, d)
        theta = rng.normal(size=d) * 0.5
        h = hessian_total(ModelParams(theta), pts, mean=False)
        hfd = np.zeros((d, d))
        eps = 1e-6
        for j in range(d):
            step = np.zeros(d)
            step[j] = eps
            gp = sum(grad_loss(ModelParams(theta + step), p) for p in pts)
            gm = sum(grad_loss(ModelParams(theta - step), p) for p in pts)
            hfd[:, j] = (gp - gm) / (2 * eps)
        worst_hess = max(worst_hess, np.abs(h - hfd).max() / np.abs(hfd).max())

    worst_inf = 0.0
    for trial in range(20):
        d = int(rng.integers(2, 7))
        pts = gen_synthetic(20, 400 + trial, d)
        params = ModelParams(rng.normal(size=d) * 0.5)
        ctx = build_context(params, pts, damping=1e-8)
        x = rng.uniform(-1, 1, size=d)
        y = int(rng.choice([-1, 1]))
        g = grad_influence_wrt_point(ctx, params, LabeledPoint(x, y))

        def score(v, y=y, ctx=ctx, params=params):
            return influence_of(ctx, params, LabeledPoint(v, y)).score

        gfd = finite_diff_grad(score, x, 1e-5)
        worst_inf = max(
            worst_inf, np.linalg.norm(g - gfd) / max(np.linalg.norm(gfd), 1e-12)
        )

    worst_bilevel = 0.0
    for trial in range(20):
        d = int(rng.integers(2, 6))
        pts = gen_synthetic(15, 500 + trial, d)
        theta = ModelParams(rng.normal(size=d) * 0.5)
        x = rng.uniform(-1, 1, size=d)
        y = int(rng.choice([-1, 1]))
        eta = float(rng.uniform(0.01, 0.5))
        _, gx = lookahead_objective_and_grad(x, y, theta, eta, pts)

        def composed(v, y=y, theta=theta, eta=eta, pts=pts):
            return lookahead_objective_and_grad(v, y, theta, eta, pts)[0]

        gfd = finite_diff_grad(composed, x, 1e-6)
        worst_bilevel = max(
            worst_bilevel,
            np.linalg.norm(gx - gfd) / max(np.linalg.norm(gfd), 1e-12),
        )

    elapsed = time.perf_counter() - start
    ok = (
        worst_loss_grad <= 1e-5
        and worst_hess <= 1e-4
        and worst_inf <= 1e-4
        and worst_bilevel <= 1e-4
        and elapsed < 10
    )
    verdict(
        2, ok,
        f"finite-difference agreement: loss grad {worst_loss_grad:.2e} "
        f"(<=1e-5), hessian {worst_hess:.2e} (<=1e-4), influence grad "
        f"{worst_inf:.2e} (<=1e-4), bilevel grad {worst_bilevel:.2e} "
        f"(<=1e-4), {elapsed:.1f}s (<10s)",
    )


def test_criterion_3_synthetic_ordering(golden):
    start = time.perf_counter()
    split = load_split(synthetic_study_spec())
    from poisonlab.learner import ConstantRate

    sched = ConstantRate(0.05)
    reg_c = 0.01
    accs = {}
    for mode in ("none", "slab", "slab_influence"):
        cfg = DefenseConfig(mode=mode, eta_def=0.05, w_inf=10)
        trace = run_defended_stream(split.train, split.pretrain, cfg, sched, reg_c)
        accs[mode] = accuracy(trace.final_params, split.train)
    elapsed = time.perf_counter() - start
    ok = (
        accs["none"] >= accs["slab"] >= accs["slab_influence"]
        and 0.70 <= accs["none"] <= 0.85
        and elapsed < 5
    )
    for mode, acc in accs.items():
        golden(f"synthetic_study_{mode}_train_accuracy", acc)
    verdict(
        3, ok,
        f"synthetic study ordering: clean={accs['none']:.3f} >= "
        f"slab={accs['slab']:.3f} >= influence={accs['slab_influence']:.3f}, "
        f"clean in [0.70, 0.85], {elapsed:.1f}s (<5s)",
    )


def _banknote_spec() -> DatasetSpec:
    return DatasetSpec(
        name="banknote", d=4,
        sizes=SplitSizes(pretrain=200, train=400, test=572),
        source=CsvSource(
            path=str(DATA_DIR / "banknote.csv"),
            label_column=4, positive_label="0", shuffle_seed=0,
        ),
    )


def _breast_cancer_spec() -> DatasetSpec:
    # Original Wisconsin file: id column, nine features, class in {2, 4};
    # rows with missing cells are dropped.
    return DatasetSpec(
        name="uci_breast_cancer", d=9,
        sizes=SplitSizes(pretrain=100, train=400, test=100),
        source=CsvSource(
            path=str(DATA_DIR / "breast-cancer-wisconsin.csv"),
            label_column=10, positive_label="4", shuffle_seed=0,
            drop_columns=(0,), skip_bad_rows=True,
        ),
    )


# Published accuracy cells at LR 0.01 and 10% budget for the two spot-check
# datasets, keyed (defense, attack).
SPOT_CELLS = {
    "banknote": {
        ("slab", "simplistic"): 0.8391,
        ("slab", "online"): 0.8671,
        ("slab_influence", "simplistic"): 0.8391,
        ("slab_influence", "online"): 0.8671,
    },
    "uci_breast_cancer": {
        ("slab", "simplistic"): 0.92,
        ("slab", "online"): 0.88,
        ("slab_influence", "simplistic"): 0.92,
        ("slab_influence", "online"): 0.88,
    },
}


def test_criterion_4_table_spot_checks():
    from poisonlab.experiment import AttackSpec, ExperimentConfig, ScheduleSpec, run_experiment

    specs = {"banknote": _banknote_spec(),
             "uci_breast_cancer": _breast_cancer_spec()}
    missing = [
        s.source.path for s in specs.values() if not Path(s.source.path).exists()
    ]
    if missing:
        print(
            "ACCEPTANCE 4: BLOCKED - dataset files not found "
            f"({', '.join(missing)}); place the CSVs there or set "
            "POISONLAB_DATA to run the published-cell comparison"
        )
        pytest.skip("real dataset CSVs unavailable in this environment")

    start = time.perf_counter()
    failures = []
    for name, spec in specs.items():
        for (defense, attack), expected in SPOT_CELLS[name].items():
            cfg = ExperimentConfig(
                dataset=spec,
                attack=AttackSpec(kind=attack),
                defense=DefenseConfig(mode=defense),
                schedule=ScheduleSpec(kind="constant", eta=0.01),
                budget_fraction=0.10,
                output_dir=f"results/acceptance/{name}_{defense}_{attack}",
            )
            result = run_experiment(cfg, persist=False)
            if abs(result.test_accuracy - expected) > 0.05:
                failures.append(
                    f"{name}/{defense}/{attack}: got "
                    f"{result.test_accuracy:.4f}, published {expected}"
                )
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 120
    verdict(
        4, ok,
        f"published-cell spot checks within +-0.05, {elapsed:.1f}s (<120s)"
        + ("" if not failures else f"; deviations: {failures}"),
    )


def test_criterion_5_defense_pattern_sweep():
    start = time.perf_counter()
    reg_c = 0.01
    wins = 0
    details = []
    for spec in desk_suite():
        split = load_split(spec)
        sched = optimal_rate_for(split.pretrain, reg_c)
        theta0 = pretrain(split.pretrain, sched, reg_c)
        budget = AttackBudget.from_fraction(0.10, len(split.train))
        positions = attack_positions(len(split.train), budget.k, "end")
        objective = AttackerObjective(tuple(split.train), "neg_accuracy")
        stream = online_attack(
            split.train, positions, objective, alpha=2.0, inner_steps=20,
            schedule=sched, reg_c=reg_c, seed=7, theta0=theta0,
        )
        undefended = run_defended_stream(
            stream.points, split.pretrain, DefenseConfig(mode="none"),
            sched, reg_c, theta0=theta0,
        )
        defended = run_defended_stream(
            stream.points, split.pretrain,
            DefenseConfig(mode="slab_influence", eta_def=0.05, w_inf=10),
            sched, reg_c, theta0=theta0,
        )
        a_und = accuracy(undefended.final_params, split.test)
        a_def = accuracy(defended.final_params, split.test)
        wins += a_def > a_und
        details.append(f"{spec.name}:{a_def:.2f}v{a_und:.2f}")
    elapsed = time.perf_counter() - start
    ok = wins >= 5 and elapsed < 600
    verdict(
        5, ok,
        f"online-attack pattern at optimal-style LR: defended beats "
        f"undefended on {wins}/6 datasets (>=5), {elapsed:.1f}s (<600s) "
        f"[{' '.join(details)}]",
    )


def _assert_trace_invariants(stream, pretrain_data, cfg, sched, reg_c):
    from poisonlab.learner import LearnerState, ogd_step

    t1 = run_defended_stream(stream, pretrain_data, cfg, sched, reg_c)
    t2 = run_defended_stream(stream, pretrain_data, cfg, sched, reg_c)
    # Bit-identical reruns.
    assert np.array_equal(t1.final_params.theta, t2.final_params.theta)
    assert [r.to_json_dict() for r in t1.records] == [
        r.to_json_dict() for r in t2.records
    ]
    # Rejected points never touch theta: replay accepted points only.
    theta0 = pretrain(pretrain_data, sched, reg_c)
    state = LearnerState(theta0, sched)
    consumed = iter(t1.consumed)
    for record in t1.records:
        assert record.learner_step_applied == record.slab_accepted
        if record.slab_accepted:
            point = next(consumed)
            original = stream[record.index]
            assert point.y == original.y
            assert np.all(np.abs(point.x) <= 1.0)
            if record.perturbed:
                assert record.influence_after <= record.influence_score + 1e-12
            state = ogd_step(state, point)
    assert np.array_equal(state.params.theta, t1.final_params.theta)


def test_criterion_6_defense_invariants():
    reg_c = 0.01
    checked = 0
    from poisonlab.learner import ConstantRate

    split = load_split(synthetic_study_spec())
    for mode in ("none", "slab", "slab_influence"):
        for eta in (0.01, 0.05):
            cfg = DefenseConfig(mode=mode, eta_def=0.05, w_inf=5)
            _assert_trace_invariants(
                split.train, split.pretrain, cfg, ConstantRate(eta), reg_c
            )
            checked += 1
    # One poisoned trace as well.
    spec = desk_suite()[0]
    dsplit = load_split(spec)
    sched = optimal_rate_for(dsplit.pretrain, reg_c)
    theta0 = pretrain(dsplit.pretrain, sched, reg_c)
    stream = online_attack(
        dsplit.train,
        attack_positions(len(dsplit.train), 15, "end"),
        AttackerObjective(tuple(dsplit.train)),
        alpha=2.0, inner_steps=20, schedule=sched, reg_c=reg_c, seed=7,
        theta0=theta0,
    )
    _assert_trace_invariants(
        stream.points, dsplit.pretrain,
        DefenseConfig(mode="slab_influence", w_inf=10), sched, reg_c,
    )
    checked += 1
    verdict(
        6, True,
        f"defense invariants held on {checked} traces (rejection leaves "
        "theta untouched, replacement never worsens the score, perturbed "
        "points stay feasible, reruns are bit-identical)",
    )


def test_criterion_7_sanitizer_oracle_agreement():
    rng = np.random.default_rng(123)
    from test_sanitizers import l2_oracle, slab_oracle

    disagreements = 0
    pairs = 0
    fitted = []
    for trial in range(10):
        d = int(rng.integers(2, 6))
        pre = gen_synthetic(40, 900 + trial, d)
        q = float(rng.uniform(0.5, 1.0))
        fs, fl = fit_slab(pre, q), fit_l2(pre, q)
        fitted.append((fs, fl, pre, q))
        for _ in range(50):
            p = LabeledPoint(rng.uniform(-1, 1, size=d), int(rng.choice([-1, 1])))
            disagreements += slab_accepts(fs, p) != slab_oracle(fs, p)
            disagreements += l2_accepts(fl, p) != l2_oracle(fl, p)
            pairs += 2
    retention_ok = True
    for fs, fl, pre, q in fitted:
        for y in (1, -1):
            cls = [p for p in pre if p.y == y]
            need = int(np.ceil(q * len(cls)))
            retention_ok &= sum(slab_accepts(fs, p) for p in cls) >= need
            retention_ok &= sum(l2_accepts(fl, p) for p in cls) >= need
    ok = disagreements == 0 and pairs >= 1000 and retention_ok
    verdict(
        7, ok,
        f"sanitizer acceptance matches the independent oracle on {pairs} "
        f"pairs with {disagreements} disagreements; quantile retention "
        f"held on all fitted filters: {retention_ok}",
    )
