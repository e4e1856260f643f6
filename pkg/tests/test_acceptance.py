"""Acceptance gate for the detector: nine numbered criteria, one test each.

Run with ``pytest tests/test_acceptance.py -v`` to get a pass/fail line per
criterion. Each test states its tolerance and (where one applies) asserts its
own runtime budget, so a green run certifies the numeric contracts:

  1. analytic gradients of the blended loss vs central finite differences
  2. binary-search CVaR vs a dense lambda grid
  3. vectorized ranking surrogate vs explicit pair enumeration
  4. sort-based exact AUC vs O(n^2) pair counting
  5. the sign-perturbation unit contract
  6. desk-scale end-to-end training quality and determinism
  7. non-inferiority vs a plain-BCE baseline under 1:9 imbalance
  8. ablation table and two-stage alpha/gamma sweep artifacts
  9. landscape-slice center exactness and grid shape
"""

import time

import numpy as np
import pytest

from robustclf.bank import FeatureBank, generate_synthetic
from robustclf.cli import main
from robustclf.config import TrainConfig
from robustclf.losses import (
    auc_surrogate,
    bce_per_example,
    cvar_lambda_star,
    total_loss,
)
from robustclf.metrics import evaluate, exact_auc, roc_curve, trapezoid_area
from robustclf.mlp import (
    backward,
    forward,
    init_model,
    pack_grads,
    pack_params,
    unpack_params,
)
from robustclf.optim import compute_epsilon
from robustclf.trainer import landscape_slice, train, write_landscape_csv

from oracles import auc_surrogate_loops, cvar_grid, pair_count_auc


# ---------------------------------------------------------------------------
# 1. gradient correctness


def _pinned_total_loss(model, x, y, masks, lam0, weights, gamma, eta, power):
    """The smooth branch the analytic gradient differentiates: lambda pinned
    at the clean optimum and the tail hinge's active set frozen there (the
    quantile example sits exactly on the hinge, so central differences across
    it would measure the one kink the documented tie rule excludes)."""
    trace = forward(model, x, masks=masks)
    ell, _ = bce_per_example(trace.probs, y, logits=trace.logits)
    tail = lam0 + float((weights * (ell - lam0)).sum())
    rank = auc_surrogate(trace.probs[y == 1], trace.probs[y == 0],
                         eta=eta, power=power)[0]
    return gamma * tail + (1.0 - gamma) * rank


def test_criterion_1_gradient_correctness():
    gamma, alpha, eta, power = 0.5, 0.8, 0.6, 2.0
    step = 1e-6
    t0 = time.perf_counter()
    checked = 0
    for seed in range(30):
        rng = np.random.Generator(np.random.PCG64(seed))
        model = init_model(8, hidden=8, dropout_rate=0.1, rng=rng).train()
        x = rng.normal(size=(8, 8))
        y = rng.permutation(np.array([1, 1, 1, 1, 0, 0, 0, 0]))
        trace = forward(model, x, rng=rng)
        report, dprob = total_loss(trace.probs, y, gamma=gamma, alpha=alpha,
                                   eta=eta, power=power, logits=trace.logits)
        ell, _ = bce_per_example(trace.probs, y, logits=trace.logits)
        lam0 = report.fitted_lambda

        # stay away from kinks: every non-quantile example clear of lambda,
        # every pair clear of the margin, every unit clear of the ReLU corner
        if np.sort(np.abs(ell - lam0))[1] <= 1e-4:
            continue
        margins = trace.probs[y == 1][:, None] - trace.probs[y == 0][None, :]
        if np.abs(margins - eta).min() <= 1e-4:
            continue
        if min(np.abs(t.y).min() for t in trace.hidden) <= 1e-4:
            continue

        analytic = pack_grads(model, backward(model, trace, dprob))
        weights = np.where(ell > lam0, 1.0 / (alpha * y.size), 0.0)
        theta0 = pack_params(model)

        def f():
            return _pinned_total_loss(model, x, y, trace.masks, lam0, weights,
                                      gamma, eta, power)

        unpack_params(model, theta0)
        assert abs(f() - report.total) < 1e-12

        fd = np.empty_like(theta0)
        for j in range(theta0.size):
            probe = theta0.copy()
            probe[j] = theta0[j] + step
            unpack_params(model, probe)
            f_plus = f()
            probe[j] = theta0[j] - step
            unpack_params(model, probe)
            f_minus = f()
            fd[j] = (f_plus - f_minus) / (2.0 * step)
        unpack_params(model, theta0)

        rel = np.abs(analytic - fd) / np.maximum(1.0, np.abs(fd))
        assert rel.max() < 1e-5, f"seed {seed}: worst relative error {rel.max():.3e}"
        checked += 1
        if checked >= 10:
            break
    assert checked >= 10
    assert time.perf_counter() - t0 < 60.0


# ---------------------------------------------------------------------------
# 2. CVaR oracle equivalence


def test_criterion_2_cvar_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.PCG64(2))
    for _ in range(100):
        n = int(rng.integers(2, 65))
        # losses on the 1e-6 lattice so the dense grid lands on every kink
        losses = rng.integers(0, 1_000_001, n) * 1e-6
        alpha = float(rng.uniform(0.05, 1.0))
        _, value = cvar_lambda_star(losses, alpha)
        _, grid_value = cvar_grid(losses, alpha, step=1e-6)
        assert abs(value - grid_value) <= 1e-8

    for _ in range(100):
        losses = rng.uniform(0.0, 10.0, int(rng.integers(1, 65)))
        _, value = cvar_lambda_star(losses, 1.0)
        assert abs(value - losses.mean()) <= 1e-12

    _, value = cvar_lambda_star(np.array([1.0, 2.0, 3.0, 4.0]), 0.5)
    assert value == 3.5
    assert time.perf_counter() - t0 < 60.0


# ---------------------------------------------------------------------------
# 3. ranking-surrogate oracle equivalence


def test_criterion_3_auc_surrogate_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.PCG64(3))
    eta, power = 0.6, 2.0
    for _ in range(100):
        pos = rng.uniform(0.0, 1.0, int(rng.integers(1, 13)))
        neg = rng.uniform(0.0, 1.0, int(rng.integers(1, 13)))
        value, dpos, dneg = auc_surrogate(pos, neg, eta=eta, power=power)
        v2, dp2, dn2 = auc_surrogate_loops(pos, neg, eta, power)
        assert abs(value - v2) <= 1e-9
        assert np.abs(dpos - dp2).max() <= 1e-9
        assert np.abs(dneg - dn2).max() <= 1e-9

    for _ in range(20):
        pos = rng.uniform(0.7, 0.95, int(rng.integers(1, 8)))
        neg = rng.uniform(0.0, 0.1, int(rng.integers(1, 8)))
        value, dpos, dneg = auc_surrogate(pos, neg, eta=eta, power=power)
        assert value == 0.0 and not dpos.any() and not dneg.any()
    assert time.perf_counter() - t0 < 60.0


# ---------------------------------------------------------------------------
# 4. exact-AUC oracle equivalence


def test_criterion_4_exact_auc_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.PCG64(4))
    for i in range(1000):
        n_pos = int(rng.integers(1, 14))
        n_neg = int(rng.integers(1, 14))
        if i % 2 == 0:
            pos = rng.integers(0, 6, n_pos) / 5.0   # coarse grid: many ties
            neg = rng.integers(0, 6, n_neg) / 5.0
        else:
            pos = rng.uniform(0.0, 1.0, n_pos)
            neg = rng.uniform(0.0, 1.0, n_neg)
        auc = exact_auc(pos, neg)
        assert auc == pair_count_auc(pos, neg)
        assert abs(trapezoid_area(roc_curve(pos, neg)) - auc) <= 1e-12
    assert time.perf_counter() - t0 < 60.0


# ---------------------------------------------------------------------------
# 5. perturbation unit contract


def test_criterion_5_sam_unit_contract():
    delta = 0.05
    rng = np.random.Generator(np.random.PCG64(5))
    g = rng.normal(size=500)
    g[::9] = 0.0
    eps = compute_epsilon(g, delta)
    nonzero = g != 0
    assert np.array_equal(np.abs(eps[nonzero]), np.full(nonzero.sum(), delta))
    assert not eps[~nonzero].any()

    for c in (1e-6, 3.7, 1e6):
        assert np.array_equal(compute_epsilon(c * g, delta), eps)

    # zero gradients through the full loop: gamma=0 on a single-class bank
    # zeroes every gradient, so the perturbed step must equal the plain one
    feats = np.random.Generator(np.random.PCG64(55)).normal(size=(16, 4))
    bank = FeatureBank(feats, np.ones(16, dtype=np.uint8))
    base = dict(hidden_dim=8, batch_size=8, max_iterations=2, seed=5, gamma=0.0)
    sam_model, _ = train(bank, TrainConfig(**base, use_sam=True))
    plain_model, _ = train(bank, TrainConfig(**base, use_sam=False))
    assert np.array_equal(pack_params(sam_model), pack_params(plain_model))


# ---------------------------------------------------------------------------
# 6. end-to-end desk scale


def test_criterion_6_end_to_end_desk_scale():
    t0 = time.perf_counter()
    train_bank = generate_synthetic(500, 500, dim=16, separation=6.0, seed=61)
    holdout = generate_synthetic(250, 250, dim=16, separation=6.0, seed=62)
    # reference protocol: batch 32, lr 1e-3 cosine, alpha .8, gamma .5,
    # delta .05, eta .6, p 2; width 64 sized to the 16-dim desk-scale input
    cfg = TrainConfig(hidden_dim=64, max_iterations=10, seed=6)
    model, record = train(train_bank, cfg)
    assert evaluate(model, holdout).auc >= 0.99
    assert record.num_batches == 32 and len(record.epochs) == 10

    again, _ = train(train_bank, cfg)
    assert np.array_equal(pack_params(model), pack_params(again))
    assert np.array_equal(model.bn1_mean, again.bn1_mean)
    assert np.array_equal(model.bn2_var, again.bn2_var)
    assert time.perf_counter() - t0 < 120.0


# ---------------------------------------------------------------------------
# 7. imbalance non-inferiority


def test_criterion_7_imbalance_non_inferiority():
    t0 = time.perf_counter()
    full_aucs, base_aucs = [], []
    for s in range(3):
        train_bank = generate_synthetic(200, 1800, dim=4, separation=2.0, seed=1000 + s)
        holdout = generate_synthetic(100, 900, dim=4, separation=2.0, seed=2000 + s)
        shape = dict(hidden_dim=8, max_iterations=120, seed=s)
        full, _ = train(train_bank, TrainConfig(**shape))
        base, _ = train(train_bank, TrainConfig(
            **shape, use_cvar=False, use_auc=False, use_sam=False))
        full_aucs.append(evaluate(full, holdout).auc)
        base_aucs.append(evaluate(base, holdout).auc)
    assert np.mean(full_aucs) >= np.mean(base_aucs) - 0.01, (
        f"full {full_aucs} vs plain-BCE {base_aucs}"
    )
    assert time.perf_counter() - t0 < 300.0


# ---------------------------------------------------------------------------
# 8. ablation and sweep harness


def test_criterion_8_ablation_and_sweep_harness(tmp_path, capsys):
    bank = tmp_path / "bank.fb"
    assert main(["gen-synth", "--n-pos", "48", "--n-neg", "48", "--dim", "4",
                 "--sep", "4.0", "--seed", "8", "--out", str(bank)]) == 0
    small = ["--set", "hidden_dim=8", "--set", "batch_size=16",
             "--set", "max_iterations=3"]

    out = tmp_path / "ablate"
    assert main(["ablate", "--bank", str(bank), "--out", str(out), *small]) == 0
    rows = (out / "ablation.csv").read_text().strip().splitlines()
    assert rows[0] == "variant,auc"
    assert [r.split(",")[0] for r in rows[1:]] == [
        "V1_cvar_only", "V2_auc_only", "V3_cvar_auc", "V4_cvar_sam", "full",
    ]

    out_a = tmp_path / "sweep_a"
    assert main(["sweep", "--bank", str(bank), "--out", str(out_a),
                 "--parameter", "alpha", "--values", "0.1:0.9:0.1", *small]) == 0
    alpha_rows = (out_a / "sweep_alpha.csv").read_text().strip().splitlines()
    assert alpha_rows[0] == "alpha,auc" and len(alpha_rows) == 10
    parsed = [(float(r.split(",")[0]), float(r.split(",")[1])) for r in alpha_rows[1:]]
    assert [v for v, _ in parsed] == [round(0.1 * k, 12) for k in range(1, 10)]

    # two-stage protocol: fix the best alpha, then sweep gamma
    best_alpha = max(parsed, key=lambda row: row[1])[0]
    out_g = tmp_path / "sweep_g"
    assert main(["sweep", "--bank", str(bank), "--out", str(out_g),
                 "--parameter", "gamma", "--values", "0.1:0.9:0.1", *small,
                 "--set", f"alpha={best_alpha}"]) == 0
    gamma_rows = (out_g / "sweep_gamma.csv").read_text().strip().splitlines()
    assert gamma_rows[0] == "gamma,auc" and len(gamma_rows) == 10
    capsys.readouterr()


# ---------------------------------------------------------------------------
# 9. landscape slice


def test_criterion_9_landscape_slice(tmp_path):
    bank = generate_synthetic(24, 24, dim=4, separation=3.0, seed=9)
    cfg = TrainConfig(hidden_dim=8, batch_size=16, max_iterations=2, seed=9)
    model, _ = train(bank, cfg)

    labels = bank.labels.astype(np.int64)
    trace = forward(model, bank.features)
    own_loss = total_loss(trace.probs, labels, gamma=cfg.effective_gamma,
                          alpha=cfg.effective_alpha, eta=cfg.eta,
                          power=cfg.power, logits=trace.logits)[0].total

    for grid in (3, 5, 21):
        offsets, losses = landscape_slice(model, bank, cfg, grid=grid,
                                          radius=0.5, seed=grid)
        assert losses.shape == (grid, grid)
        assert losses[grid // 2, grid // 2] == own_loss
        assert offsets[grid // 2] == 0.0
        path = tmp_path / f"landscape_{grid}.csv"
        write_landscape_csv(offsets, losses, path)
        assert len(path.read_text().strip().splitlines()) == 1 + grid * grid
