"""End-to-end training: shuffled mini-batches, per-batch lambda fitting,
sharpness-aware perturbed gradients, and Adam with cosine annealing.

Per batch the loop runs: (a) clean forward; (b) per-example cross-entropy;
(c) lambda fitted on this batch by binary search; (d) backward at the clean
point and epsilon* from the sign of that gradient; (e) a second
forward/backward at theta + epsilon* reusing the clean pass's dropout masks
and normalization statistics, with lambda kept fixed; (f) Adam update from
the perturbed gradient at the cosine-annealed rate. Running normalization
statistics update exactly once per batch, from the clean pass.

Determinism contract: (bank, config) fully determine the trajectory, bit for
bit. The only randomness source is one PCG64 generator seeded from the
config, consumed in a fixed order: model init, then per epoch one
permutation, then per batch the dropout masks of the clean pass.

A trailing 1-row batch cannot be normalized (no batch variance), so when
n mod batch_size == 1 the last two batches merge; otherwise every partial
batch is kept and trained on.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .bank import FeatureBank, split_bank
from .config import TrainConfig
from .losses import total_loss
from .metrics import evaluate
from .mlp import (
    MlpModel,
    backward,
    forward,
    init_model,
    pack_grads,
    pack_params,
    param_count,
    unpack_params,
)
from .optim import AdamState, LrSchedule, adam_step, compute_epsilon, lr_at


class NanLossError(RuntimeError):
    """Training hit a non-finite loss or gradient; carries a state dump."""

    def __init__(self, message: str, state: dict):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_total: float
    mean_cvar: float
    mean_auc: float
    mean_lambda: float
    lr: float              # rate used at the epoch's first step
    wall_time_s: float


@dataclass
class TrainRunRecord:
    config: TrainConfig
    seed: int
    n_examples: int
    num_batches: int
    single_class_batches: int = 0
    epochs: list[EpochStats] = field(default_factory=list)
    checkpoint_path: str = ""


def _batch_bounds(n: int, batch_size: int) -> list[tuple[int, int]]:
    bounds = [(lo, min(lo + batch_size, n)) for lo in range(0, n, batch_size)]
    if len(bounds) > 1 and bounds[-1][1] - bounds[-1][0] == 1:
        lo, _ = bounds.pop()
        bounds[-1] = (bounds[-1][0], lo + 1)
    return bounds


def train(
    bank: FeatureBank,
    cfg: TrainConfig,
    progress=None,
) -> tuple[MlpModel, TrainRunRecord]:
    """Run the full loop; ``progress``, if given, is called with each epoch's
    EpochStats as it completes."""
    n = len(bank)
    if n == 0:
        raise ValueError("cannot train on an empty bank")
    if n < 2:
        raise ValueError("training needs at least 2 examples (batch statistics)")

    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    model = init_model(bank.dim, hidden=cfg.hidden_dim, dropout_rate=cfg.dropout_rate, rng=rng)
    bounds = _batch_bounds(n, cfg.batch_size)
    num_batches = len(bounds)
    schedule = LrSchedule(cfg.lr, cfg.max_iterations * num_batches, kind=cfg.lr_schedule)
    adam = AdamState.fresh(param_count(model))
    record = TrainRunRecord(config=cfg, seed=cfg.seed, n_examples=n, num_batches=num_batches)

    alpha = cfg.effective_alpha
    gamma = cfg.effective_gamma
    labels = bank.labels.astype(np.int64)
    step = 0
    for epoch in range(1, cfg.max_iterations + 1):
        t0 = time.perf_counter()
        perm = rng.permutation(n)
        totals = np.zeros(4)
        epoch_lr = None
        for lo, hi in bounds:
            idx = perm[lo:hi]
            x = bank.features[idx]
            y = labels[idx]
            lr = lr_at(schedule, step)
            if epoch_lr is None:
                epoch_lr = lr
            step += 1

            model.train()
            trace = forward(model, x, rng=rng, update_running=True)
            _abort_if_bad(trace.logits, "clean forward logits", cfg, epoch, step, None)
            report, dprob = total_loss(
                trace.probs, y, gamma=gamma, alpha=alpha,
                eta=cfg.eta, power=cfg.power, logits=trace.logits,
            )
            _abort_if_bad(report.total, "clean loss", cfg, epoch, step, report)
            grads = pack_grads(model, backward(model, trace, dprob))
            _abort_if_bad(grads, "clean gradient", cfg, epoch, step, report)

            theta = pack_params(model)
            if cfg.use_sam:
                eps = compute_epsilon(grads, cfg.delta, cfg.sam_variant)
                unpack_params(model, theta + eps)
                p_trace = forward(model, x, masks=trace.masks, bn_stats=trace.bn_stats)
                _abort_if_bad(p_trace.logits, "perturbed forward logits", cfg, epoch, step, report)
                p_report, p_dprob = total_loss(
                    p_trace.probs, y, gamma=gamma, alpha=alpha,
                    eta=cfg.eta, power=cfg.power, logits=p_trace.logits,
                    fixed_lambda=report.fitted_lambda,
                )
                _abort_if_bad(p_report.total, "perturbed loss", cfg, epoch, step, p_report)
                grads = pack_grads(model, backward(model, p_trace, p_dprob))
                _abort_if_bad(grads, "perturbed gradient", cfg, epoch, step, p_report)

            unpack_params(model, adam_step(adam, theta, grads, lr))

            totals += (report.total, report.cvar_value, report.auc_value, report.fitted_lambda)
            if report.n_pairs == 0:
                record.single_class_batches += 1

        means = totals / num_batches
        stats = EpochStats(
            epoch=epoch,
            mean_total=float(means[0]),
            mean_cvar=float(means[1]),
            mean_auc=float(means[2]),
            mean_lambda=float(means[3]),
            lr=float(epoch_lr),
            wall_time_s=time.perf_counter() - t0,
        )
        record.epochs.append(stats)
        if progress is not None:
            progress(stats)
    model.eval()
    return model, record


def _abort_if_bad(value, what: str, cfg, epoch: int, step: int, report) -> None:
    if np.isfinite(value).all() if isinstance(value, np.ndarray) else np.isfinite(value):
        return
    raise NanLossError(
        f"non-finite {what} at epoch {epoch}, step {step}",
        state={
            "what": what, "epoch": epoch, "step": step,
            "loss_report": report, "config": cfg,
        },
    )


# ---------------------------------------------------------------------------
# Ablation variants and hyperparameter sweeps (shared seed and split).

ABLATION_VARIANTS = (
    ("V1_cvar_only", dict(use_cvar=True, use_auc=False, use_sam=False)),
    ("V2_auc_only", dict(gamma=0.0, use_cvar=False, use_auc=True, use_sam=False)),
    ("V3_cvar_auc", dict(use_cvar=True, use_auc=True, use_sam=False)),
    ("V4_cvar_sam", dict(use_cvar=True, use_auc=False, use_sam=True)),
    ("full", dict(use_cvar=True, use_auc=True, use_sam=True)),
)

SWEEPABLE_PARAMETERS = ("alpha", "gamma")


def _fit_and_score(task) -> float:
    train_bank, holdout_bank, cfg = task
    model, _ = train(train_bank, cfg)
    return evaluate(model, holdout_bank).auc


def _run_jobs(tasks: list, jobs: int) -> list[float]:
    if jobs <= 1:
        return [_fit_and_score(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_fit_and_score, tasks))


def _shared_split(bank: FeatureBank, holdout_fraction: float, seed: int):
    n_pos = int(np.count_nonzero(bank.labels == 1))
    if n_pos == 0 or n_pos == len(bank):
        raise ValueError("ablation/sweep bank must contain both classes")
    train_bank, holdout_bank = split_bank(bank, holdout_fraction, seed)
    return train_bank, holdout_bank


def run_ablation(
    bank: FeatureBank,
    base: TrainConfig,
    holdout_fraction: float = 0.25,
    jobs: int = 1,
) -> list[tuple[str, float]]:
    """Train the five standard variants with one seed and one data split:
    tail loss only, ranking loss only, both, tail + sharpness, and the full
    method. Returns (variant name, held-out exact AUC) rows."""
    train_bank, holdout_bank = _shared_split(bank, holdout_fraction, base.seed)
    tasks = [
        (train_bank, holdout_bank, replace(base, **overrides))
        for _, overrides in ABLATION_VARIANTS
    ]
    aucs = _run_jobs(tasks, jobs)
    return [(name, auc) for (name, _), auc in zip(ABLATION_VARIANTS, aucs)]


def run_sweep(
    bank: FeatureBank,
    base: TrainConfig,
    parameter: str,
    values,
    holdout_fraction: float = 0.25,
    jobs: int = 1,
) -> list[tuple[float, float]]:
    """One training run per value of ``parameter`` (alpha or gamma), shared
    seed and split. Returns (value, held-out exact AUC) rows in input order."""
    if parameter not in SWEEPABLE_PARAMETERS:
        raise ValueError(f"parameter must be one of {SWEEPABLE_PARAMETERS}, got {parameter!r}")
    train_bank, holdout_bank = _shared_split(bank, holdout_fraction, base.seed)
    tasks = [
        (train_bank, holdout_bank, replace(base, **{parameter: float(v)}))
        for v in values
    ]
    aucs = _run_jobs(tasks, jobs)
    return [(float(v), auc) for v, auc in zip(values, aucs)]


# ---------------------------------------------------------------------------
# Loss landscape slice around a trained model.

def landscape_slice(
    model: MlpModel,
    bank: FeatureBank,
    cfg: TrainConfig,
    grid: int = 21,
    radius: float = 1.0,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Total loss over a 2-D lattice theta + a*d1 + b*d2.

    The two directions are standard normal draws, rescaled per parameter
    tensor so each tensor slice has the same norm as the model's (zeroed
    where the model's slice has norm 0). Offsets are an antisymmetrized
    linspace over [-radius, radius]: the lattice contains (-a, -b) for every
    (a, b), and odd grids hit (0, 0) exactly, where the loss equals the
    model's own loss bit for bit. Losses are eval-semantics (no dropout,
    running statistics) with lambda refitted at every lattice point.
    Returns (offsets, grid x grid losses) with rows indexed by a, columns by b.
    """
    if grid < 2:
        raise ValueError("grid must be at least 2")
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    from .mlp import param_slices

    rng = np.random.Generator(np.random.PCG64(seed))
    theta = pack_params(model)
    d1 = rng.standard_normal(theta.size)
    d2 = rng.standard_normal(theta.size)
    for _, sl, _ in param_slices(model):
        ref = float(np.linalg.norm(theta[sl]))
        for d in (d1, d2):
            norm = float(np.linalg.norm(d[sl]))
            d[sl] = 0.0 if (ref == 0.0 or norm == 0.0) else d[sl] * (ref / norm)

    offsets = np.linspace(-radius, radius, grid)
    offsets = (offsets - offsets[::-1]) / 2.0   # exact antisymmetry, exact 0 center

    probe = MlpModel(
        **{f: np.copy(getattr(model, f)) for f in (
            "w1", "b1", "w2", "b2", "w3", "b3",
            "bn1_scale", "bn1_shift", "bn1_mean", "bn1_var",
            "bn2_scale", "bn2_shift", "bn2_mean", "bn2_var",
        )},
        dropout_rate=model.dropout_rate,
        bn_momentum=model.bn_momentum,
        bn_eps=model.bn_eps,
        mode="eval",
    )
    labels = bank.labels.astype(np.int64)
    losses = np.empty((grid, grid))
    for i, a in enumerate(offsets):
        for j, b in enumerate(offsets):
            unpack_params(probe, theta + a * d1 + b * d2)
            trace = forward(probe, bank.features)
            report, _ = total_loss(
                trace.probs, labels, gamma=cfg.effective_gamma,
                alpha=cfg.effective_alpha, eta=cfg.eta, power=cfg.power,
                logits=trace.logits,
            )
            losses[i, j] = report.total
    return offsets, losses


# ---------------------------------------------------------------------------
# Plain-text artifacts: run record and plot-data CSVs.

def write_run_record(record: TrainRunRecord, path) -> None:
    """Flat key=value dump: full config, run shape, and per-epoch metrics."""
    from .config import config_to_text

    lines = [
        f"config.{line}" for line in config_to_text(record.config).strip().splitlines()
    ]
    lines += [
        f"seed={record.seed}",
        f"n_examples={record.n_examples}",
        f"num_batches={record.num_batches}",
        f"single_class_batches={record.single_class_batches}",
        f"epochs_completed={len(record.epochs)}",
    ]
    for es in record.epochs:
        prefix = f"epoch.{es.epoch}"
        lines += [
            f"{prefix}.mean_total={es.mean_total!r}",
            f"{prefix}.mean_cvar={es.mean_cvar!r}",
            f"{prefix}.mean_auc={es.mean_auc!r}",
            f"{prefix}.mean_lambda={es.mean_lambda!r}",
            f"{prefix}.lr={es.lr!r}",
            f"{prefix}.wall_time_s={es.wall_time_s:.3f}",
        ]
    if record.checkpoint_path:
        lines.append(f"final_checkpoint={record.checkpoint_path}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_sweep_csv(rows: list[tuple], path, value_column: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{value_column},auc\n")
        for value, auc in rows:
            fh.write(f"{float(value)!r},{float(auc)!r}\n")


def write_landscape_csv(offsets: np.ndarray, losses: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("a,b,loss\n")
        for i, a in enumerate(offsets):
            for j, b in enumerate(offsets):
                fh.write(f"{float(a)!r},{float(b)!r},{float(losses[i, j])!r}\n")
