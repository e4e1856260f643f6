"""Training losses: tail-focused classification term, pairwise ranking
surrogate, and their blend, all with exact gradients w.r.t. the scores.

The classification term is a conditional value-at-risk over per-example
binary cross-entropy: the mean of the worst alpha-fraction of example
losses, computed as min over lambda of ``lambda + mean(relu(l - lambda)) / alpha``.
The inner minimization runs a binary search on the subgradient of that convex
objective. alpha = 1 recovers the plain mean exactly.

The ranking surrogate pushes every generated/real score pair apart by a
margin eta: pairs already separated by at least eta contribute nothing,
others contribute ``(eta - (s_pos - s_neg)) ** power``, averaged over all
pairs. It depends only on score differences, so it is translation-invariant.

Gradients treat the fitted lambda as a constant (envelope theorem for the
inner min). Examples whose loss ties lambda exactly get subgradient 0; this
tie rule is deterministic and only matters on a measure-zero set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Probabilities are clamped into [PROB_EPS, 1 - PROB_EPS] before any log, so
# the cross-entropy stays finite even on saturated scores.
PROB_EPS = 1e-12

LAMBDA_TOL = 1e-12
LAMBDA_MAX_ITER = 200


@dataclass(frozen=True)
class LossReport:
    """Per-batch loss breakdown: total = gamma * cvar + (1 - gamma) * auc.

    n_pairs is the number of positive-negative pairs the ranking term saw;
    0 flags a single-class batch, where the ranking term is defined as 0.
    """

    total: float
    cvar_value: float
    auc_value: float
    fitted_lambda: float
    gamma: float
    n_pairs: int


def _check_labels(labels: np.ndarray) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {y.shape}")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return y.astype(np.float64)


def bce_per_example(probs, labels, logits=None):
    """Binary cross-entropy per example and its derivative w.r.t. the score.

    Scores are clamped into [PROB_EPS, 1 - PROB_EPS] before the log. When the
    raw logits are available they give the loss values in overflow-free form
    (softplus of the signed logit); the derivative is always taken in score
    space for the chain through the network head.
    """
    p_raw = np.asarray(probs, dtype=np.float64)
    y = _check_labels(labels)
    if p_raw.shape != y.shape:
        raise ValueError(f"probs shape {p_raw.shape} != labels shape {y.shape}")
    p = np.clip(p_raw, PROB_EPS, 1.0 - PROB_EPS)
    if logits is None:
        losses = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    else:
        z = np.asarray(logits, dtype=np.float64)
        losses = y * np.logaddexp(0.0, -z) + (1.0 - y) * np.logaddexp(0.0, z)
    dloss_dprob = (p - y) / (p * (1.0 - p))
    return losses, dloss_dprob


def cvar_lambda_star(losses, alpha, tol: float = LAMBDA_TOL, max_iter: int = LAMBDA_MAX_ITER):
    """Minimize phi(lam) = lam + mean(relu(l - lam)) / alpha over lam.

    Returns (lambda, value). The subgradient of phi is
    ``1 - count(l > lam) / (alpha * n)``, nondecreasing in lam, so a sign
    binary search over [min l, max l] finds the minimizer; flat stretches
    resolve to their lower end. alpha = 1 short-circuits to the exact mean
    with lambda at min(l).
    """
    l = np.asarray(losses, dtype=np.float64)
    if l.ndim != 1 or l.size == 0:
        raise ValueError("losses must be a non-empty 1-D vector")
    if not np.isfinite(l).all():
        raise ValueError("losses must be finite")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    if tol <= 0.0:
        raise ValueError("tol must be positive")

    lo = float(l.min())
    hi = float(l.max())
    if alpha == 1.0:
        return lo, float(l.mean())

    an = alpha * l.size

    def subgrad(lam: float) -> float:
        return 1.0 - np.count_nonzero(l > lam) / an

    if subgrad(lo) >= 0.0:
        lam = lo
    else:
        # invariant: subgrad(lo) < 0 <= subgrad(hi); a tied midpoint moves hi
        # down, steering toward the lower end of a flat minimum.
        for _ in range(max_iter):
            if hi - lo <= tol:
                break
            mid = 0.5 * (lo + hi)
            if subgrad(mid) < 0.0:
                lo = mid
            else:
                hi = mid
        lam = hi
    value = lam + float(np.maximum(l - lam, 0.0).sum()) / an
    return lam, value


def cvar_loss_and_grad(losses, alpha, tol: float = LAMBDA_TOL, max_iter: int = LAMBDA_MAX_ITER):
    """Tail loss value plus dValue/dl_i, with the fitted lambda.

    Each example strictly above lambda carries 1 / (alpha * n); examples at
    or below lambda carry 0, except alpha = 1 where every example carries
    1 / n (the mean-loss gradient).
    """
    l = np.asarray(losses, dtype=np.float64)
    lam, value = cvar_lambda_star(l, alpha, tol=tol, max_iter=max_iter)
    n = l.size
    if alpha == 1.0:
        grad = np.full(n, 1.0 / n)
    else:
        grad = np.where(l > lam, 1.0 / (alpha * n), 0.0)
    return value, grad, lam


def cvar_fixed_lambda(losses, lam: float, alpha: float):
    """Tail loss value and gradient at a caller-supplied lambda.

    Used by the sharpness-aware second pass, which keeps the lambda fitted on
    the clean pass. alpha = 1 still means the exact mean with uniform
    gradient, whatever lambda is passed.
    """
    l = np.asarray(losses, dtype=np.float64)
    if l.ndim != 1 or l.size == 0:
        raise ValueError("losses must be a non-empty 1-D vector")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    n = l.size
    if alpha == 1.0:
        return float(l.mean()), np.full(n, 1.0 / n)
    an = alpha * n
    value = lam + float(np.maximum(l - lam, 0.0).sum()) / an
    grad = np.where(l > lam, 1.0 / an, 0.0)
    return value, grad


def auc_surrogate(pos_scores, neg_scores, eta: float = 0.6, power: float = 2.0):
    """Margin-hinge ranking penalty over all positive-negative score pairs.

    value = mean over pairs of ``(eta - (s_pos - s_neg)) ** power`` where the
    difference falls short of eta, else 0. Returns (value, dValue/dPos,
    dValue/dNeg); the partials are exact since the hinge is C^1 for power > 1.
    """
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("need at least one positive and one negative score")
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"eta must be in (0, 1], got {eta}")
    if power <= 1.0:
        raise ValueError(f"power must be > 1, got {power}")

    gap = np.maximum(eta - (pos[:, None] - neg[None, :]), 0.0)
    n_pairs = pos.size * neg.size
    value = float((gap ** power).sum()) / n_pairs
    slope = power * gap ** (power - 1.0) / n_pairs
    return value, -slope.sum(axis=1), slope.sum(axis=0)


def total_loss(
    scores,
    labels,
    gamma: float = 0.5,
    alpha: float = 0.8,
    eta: float = 0.6,
    power: float = 2.0,
    logits=None,
    fixed_lambda: float | None = None,
    tol: float = LAMBDA_TOL,
    max_iter: int = LAMBDA_MAX_ITER,
):
    """Blend of the tail loss over per-example cross-entropy and the pairwise
    ranking surrogate: ``gamma * cvar + (1 - gamma) * auc``.

    Returns (LossReport, dTotal/dScore). A single-class batch has no pairs;
    its ranking term is 0 with zero gradient and n_pairs = 0 in the report
    (gamma is not renormalized). ``fixed_lambda`` skips the lambda fit and
    evaluates the tail term at the given threshold (sharpness-aware second
    pass); by default lambda is fitted on these losses.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    ell, dell_dscore = bce_per_example(s, y, logits=logits)
    if fixed_lambda is None:
        cvar_value, dcvar_dell, lam = cvar_loss_and_grad(ell, alpha, tol=tol, max_iter=max_iter)
    else:
        lam = fixed_lambda
        cvar_value, dcvar_dell = cvar_fixed_lambda(ell, lam, alpha)
    grad = gamma * dcvar_dell * dell_dscore

    pos_idx = np.flatnonzero(y == 1)
    neg_idx = np.flatnonzero(y == 0)
    if pos_idx.size and neg_idx.size:
        auc_value, dpos, dneg = auc_surrogate(s[pos_idx], s[neg_idx], eta=eta, power=power)
        n_pairs = pos_idx.size * neg_idx.size
        grad[pos_idx] += (1.0 - gamma) * dpos
        grad[neg_idx] += (1.0 - gamma) * dneg
    else:
        auc_value = 0.0
        n_pairs = 0

    report = LossReport(
        total=gamma * cvar_value + (1.0 - gamma) * auc_value,
        cvar_value=cvar_value,
        auc_value=auc_value,
        fitted_lambda=lam,
        gamma=gamma,
        n_pairs=n_pairs,
    )
    return report, grad
