"""Regression, pairwise ranking and domain losses with their gradients."""
from __future__ import annotations

import numpy as np

from .layers import sigmoid

PROB_EPS = 1e-7


def _softplus(x):
    return np.logaddexp(0.0, x)


def loss_regression(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=float)
    y = np.asarray(targets, dtype=float)
    if p.size == 0:
        raise ValueError("regression loss of an empty batch")
    if p.shape != y.shape:
        raise ValueError("predictions and targets differ in shape")
    return float(np.mean((p - y) ** 2))


def grad_regression(predictions, targets) -> np.ndarray:
    p = np.asarray(predictions, dtype=float)
    return 2.0 * (p - np.asarray(targets, dtype=float)) / p.size


def _ranking_pairs(targets):
    y = np.asarray(targets, dtype=float)
    diff = y[:, None] - y[None, :]
    return diff, diff > 0


def loss_ranking(predictions, targets) -> float:
    """Pairwise cross-entropy over ordered pairs with y_i > y_j.

    The target probability is sigmoid(y_i - y_j) and the predicted one
    sigmoid(p_i - p_j).  The sum is divided by n(n-1).  Batches without a
    strictly ordered pair give 0.
    """
    p = np.asarray(predictions, dtype=float)
    n = p.size
    if n < 2:
        raise ValueError("ranking loss needs at least 2 instances")
    diff, mask = _ranking_pairs(targets)
    if not mask.any():
        return 0.0
    s = (p[:, None] - p[None, :])[mask]
    target = sigmoid(diff[mask])
    # -P log sig(s) - (1-P) log(1 - sig(s)) == softplus(s) - P s
    return float((_softplus(s) - target * s).sum() / (n * (n - 1)))


def grad_ranking(predictions, targets) -> np.ndarray:
    p = np.asarray(predictions, dtype=float)
    n = p.size
    diff, mask = _ranking_pairs(targets)
    g = np.zeros(n)
    if n < 2 or not mask.any():
        return g
    coef = np.zeros((n, n))
    s = p[:, None] - p[None, :]
    coef[mask] = sigmoid(s[mask]) - sigmoid(diff[mask])
    coef /= n * (n - 1)
    return coef.sum(axis=1) - coef.sum(axis=0)


def loss_domain(probabilities, labels) -> float:
    """Binary cross-entropy with probabilities clamped to [eps, 1 - eps]."""
    q = np.clip(np.asarray(probabilities, dtype=float), PROB_EPS, 1.0 - PROB_EPS)
    d = np.asarray(labels, dtype=float)
    if q.size == 0:
        raise ValueError("domain loss of an empty batch")
    return float(np.mean(-d * np.log(q) - (1.0 - d) * np.log(1.0 - q)))


def grad_domain(probabilities, labels) -> np.ndarray:
    """Gradient of :func:`loss_domain` w.r.t. the unclamped probabilities."""
    raw = np.asarray(probabilities, dtype=float)
    q = np.clip(raw, PROB_EPS, 1.0 - PROB_EPS)
    d = np.asarray(labels, dtype=float)
    g = (-d / q + (1.0 - d) / (1.0 - q)) / raw.size
    return np.where((raw > PROB_EPS) & (raw < 1.0 - PROB_EPS), g, 0.0)


def joint_loss(l_reg: float, l_rank: float, l_domain: float, alpha: float, beta: float) -> float:
    """(1 - alpha) L_reg + alpha L_rank - beta L_domain."""
    return (1.0 - alpha) * l_reg + alpha * l_rank - beta * l_domain
