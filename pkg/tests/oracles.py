"""Independent oracles used by the test suite.

Everything here is implemented from first principles, separately from the
package code paths it checks: brute-force sorts, double loops, pairwise
counting and a plain long-run gradient-descent minimiser. Keep it that way;
the value of these tests is that the two sides share no code.
"""

from __future__ import annotations

import numpy as np


# --- logistic head instances + long-run descent oracle -------------------------

def make_head_instance(seed: int):
    """Random multinomial-logistic problem: gaussian blobs, n<=500, d<=16."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(40, 501))
    d = int(rng.integers(2, 17))
    c = int(rng.integers(2, 4))
    centers = rng.normal(0.0, 1.5, size=(c, d))
    y = rng.integers(0, c, size=n)
    while np.unique(y).size < 2:  # pragma: no cover - vanishingly unlikely
        y = rng.integers(0, c, size=n)
    x = centers[y] + rng.normal(0.0, 1.0, size=(n, d))
    l2 = float(10.0 ** rng.uniform(-2.0, -0.5))
    return x, y, l2, c


def head_objective(w: np.ndarray, b: np.ndarray, x: np.ndarray, y: np.ndarray, l2: float) -> float:
    logits = x @ w + b
    logits = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(logits).sum(axis=1))
    nll = -(logits[np.arange(len(y)), y] - log_norm).mean()
    return float(nll + 0.5 * l2 * (w**2).sum())


def descend_head(
    x: np.ndarray,
    y: np.ndarray,
    l2: float,
    n_classes: int,
    steps: int = 1_000_000,
) -> float:
    """Plain fixed-step gradient descent from zero for `steps` iterations.

    The step size is 1/L for a Lipschitz bound L of the gradient (softmax
    Hessian bound 1/2 on the data term), which guarantees monotone
    convergence on this convex objective.
    """
    n, d = x.shape
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    lam_max = float(np.linalg.eigvalsh((x.T @ x) / n).max())
    lr = 1.0 / (0.5 * (lam_max + 1.0) + l2)
    w = np.zeros((d, n_classes))
    b = np.zeros(n_classes)
    for _ in range(steps):
        logits = x @ w + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        err = (p - onehot) / n
        w -= lr * (x.T @ err + l2 * w)
        b -= lr * err.sum(axis=0)
    return head_objective(w, b, x, y, l2)


# --- retrieval -------------------------------------------------------------------

def brute_force_topk(delta: np.ndarray, corpus_rows: np.ndarray, k: int, cosine: bool):
    """Full sort of all similarities, ties broken by ascending corpus index."""
    d = np.asarray(delta, dtype=np.float64)
    rows = np.asarray(corpus_rows, dtype=np.float64)
    if cosine:
        dn = np.linalg.norm(d)
        d = d / dn if dn else d
        norms = np.linalg.norm(rows, axis=1)
        rows = rows / np.where(norms == 0.0, 1.0, norms)[:, None]
    sims = (rows * d).sum(axis=1)  # per-row dot, position-independent
    order = sorted(range(len(sims)), key=lambda i: (-sims[i], i))
    return order[: min(k, len(order))], sims


# --- precision@k ------------------------------------------------------------------

def brute_force_precision_at_k(gt_slices, pred_slices, k: int) -> float:
    """Literal double loop over ground-truth and predicted slices."""
    total = 0.0
    for gt_members in gt_slices:
        best = 0.0
        for ranked in pred_slices:
            top = ranked[: min(k, len(ranked))]
            if not top:
                continue
            hits = sum(1 for idx in top if idx in gt_members)
            best = max(best, hits / len(top))
        total += best
    return total / len(gt_slices)


# --- AUROC -------------------------------------------------------------------------

def pairwise_auroc(scores, labels) -> float:
    """O(n^2) pairwise counting: wins + half ties over all (pos, neg) pairs."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    diff = pos[:, None] - neg[None, :]
    wins = (diff > 0).sum() + 0.5 * (diff == 0).sum()
    return float(wins / (len(pos) * len(neg)))


# --- projection --------------------------------------------------------------------

def centered_ridge_fit(x: np.ndarray, y: np.ndarray, ridge: float):
    """Alternative-path ridge solution: centre the data, solve for W on the
    centred system, recover the intercept from the means."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    x_mean = x.mean(axis=0)
    y_mean = y.mean(axis=0)
    xc = x - x_mean
    yc = y - y_mean
    gram = xc.T @ xc + n * ridge * np.eye(x.shape[1])
    w = np.linalg.solve(gram, xc.T @ yc)
    b = y_mean - x_mean @ w
    return w, b
