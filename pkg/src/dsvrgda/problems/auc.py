"""Minimax AUC maximization with a nonconvex regularizer.

The min variable is laid out as ``x = [w (d), x1_hat, x2_hat]`` and the max
variable ``y`` is a scalar.  For a sample ``(a, b)`` with score ``s = w^T a``:

    f_i = (1-p) (s - x1_hat)^2 [b=1]
          + 2 (1+y) (p s [b=-1] - (1-p) s [b=1])
          + p (s - x2_hat)^2 [b=-1]
          - p (1-p) y^2
          + gamma * sum_j w_j^2 / (1 + w_j^2)

with ``p`` the fraction of positives in the whole training set.
"""
from __future__ import annotations

import numpy as np

from .base import FiniteSumMinimaxProblem

DEFAULT_GAMMA = 1e-3


class AUCProblem(FiniteSumMinimaxProblem):
    def __init__(self, features, labels, gamma=DEFAULT_GAMMA, p_plus=None):
        """``features``: ``(K, n, d)`` dense array; ``labels``: ``(K, n)`` of +-1."""
        features = np.asarray(features, dtype=float)
        labels = np.asarray(labels)
        if features.ndim != 3 or labels.shape != features.shape[:2]:
            raise ValueError(f"shape mismatch: features {features.shape}, labels {labels.shape}")
        if not np.all((labels == 1) | (labels == -1)):
            raise ValueError("labels must be +1 or -1")
        if gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {gamma}")
        if p_plus is None:
            p_plus = float(np.mean(labels == 1))
        if not 0 < p_plus < 1:
            raise ValueError("training set must contain both classes")
        self.features = features
        self.pos = (labels == 1).astype(float)
        self.neg = (labels == -1).astype(float)
        self.p = p_plus
        self.gamma = float(gamma)
        self.num_workers, self.n, self.d = features.shape
        self.dx = self.d + 2
        self.dy = 1

    def _reg_grad(self, w):
        return self.gamma * 2.0 * w / (1.0 + w * w) ** 2

    def grad_batch(self, k, idx, x, y):
        p = self.p
        a = self.features[k, idx]
        pos, neg = self.pos[k, idx], self.neg[k, idx]
        w, x1, x2 = x[:self.d], x[self.d], x[self.d + 1]
        yv = y[0]
        s = a @ w
        r1 = (1 - p) * (s - x1) * pos
        r2 = p * (s - x2) * neg
        coef = 2.0 * r1 + 2.0 * (1.0 + yv) * (p * neg - (1 - p) * pos) + 2.0 * r2
        gx = np.empty((len(s), self.dx))
        gx[:, :self.d] = coef[:, None] * a + self._reg_grad(w)
        gx[:, self.d] = -2.0 * r1
        gx[:, self.d + 1] = -2.0 * r2
        gy = 2.0 * (p * s * neg - (1 - p) * s * pos) - 2.0 * p * (1 - p) * yv
        return gx, gy[:, None]

    def value_i(self, k, i, x, y):
        p = self.p
        a = self.features[k, i]
        pos, neg = self.pos[k, i], self.neg[k, i]
        w, x1, x2 = x[:self.d], x[self.d], x[self.d + 1]
        yv = y[0]
        s = a @ w
        return float((1 - p) * (s - x1) ** 2 * pos
                     + 2 * (1 + yv) * (p * s * neg - (1 - p) * s * pos)
                     + p * (s - x2) ** 2 * neg
                     - p * (1 - p) * yv ** 2
                     + self.gamma * np.sum(w * w / (1 + w * w)))

    def value(self, x, y):
        return float(np.mean([self._mean_value(k, x, y) for k in range(self.num_workers)]))

    def local_value(self, k, x, y):
        return self._mean_value(k, x, y)

    def _mean_value(self, k, x, y):
        p = self.p
        w, x1, x2 = x[:self.d], x[self.d], x[self.d + 1]
        yv = y[0]
        s = self.features[k] @ w
        pos, neg = self.pos[k], self.neg[k]
        vals = ((1 - p) * (s - x1) ** 2 * pos
                + 2 * (1 + yv) * (p * s * neg - (1 - p) * s * pos)
                + p * (s - x2) ** 2 * neg)
        return float(vals.mean() - p * (1 - p) * yv ** 2
                     + self.gamma * np.sum(w * w / (1 + w * w)))

    def best_response(self, x):
        """Closed-form ``argmax_y f(x, y)`` (f is a concave quadratic in y)."""
        p = self.p
        w = x[:self.d]
        m = np.mean([np.mean((p * self.neg[k] - (1 - p) * self.pos[k]) * (self.features[k] @ w))
                     for k in range(self.num_workers)])
        return np.array([m / (p * (1 - p))])

    def best_response_value(self, x):
        return self.value(x, self.best_response(x))

    def scores(self, x, X):
        return np.asarray(X) @ np.asarray(x)[:self.d]

    def summary(self):
        out = super().summary()
        out.update(d=self.d, p_plus=self.p, gamma=self.gamma)
        return out


def auc_build(train, partition, gamma=DEFAULT_GAMMA):
    """Assemble an :class:`AUCProblem` from a training Dataset and its Partition.

    ``p_plus`` is taken over the whole training set, not per shard.
    """
    labels_all = train.labels()
    p_plus = float(np.mean(labels_all == 1))
    if not 0 < p_plus < 1:
        raise ValueError("training set must contain both classes")
    features = np.stack([train.to_dense(shard) for shard in partition.shards])
    labels = np.stack([labels_all[list(shard)] for shard in partition.shards])
    return AUCProblem(features, labels, gamma=gamma, p_plus=p_plus)


def auc_score(scores_or_w, test, labels=None):
    """Wilcoxon-Mann-Whitney AUC: P(score_pos > score_neg) + 1/2 P(tie).

    Call as ``auc_score(w, test_dataset)`` or ``auc_score(scores, None, labels)``.
    """
    if test is not None:
        X = test.to_dense() if hasattr(test, "to_dense") else np.asarray(test[0])
        labels = test.labels() if hasattr(test, "labels") else np.asarray(test[1])
        w = np.asarray(scores_or_w, dtype=float)[:X.shape[1]]
        scores = X @ w
    else:
        scores = np.asarray(scores_or_w, dtype=float)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == -1))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes in the evaluation set")
    # midranks give tied pairs weight 1/2
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    midrank = np.cumsum(counts) - 0.5 * (counts - 1)
    rank_sum = midrank[inverse][labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))
