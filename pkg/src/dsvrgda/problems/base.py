"""Finite-sum minimax problem abstraction.

The objective is ``f(x, y) = (1/K) sum_k (1/n) sum_i f_i^(k)(x, y)``,
minimized over ``x`` and maximized over ``y``.  Subclasses supply batched
component gradients; everything else is derived from them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class OracleError(RuntimeError):
    """A ground-truth oracle could not produce a trustworthy answer."""


class DegenerateProblemError(ValueError):
    pass


class UnboundedError(ArithmeticError):
    """``max_y f(x, y)`` is unbounded above for the given ``x``."""


@dataclass(frozen=True)
class ProblemConstants:
    mu: float
    L: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.L < self.mu:
            raise ValueError(f"L={self.L} must be >= mu={self.mu}")

    @property
    def kappa(self):
        return self.L / self.mu


class FiniteSumMinimaxProblem:
    """Base class.  Subclasses set ``num_workers``, ``n``, ``dx``, ``dy`` and
    implement :meth:`grad_batch` and :meth:`value_i`."""

    num_workers: int
    n: int
    dx: int
    dy: int

    # ground truth, when the problem has it
    saddle = None
    saddle_value = None

    def grad_batch(self, k, idx, x, y):
        """Component gradients ``(gx, gy)`` of shape ``(len(idx), dx|dy)``."""
        raise NotImplementedError

    def value_i(self, k, i, x, y):
        raise NotImplementedError

    def grad_x_i(self, k, i, x, y):
        return self.grad_batch(k, np.array([i]), x, y)[0][0]

    def grad_y_i(self, k, i, x, y):
        return self.grad_batch(k, np.array([i]), x, y)[1][0]

    def local_grad(self, k, x, y):
        """Exact gradient of the k-th worker's average loss."""
        gx, gy = self.grad_batch(k, np.arange(self.n), x, y)
        return gx.mean(axis=0), gy.mean(axis=0)

    def full_grad(self, x, y):
        gx = np.zeros(self.dx)
        gy = np.zeros(self.dy)
        for k in range(self.num_workers):
            lx, ly = self.local_grad(k, x, y)
            gx += lx
            gy += ly
        return gx / self.num_workers, gy / self.num_workers

    def local_value(self, k, x, y):
        return float(np.mean([self.value_i(k, i, x, y) for i in range(self.n)]))

    def value(self, x, y):
        return float(np.mean([self.local_value(k, x, y) for k in range(self.num_workers)]))

    def best_response_value(self, x):
        """``g(x) = max_y f(x, y)``; raise ``NotImplementedError`` if unknown."""
        raise NotImplementedError

    def initial_point(self, rng):
        """Shared starting point ``(x0, y0)`` for every worker."""
        return np.zeros(self.dx), np.zeros(self.dy)

    def summary(self):
        return {"type": type(self).__name__, "K": self.num_workers, "n": self.n,
                "dx": self.dx, "dy": self.dy}
