"""Per-worker variance-reduced gradient estimators.

Both estimators produce a pair ``(phi, psi)`` estimating the local
gradients in ``x`` and ``y``.  One coin flip and one mini-batch per step
are shared between the two blocks.

Sample accounting (component-gradient evaluations, per worker): a full
local gradient costs ``n``; a mini-batch correction costs ``2 * b`` because
each index is evaluated at the current and the previous point.  Table
reads are free.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import sample_batch


@dataclass
class PageState:
    phi: np.ndarray
    psi: np.ndarray
    prev_x: np.ndarray
    prev_y: np.ndarray
    samples: int = 0


@dataclass
class ZeroSarahState:
    phi: np.ndarray
    psi: np.ndarray
    prev_x: np.ndarray
    prev_y: np.ndarray
    g_table: np.ndarray
    h_table: np.ndarray
    g_avg: np.ndarray
    h_avg: np.ndarray
    samples: int = 0


def _check_batch(size, n, name):
    if not 1 <= size <= n:
        raise ValueError(f"{name}={size} must lie in [1, n={n}]")


def page_init(problem, k, x, y):
    """Start a stage: exact local gradients at ``(x, y)``."""
    phi, psi = problem.local_grad(k, x, y)
    state = PageState(phi=phi, psi=psi, prev_x=x.copy(), prev_y=y.copy(),
                      samples=problem.n)
    return state, phi, psi


def page_step(state, problem, k, x, y, p, b, coin_rng, batch_rng):
    """One PAGE update.

    With probability ``p`` recompute the exact local gradients, otherwise
    add the mini-batch difference between the current and the previous
    point to the previous estimate.
    """
    _check_batch(b, problem.n, "b")
    if p >= 1.0 or coin_rng.random() < p:
        phi, psi = problem.local_grad(k, x, y)
        state.samples += problem.n
    else:
        idx = sample_batch(batch_rng, problem.n, b)
        cx, cy = problem.grad_batch(k, idx, x, y)
        px, py = problem.grad_batch(k, idx, state.prev_x, state.prev_y)
        phi = state.phi + (cx - px).mean(axis=0)
        psi = state.psi + (cy - py).mean(axis=0)
        state.samples += 2 * b
    state.phi, state.psi = phi, psi
    state.prev_x, state.prev_y = x.copy(), y.copy()
    return phi, psi


def zerosarah_init(problem, k, x, y, b0, batch_rng):
    """Start a stage with a ``b0`` mini-batch average.

    The tables start at zero and then store the gradients just computed for
    the ``b0`` indices, since the table refresh also runs on the first
    iteration of the stage.
    """
    _check_batch(b0, problem.n, "b0")
    idx = sample_batch(batch_rng, problem.n, b0)
    gx, gy = problem.grad_batch(k, idx, x, y)
    phi, psi = gx.mean(axis=0), gy.mean(axis=0)
    g_table = np.zeros((problem.n, problem.dx))
    h_table = np.zeros((problem.n, problem.dy))
    g_table[idx] = gx
    h_table[idx] = gy
    state = ZeroSarahState(phi=phi, psi=psi, prev_x=x.copy(), prev_y=y.copy(),
                           g_table=g_table, h_table=h_table,
                           g_avg=g_table.sum(axis=0) / problem.n,
                           h_avg=h_table.sum(axis=0) / problem.n,
                           samples=b0)
    return state, phi, psi


def zerosarah_step(state, problem, k, x, y, rho, b1, batch_rng):
    """One ZeroSARAH update, followed by the table refresh at ``(x, y)``.

    ``rho = 0`` reduces to the SPIDER/SARAH recursion.
    """
    _check_batch(b1, problem.n, "b1")
    idx = sample_batch(batch_rng, problem.n, b1)
    cx, cy = problem.grad_batch(k, idx, x, y)
    px, py = problem.grad_batch(k, idx, state.prev_x, state.prev_y)
    g_old, h_old = state.g_table[idx], state.h_table[idx]
    phi = ((1.0 - rho) * state.phi
           + rho * (state.g_avg + (px - g_old).mean(axis=0))
           + (cx - px).mean(axis=0))
    psi = ((1.0 - rho) * state.psi
           + rho * (state.h_avg + (py - h_old).mean(axis=0))
           + (cy - py).mean(axis=0))
    n = problem.n
    state.g_avg = state.g_avg + (cx - g_old).sum(axis=0) / n
    state.h_avg = state.h_avg + (cy - h_old).sum(axis=0) / n
    state.g_table[idx] = cx
    state.h_table[idx] = cy
    state.samples += 2 * b1
    state.phi, state.psi = phi, psi
    state.prev_x, state.prev_y = x.copy(), y.copy()
    return phi, psi
