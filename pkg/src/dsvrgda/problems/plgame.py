"""Two-player quadratic PL game.

Each component is

    f_i(x, y) = 1/2 x^T a_i a_i^T x - 1/2 y^T b_i b_i^T y + x^T c_i c_i^T y

so worker ``k`` sees ``1/2 x^T A_k x - 1/2 y^T B_k y + x^T C_k y`` with
``A_k`` the average outer product of its ``a_i`` (likewise ``B_k``, ``C_k``).
"""
from __future__ import annotations

import numpy as np

from .. import rng as rngmod
from .base import (DegenerateProblemError, FiniteSumMinimaxProblem, OracleError,
                   ProblemConstants, UnboundedError)

SADDLE_TOL = 1e-8
RCOND = 1e-10


def _outer_mean(v):
    M = v.T @ v / v.shape[0]
    return 0.5 * (M + M.T)


class PLGameProblem(FiniteSumMinimaxProblem):
    """Quadratic game built from factor arrays of shape ``(K, n, d)``."""

    def __init__(self, a, b, c):
        a, b, c = (np.asarray(v, dtype=float) for v in (a, b, c))
        if not (a.shape == b.shape == c.shape) or a.ndim != 3:
            raise ValueError(f"factor arrays must share shape (K, n, d); got "
                             f"{a.shape}, {b.shape}, {c.shape}")
        self.a, self.b, self.c = a, b, c
        self.num_workers, self.n, self.d = a.shape
        self.dx = self.dy = self.d
        self.A_k = np.stack([_outer_mean(v) for v in a])
        self.B_k = np.stack([_outer_mean(v) for v in b])
        self.C_k = np.stack([_outer_mean(v) for v in c])
        self.A = self.A_k.mean(axis=0)
        self.B = self.B_k.mean(axis=0)
        self.C = self.C_k.mean(axis=0)
        self.saddle = None
        self.saddle_value = None

    def grad_batch(self, k, idx, x, y):
        a, b, c = self.a[k, idx], self.b[k, idx], self.c[k, idx]
        gx = a * (a @ x)[:, None] + c * (c @ y)[:, None]
        gy = -b * (b @ y)[:, None] + c * (c @ x)[:, None]
        return gx, gy

    def value_i(self, k, i, x, y):
        a, b, c = self.a[k, i], self.b[k, i], self.c[k, i]
        return float(0.5 * (a @ x) ** 2 - 0.5 * (b @ y) ** 2 + (c @ x) * (c @ y))

    def local_grad(self, k, x, y):
        return self.A_k[k] @ x + self.C_k[k] @ y, self.C_k[k].T @ x - self.B_k[k] @ y

    def full_grad(self, x, y):
        return self.A @ x + self.C @ y, self.C.T @ x - self.B @ y

    def value(self, x, y):
        return float(0.5 * x @ self.A @ x - 0.5 * y @ self.B @ y + x @ self.C @ y)

    def local_value(self, k, x, y):
        return float(0.5 * x @ self.A_k[k] @ x - 0.5 * y @ self.B_k[k] @ y
                     + x @ self.C_k[k] @ y)

    def best_response_value(self, x):
        return pl_best_response_value(self, x)

    def initial_point(self, rng):
        return rng.standard_normal(self.dx), rng.standard_normal(self.dy)

    def attach_saddle(self):
        """Compute and cache the min-norm saddle point; returns ``self``."""
        self.saddle = saddle_point(self)
        self.saddle_value = self.value(*self.saddle)
        return self

    def summary(self):
        out = super().summary()
        out["d"] = self.d
        return out


def _sqrt_psd(S):
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    return V * np.sqrt(np.clip(w, 0.0, None))


def generate_pl_game(K=10, n=600, d=10, rank=5, seed=0, unit_spectrum=False):
    """Random PL game.

    For each worker (in order) and each of A, B, C (in order) a covariance
    is built and ``n`` Gaussian samples drawn from it, each from its own
    substream ``(seed, k, matrix)``.  A and B covariances are ``P diag(l) P^T``
    with ``P`` a ``d x rank`` orthonormal basis and ``l ~ U[1e-5, 1]``
    (``l = 1`` if ``unit_spectrum``).  The C covariance is ``0.1 Q Q^T`` with
    ``Q`` a standard Gaussian ``d x d`` matrix.
    """
    if not 1 <= rank <= d:
        raise ValueError(f"rank must lie in [1, d={d}], got {rank}")
    if K < 1 or n < 1:
        raise ValueError(f"K and n must be positive, got K={K}, n={n}")
    factors = np.empty((3, K, n, d))
    for k in range(K):
        for m in range(3):
            rng = rngmod.stream(seed, rngmod.PROBLEM, k, m)
            if m < 2:
                P, _ = np.linalg.qr(rng.standard_normal((d, rank)))
                lam = np.ones(rank) if unit_spectrum else rng.uniform(1e-5, 1.0, rank)
                cov = (P * lam) @ P.T
            else:
                Q = rng.standard_normal((d, d))
                cov = 0.1 * Q @ Q.T
            factors[m, k] = rng.standard_normal((n, d)) @ _sqrt_psd(cov).T
    return PLGameProblem(*factors)


def saddle_point(g):
    """Min-norm solution of the stationarity system of the global game.

    Solves ``[[A, C], [C^T, -B]] z = 0`` by SVD least squares with cutoff
    ``1e-10 * sigma_max`` and checks the gradient residual before returning.
    """
    d = g.d
    M = np.block([[g.A, g.C], [g.C.T, -g.B]])
    z, *_ = np.linalg.lstsq(M, np.zeros(2 * d), rcond=RCOND)
    x, y = z[:d], z[d:]
    gx, gy = g.full_grad(x, y)
    resid = np.linalg.norm(gx) + np.linalg.norm(gy)
    if not resid <= SADDLE_TOL:
        raise OracleError(f"saddle residual {resid:.3g} exceeds {SADDLE_TOL}")
    return x, y


def estimate_constants(g):
    """Smoothness from the stacked Jacobian, PL constant from A and B spectra."""
    J = np.block([[g.A, g.C], [g.C.T, g.B]])
    L = float(np.linalg.svd(J, compute_uv=False)[0])
    eigs = np.concatenate([np.linalg.eigvalsh(g.A), np.linalg.eigvalsh(g.B)])
    nonzero = eigs[eigs > RCOND * L]
    if nonzero.size == 0:
        raise DegenerateProblemError("A and B have no eigenvalue above the cutoff")
    mu = float(nonzero.min())
    return ProblemConstants(mu=mu, L=max(L, mu))


def pl_best_response_value(g, x):
    """``max_y f(x, y)`` via the least-squares best response ``B y = C^T x``."""
    rhs = g.C.T @ x
    y, *_ = np.linalg.lstsq(g.B, rhs, rcond=RCOND)
    if np.linalg.norm(g.B @ y - rhs) > SADDLE_TOL * max(1.0, np.linalg.norm(rhs)):
        raise UnboundedError("C^T x is not in the range of B; max over y is +inf")
    return g.value(x, y)
