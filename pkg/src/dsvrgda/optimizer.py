"""Stage-wise decentralized variance-reduced gradient descent ascent.

Each stage runs ``R`` synchronous rounds on every worker:

1. form the local estimate ``(phi, psi)`` (PAGE or ZeroSARAH),
2. gradient tracking: ``u <- W u - phi_prev + phi`` (``u = phi`` at r = 0),
3. local update: ``x <- W x - eta_x u``, ``y <- W y + eta_y v``.

At the end of the stage all workers pick the same random round index,
take their own iterate from that round, and replace it by the exact
network average (flooding over ``D`` rounds).  Every worker therefore
starts the next stage from the same point with zero consensus error.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng as rngmod
from .estimators import page_init, page_step, zerosarah_init, zerosarah_step
from .graph import exact_average, mix
from .metrics import (MetricsRecord, MetricsTrace, consensus_diagnostics, dist_to_saddle,
                      estimator_error, global_grad_norm_sq, primal_metrics)
from .problems.auc import auc_score
from .problems.base import ProblemConstants

VARIANTS = ("page", "zerosarah")
CONSENSUS_TOL = 1e-9


class DivergenceError(FloatingPointError):
    def __init__(self, stage, inner, what="iterate"):
        super().__init__(f"non-finite {what} at stage {stage}, inner iteration {inner}")
        self.stage = stage
        self.inner = inner


class ProtocolError(RuntimeError):
    """A protocol invariant (e.g. stage-start consensus) was violated."""


@dataclass
class RunConfig:
    variant: str = "page"
    eta_x: float = 0.01
    eta_y: float = 0.01
    S: int = 30
    R: int = 25
    p: float | None = None
    b: int | None = None
    rho: float | None = None
    b0: int | None = None
    b1: int | None = None
    master_seed: int = 0
    record_every: int = 1

    def validate(self, n):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not (self.eta_x > 0 and self.eta_y > 0):
            raise ValueError("learning rates must be positive")
        if self.S < 0 or self.R < 1:
            raise ValueError(f"need S >= 0 and R >= 1, got S={self.S}, R={self.R}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.variant == "page":
            if self.p is None or not 0 < self.p <= 1:
                raise ValueError(f"PAGE needs p in (0, 1], got {self.p}")
            _check_size("b", self.b, n)
        else:
            if self.rho is None or not 0 <= self.rho <= 1:
                raise ValueError(f"ZeroSARAH needs rho in [0, 1], got {self.rho}")
            _check_size("b0", self.b0, n)
            _check_size("b1", self.b1, n)

    def to_dict(self):
        return asdict(self)


def _check_size(name, value, n):
    if value is None or not 1 <= value <= n:
        raise ValueError(f"{name}={value} must lie in [1, n={n}]")


def ceil_sqrt(n):
    r = math.isqrt(n)
    return r if r * r == n else r + 1


def derive_config(variant, n, constants=None, lambda2=None, *, mode="experiment",
                  eta_x=None, eta_y=None, R=None, S=30, master_seed=0, record_every=1):
    """Hyperparameters from the theoretical schedules.

    PAGE: ``b = ceil(sqrt(n))``, ``p = b / (n + b)``.
    ZeroSARAH: ``b0 = n``, ``b1 = ceil(sqrt(n))``, ``rho = b1 / (2 n)``.

    ``mode="experiment"`` uses ``eta_x = eta_y = 0.01`` and ``R = ceil(sqrt(n))``.
    ``mode="theory"`` needs ``constants`` (mu, L) and sets
    ``eta_x = (1 - lambda)^2 / (kappa^2 L)``, ``eta_y = (1 - lambda)^2 / L``
    (unit leading constants) and ``R = ceil(4 / (eta_x mu))``.
    Explicit ``eta_x``, ``eta_y`` and ``R`` always win.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    b = ceil_sqrt(n)
    if mode == "experiment":
        ex = 0.01 if eta_x is None else eta_x
        ey = 0.01 if eta_y is None else eta_y
        inner = b if R is None else R
    elif mode == "theory":
        if constants is None:
            raise ValueError("theory mode needs problem constants")
        if not isinstance(constants, ProblemConstants):
            mu, L = constants
            if not mu > 0:
                raise ValueError(f"mu must be positive, got {mu}")
            constants = ProblemConstants(mu=mu, L=L)
        gap = 1.0 - (0.0 if lambda2 is None else lambda2)
        ex = gap ** 2 / (constants.kappa ** 2 * constants.L) if eta_x is None else eta_x
        ey = gap ** 2 / constants.L if eta_y is None else eta_y
        inner = math.ceil(4.0 / (ex * constants.mu)) if R is None else R
    else:
        raise ValueError(f"unknown mode {mode!r}")
    cfg = RunConfig(variant=variant, eta_x=ex, eta_y=ey, S=S, R=inner,
                    master_seed=master_seed, record_every=record_every)
    if variant == "page":
        cfg.b = b
        cfg.p = b / (n + b)
    else:
        cfg.b0 = n
        cfg.b1 = b
        cfg.rho = b / (2 * n)
    return cfg


@dataclass
class Workers:
    """Stacked per-worker state; row ``k`` belongs to worker ``k``."""

    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    estimators: list = field(default_factory=list)
    samples_done: np.ndarray | None = None

    @classmethod
    def at(cls, K, x0, y0):
        x = np.tile(np.asarray(x0, dtype=float), (K, 1))
        y = np.tile(np.asarray(y0, dtype=float), (K, 1))
        return cls(x=x, y=y, u=np.zeros_like(x), v=np.zeros_like(y),
                   phi=np.zeros_like(x), psi=np.zeros_like(y),
                   estimators=[None] * K, samples_done=np.zeros(K, dtype=np.int64))

    @property
    def num_workers(self):
        return self.x.shape[0]

    def samples(self):
        """Per-worker cumulative component-gradient evaluations."""
        cur = np.array([0 if e is None else e.samples for e in self.estimators])
        return self.samples_done + cur


@dataclass
class RunResult:
    trace: MetricsTrace
    x_bar: np.ndarray
    y_bar: np.ndarray
    workers: Workers
    comm_rounds: int = 0


def _local_update(workers, W, cfg):
    """x <- W x - eta_x u, y <- W y + eta_y v (ascent in y)."""
    workers.x = mix(W, workers.x) - cfg.eta_x * workers.u
    workers.y = mix(W, workers.y) + cfg.eta_y * workers.v


def stage_start(workers, W, problem, cfg, stage=0, observe=None):
    """Re-initialize every estimator, set ``u = phi``, ``v = psi`` and take the
    first parameter step of the stage.

    ``observe(workers)`` is called after the directions are formed and
    before the step, while all workers still hold the same iterate.
    """
    X, Y = workers.x, workers.y
    spread = max(np.max(np.abs(X - X[0])), np.max(np.abs(Y - Y[0])))
    if spread > CONSENSUS_TOL:
        raise ProtocolError(f"workers disagree by {spread:.3g} at stage {stage} start")
    for k in range(workers.num_workers):
        old = workers.estimators[k]
        if old is not None:
            workers.samples_done[k] += old.samples
        if cfg.variant == "page":
            state, phi, psi = page_init(problem, k, X[k], Y[k])
        else:
            brng = rngmod.stream(cfg.master_seed, rngmod.BATCH, k, stage, 0)
            state, phi, psi = zerosarah_init(problem, k, X[k], Y[k], cfg.b0, brng)
        workers.estimators[k] = state
        workers.phi[k] = phi
        workers.psi[k] = psi
    workers.u = workers.phi.copy()
    workers.v = workers.psi.copy()
    if observe is not None:
        observe(workers)
    _local_update(workers, W, cfg)
    return workers


def inner_iteration(workers, W, problem, cfg, stage, r, observe=None):
    """Round ``r >= 1``: estimate, track, update.  Mixing reads the previous
    round's values of all workers (synchronous semantics)."""
    if r < 1:
        raise ValueError("inner_iteration handles r >= 1; r = 0 is stage_start")
    phi_prev, psi_prev = workers.phi.copy(), workers.psi.copy()
    seed = cfg.master_seed
    for k in range(workers.num_workers):
        est = workers.estimators[k]
        brng = rngmod.stream(seed, rngmod.BATCH, k, stage, r)
        if cfg.variant == "page":
            crng = rngmod.stream(seed, rngmod.COIN, k, stage, r)
            phi, psi = page_step(est, problem, k, workers.x[k], workers.y[k],
                                 cfg.p, cfg.b, crng, brng)
        else:
            phi, psi = zerosarah_step(est, problem, k, workers.x[k], workers.y[k],
                                      cfg.rho, cfg.b1, brng)
        if phi.shape != phi_prev[k].shape or psi.shape != psi_prev[k].shape:
            raise RuntimeError(f"estimator returned wrong shape on worker {k}")
        workers.phi[k] = phi
        workers.psi[k] = psi
    workers.u = mix(W, workers.u) - phi_prev + workers.phi
    workers.v = mix(W, workers.v) - psi_prev + workers.psi
    if observe is not None:
        observe(workers)
    _local_update(workers, W, cfg)
    return workers


def stage_end(workers, adj, R, selection_rng, snapshots):
    """Pick one shared round index, average that round's iterates exactly.

    Returns ``(r_star, rounds_used)``.
    """
    if len(snapshots) != R:
        raise RuntimeError(f"expected {R} stage snapshots, got {len(snapshots)}")
    r_star = int(selection_rng.integers(R))
    X, Y = snapshots[r_star]
    workers.x, rounds_x = exact_average(adj, X)
    workers.y, _ = exact_average(adj, Y)
    return r_star, rounds_x


def _average(M):
    # anchored at row 0 so identical rows average to exactly that row
    return M[0] + (M - M[0]).mean(axis=0)


def _all_finite(workers):
    return all(np.all(np.isfinite(a)) for a in
               (workers.x, workers.y, workers.u, workers.v))


def run(problem, adj, W, cfg, *, test_data=None, metrics=True, observer=None,
        x0=None, y0=None):
    """Execute ``cfg.S`` stages and return a :class:`RunResult`.

    ``test_data``: optional ``(features, labels)`` for the test AUC column.
    ``observer(stage, inner, workers)`` is called at every round (not only
    recorded ones) after the directions are formed.
    """
    cfg.validate(problem.n)
    K = adj.num_workers
    if K != problem.num_workers or W.W.shape[0] != K:
        raise ValueError("topology and problem disagree on the number of workers")
    if x0 is None or y0 is None:
        ix, iy = problem.initial_point(rngmod.stream(cfg.master_seed, rngmod.INIT))
        x0 = ix if x0 is None else x0
        y0 = iy if y0 is None else y0
    workers = Workers.at(K, x0, y0)
    trace = MetricsTrace(metadata={"config": cfg.to_dict()})
    t0 = time.monotonic()
    rounds = 0
    saddle = problem.saddle if problem.saddle is not None else (None, None)

    def record(stage, inner, with_diagnostics=True):
        xb = _average(workers.x)
        yb = _average(workers.y)
        rec = MetricsRecord(stage=stage, inner=inner,
                            samples_per_worker=int(workers.samples().max()),
                            comm_rounds=rounds,
                            grad_norm_sq=global_grad_norm_sq(problem, xb, yb))
        rec.dist_to_saddle = dist_to_saddle(xb, yb, *saddle)
        rec.primal_gap, rec.duality_residual = primal_metrics(
            problem, xb, yb, problem.saddle_value)
        cx, cy, tu, tv = consensus_diagnostics(workers)
        rec.consensus_x, rec.consensus_y = cx, cy
        if with_diagnostics:
            rec.tracking_err_u, rec.tracking_err_v = tu, tv
            rec.estimator_err_x, rec.estimator_err_y = estimator_error(problem, workers)
        if test_data is not None:
            rec.auc_test = auc_score(problem.scores(xb, test_data[0]), None, test_data[1])
        rec.wall_ms = int((time.monotonic() - t0) * 1000)
        trace.append(rec)

    def hook(stage, inner):
        def _observe(ws):
            if not _all_finite(ws):
                raise DivergenceError(stage, inner, "direction")
            if observer is not None:
                observer(stage, inner, ws)
            if metrics and inner % cfg.record_every == 0:
                record(stage, inner)
        return _observe

    for s in range(cfg.S):
        snapshots = [(workers.x.copy(), workers.y.copy())]
        stage_start(workers, W, problem, cfg, s, observe=hook(s, 0))
        if not _all_finite(workers):
            raise DivergenceError(s, 0)
        for r in range(1, cfg.R):
            snapshots.append((workers.x.copy(), workers.y.copy()))
            rounds += 1
            inner_iteration(workers, W, problem, cfg, s, r, observe=hook(s, r))
            if not _all_finite(workers):
                raise DivergenceError(s, r)
        sel = rngmod.stream(cfg.master_seed, rngmod.SELECT, s)
        _, used = stage_end(workers, adj, cfg.R, sel, snapshots)
        rounds += used
    if metrics and cfg.S > 0:
        record(cfg.S, 0, with_diagnostics=False)
    return RunResult(trace=trace, x_bar=_average(workers.x), y_bar=_average(workers.y),
                     workers=workers, comm_rounds=rounds)
