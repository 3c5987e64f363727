"""Evaluation quantities, potential-function diagnostics and the run trace."""
from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, field, fields

import numpy as np

from .problems.base import UnboundedError


@dataclass
class MetricsRecord:
    stage: int
    inner: int
    samples_per_worker: int
    comm_rounds: int
    grad_norm_sq: float
    dist_to_saddle: float | None = None
    primal_gap: float | None = None
    duality_residual: float | None = None
    consensus_x: float | None = None
    consensus_y: float | None = None
    tracking_err_u: float | None = None
    tracking_err_v: float | None = None
    estimator_err_x: float | None = None
    estimator_err_y: float | None = None
    auc_test: float | None = None
    wall_ms: int = 0


CSV_HEADER = [f.name for f in fields(MetricsRecord)]


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


@dataclass
class MetricsTrace:
    records: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def append(self, record):
        if self.records:
            last = self.records[-1]
            if (record.samples_per_worker < last.samples_per_worker
                    or record.comm_rounds < last.comm_rounds):
                raise ValueError("trace counters must be nondecreasing")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return [getattr(r, name) for r in self.records]

    def stage_starts(self):
        return [r for r in self.records if r.inner == 0]

    def to_csv(self, fh=None):
        """Write CSV to ``fh`` (or return it as a string).  Absent metrics are
        empty fields."""
        buf = fh if fh is not None else io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for rec in self.records:
            writer.writerow([_fmt(v) for v in astuple(rec)])
        if fh is None:
            return buf.getvalue()
        return None


def read_csv(fh):
    """Parse a trace CSV back into records (metadata is not stored in CSV)."""
    reader = csv.reader(fh)
    header = next(reader)
    if header != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header}")
    ints = {"stage", "inner", "samples_per_worker", "comm_rounds", "wall_ms"}
    trace = MetricsTrace()
    for row in reader:
        kwargs = {}
        for name, cell in zip(header, row):
            if cell == "":
                kwargs[name] = None
            else:
                kwargs[name] = int(cell) if name in ints else float(cell)
        trace.records.append(MetricsRecord(**kwargs))
    return trace


def global_grad_norm_sq(problem, x, y):
    gx, gy = problem.full_grad(x, y)
    return float(gx @ gx + gy @ gy)


def dist_to_saddle(x, y, x_star, y_star):
    if x_star is None or y_star is None:
        return None
    dx = np.asarray(x) - x_star
    dy = np.asarray(y) - y_star
    return float(dx @ dx + dy @ dy)


def _spread(M):
    # shift by row 0 first so identical rows give an exact zero
    M = np.asarray(M)
    shifted = M - M[0]
    dev = shifted - shifted.mean(axis=0)
    return float(np.sum(dev * dev) / M.shape[0])


def consensus_diagnostics(workers):
    """``(1/K) ||Z - mean(Z)||_F^2`` for the stacked x, y, u and v."""
    return (_spread(workers.x), _spread(workers.y),
            _spread(workers.u), _spread(workers.v))


def tracking_gap(workers):
    """Max-norm distance between mean(u) and mean(phi), and mean(v) and mean(psi)."""
    gu = np.max(np.abs(workers.u.mean(axis=0) - workers.phi.mean(axis=0)))
    gv = np.max(np.abs(workers.v.mean(axis=0) - workers.psi.mean(axis=0)))
    return float(gu), float(gv)


def estimator_error(problem, workers):
    """Average squared distance of each worker's estimate from its exact
    local gradient at its own iterate."""
    ex = ey = 0.0
    K = workers.x.shape[0]
    for k in range(K):
        gx, gy = problem.local_grad(k, workers.x[k], workers.y[k])
        dx = workers.phi[k] - gx
        dy = workers.psi[k] - gy
        ex += float(dx @ dx)
        ey += float(dy @ dy)
    return ex / K, ey / K


def primal_metrics(problem, x, y, saddle_value=None):
    """``(g(x) - g(x*), g(x) - f(x, y))`` with ``g = max_y f``.

    Either entry is ``None`` when it cannot be evaluated.
    """
    try:
        g = problem.best_response_value(x)
    except (NotImplementedError, UnboundedError):
        return None, None
    gap = None if saddle_value is None else g - saddle_value
    return gap, g - problem.value(x, y)
