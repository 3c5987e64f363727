"""Command-line experiment runner.

    dsvrgda run [--config FILE] [--key value ...]

Configuration is a flat ``key = value`` file (or a JSON sidecar from a
previous run); command-line ``--key value`` flags override it.  Output is a
CSV trace plus a JSON sidecar holding the fully resolved settings.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from . import __version__
from .data import load_libsvm, partition_to_workers, split_train_test
from .graph import build_topology, canonical_kind, metropolis_weights
from .optimizer import DivergenceError, derive_config, run
from .problems import DEFAULT_GAMMA, auc_build, generate_pl_game

OUTPUT_DIR_ENV = "DSVRGDA_OUTPUT_DIR"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


class UsageError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    experiment: str = "plgame"
    variant: str = "page"
    topology: str = "line"
    workers: int = 10
    edge_prob: float = 0.5
    graph_seed: int = 0
    # plgame
    n: int = 600
    d: int = 10
    rank: int = 5
    # auc
    dataset: str | None = None
    dim: int | None = None
    test_fraction: float = 0.2
    gamma: float = DEFAULT_GAMMA
    data_seed: int = 0
    # run
    seed: int = 0
    mode: str = "experiment"
    stages: int = 30
    inner: int | None = None
    eta_x: float | None = None
    eta_y: float | None = None
    p: float | None = None
    b: int | None = None
    rho: float | None = None
    b0: int | None = None
    b1: int | None = None
    record_every: int = 1
    output: str | None = None

    def validate(self):
        if self.experiment not in ("plgame", "auc"):
            raise UsageError(f"experiment: expected plgame or auc, got {self.experiment!r}")
        if self.variant not in ("page", "zerosarah"):
            raise UsageError(f"variant: expected page or zerosarah, got {self.variant!r}")
        try:
            self.topology = canonical_kind(self.topology)
        except ValueError as exc:
            raise UsageError(f"topology: {exc}") from None
        if self.experiment == "auc" and not self.dataset:
            raise UsageError("dataset: required for experiment = auc")
        if self.workers < 1:
            raise UsageError("workers: must be >= 1")
        if self.mode not in ("experiment", "theory"):
            raise UsageError(f"mode: expected experiment or theory, got {self.mode!r}")
        return self

    def output_path(self):
        if self.output:
            return Path(self.output)
        base = Path(os.environ.get(OUTPUT_DIR_ENV, "."))
        return base / f"{self.experiment}_{self.variant}_{self.topology}.csv"


_FIELD_TYPES = {}
for _f in fields(ExperimentSpec):
    _t = str(_f.type)
    _FIELD_TYPES[_f.name] = int if _t.startswith("int") else float if _t.startswith("float") else str


def _convert(key, raw):
    if key not in _FIELD_TYPES:
        raise UsageError(f"unknown key {key!r}")
    if raw is None:
        return None
    if isinstance(raw, str) and raw.strip().lower() in ("", "none", "null"):
        return None
    typ = _FIELD_TYPES[key]
    try:
        if typ is int:
            if isinstance(raw, str):
                value = float(raw)
                if not value.is_integer():
                    raise ValueError
                return int(value)
            return int(raw)
        return typ(raw)
    except (TypeError, ValueError):
        raise UsageError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from None


def parse_config_text(text):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key = key.strip()
        out[key] = _convert(key, value.strip())
    return out


def _load_config(path):
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        doc = json.loads(text)
        settings = doc.get("spec", doc)
        return {k: _convert(k, v) for k, v in settings.items()}
    return parse_config_text(text)


def _build_parser():
    parser = argparse.ArgumentParser(prog="dsvrgda", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run one experiment and write its trace")
    runp.add_argument("--config", help="key = value file or JSON sidecar")
    for f in fields(ExperimentSpec):
        runp.add_argument(f"--{f.name}", f"--{f.name.replace('_', '-')}", dest=f.name,
                          default=None, metavar=f.name.upper())
    return parser


def parse_spec(argv=None, config_text=None):
    """Resolve an :class:`ExperimentSpec` from defaults, a config and flags.

    Later sources win: defaults, then ``config_text`` or ``--config``, then
    command-line flags.
    """
    argv = list(argv or [])
    if argv and argv[0] != "run":
        argv = ["run"] + argv
    if not argv:
        argv = ["run"]
    try:
        ns = _build_parser().parse_args(argv)
    except SystemExit as exc:
        if exc.code == 0:
            raise
        raise UsageError("invalid command line") from exc
    settings = {}
    if config_text is not None:
        settings.update(parse_config_text(config_text))
    if ns.config:
        settings.update(_load_config(ns.config))
    for f in fields(ExperimentSpec):
        raw = getattr(ns, f.name)
        if raw is not None:
            settings[f.name] = _convert(f.name, raw)
    spec = ExperimentSpec(**{k: v for k, v in settings.items() if v is not None})
    return spec.validate()


def resolve_run_config(spec, n, lambda2=None, constants=None):
    """Fill every RunConfig field from the default schedules plus overrides."""
    cfg = derive_config(spec.variant, n, constants, lambda2, mode=spec.mode,
                        eta_x=spec.eta_x, eta_y=spec.eta_y, R=spec.inner,
                        S=spec.stages, master_seed=spec.seed,
                        record_every=spec.record_every)
    for key in ("p", "b", "rho", "b0", "b1"):
        value = getattr(spec, key)
        if value is not None:
            setattr(cfg, key, value)
    return cfg


def version_string():
    try:
        out = subprocess.run(["git", "describe", "--tags", "--always", "--dirty"],
                             cwd=Path(__file__).parent, capture_output=True,
                             text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"v{__version__}-g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{__version__}"


def execute(spec, stream=sys.stderr):
    """Run ``spec``; write the CSV and JSON sidecar.  Returns an exit code."""
    try:
        return _execute(spec)
    except UsageError as exc:
        _report(stream, "cli", exc)
        return EXIT_USAGE
    except DivergenceError as exc:
        _report(stream, "optimizer", exc)
        return EXIT_DIVERGED
    except OSError as exc:
        _report(stream, "io", exc)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001 - last-resort reporting
        _report(stream, type(exc).__module__.rsplit(".", 1)[-1], exc)
        return EXIT_ERROR


def _report(stream, where, exc):
    print(f"dsvrgda: error [{where}]: {exc}", file=stream)


def _execute(spec):
    spec.validate()
    adj = build_topology(spec.topology, spec.workers, spec.edge_prob, spec.graph_seed)
    W = metropolis_weights(adj)
    test_data = None
    if spec.experiment == "plgame":
        problem = generate_pl_game(spec.workers, spec.n, spec.d, spec.rank,
                                   seed=spec.data_seed).attach_saddle()
        constants = None
        if spec.mode == "theory":
            from .problems import estimate_constants
            constants = estimate_constants(problem)
    else:
        ds = load_libsvm(spec.dataset, dim=spec.dim)
        train, test = split_train_test(ds, spec.test_fraction, spec.data_seed)
        part = partition_to_workers(train, spec.workers, spec.data_seed)
        problem = auc_build(train, part, gamma=spec.gamma)
        test_data = (test.to_dense(), test.labels())
        constants = None
        if spec.mode == "theory":
            raise UsageError("mode: theory needs problem constants, unavailable for auc")
    cfg = resolve_run_config(spec, problem.n, W.lambda2, constants)
    result = run(problem, adj, W, cfg, test_data=test_data)

    out = spec.output_path()
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        result.trace.to_csv(fh)
    resolved = asdict(spec)
    resolved.update(inner=cfg.R, eta_x=cfg.eta_x, eta_y=cfg.eta_y, p=cfg.p, b=cfg.b,
                    rho=cfg.rho, b0=cfg.b0, b1=cfg.b1)
    sidecar = {
        "spec": resolved,
        "run_config": cfg.to_dict(),
        "topology": {"kind": spec.topology, "K": adj.num_workers, "D": W.diameter,
                     "lambda2": W.lambda2, "edges": sorted(map(list, adj.edges))},
        "problem": problem.summary(),
        "total_comm_rounds": result.comm_rounds,
        "version": version_string(),
    }
    out.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        spec = parse_spec(argv)
    except UsageError as exc:
        _report(sys.stderr, "cli", exc)
        return EXIT_USAGE
    except OSError as exc:
        _report(sys.stderr, "io", exc)
        return EXIT_IO
    return execute(spec)


if __name__ == "__main__":
    sys.exit(main())
