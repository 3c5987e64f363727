"""Decentralized stochastic variance-reduced gradient descent ascent for
finite-sum minimax problems under the PL condition."""

__version__ = "0.1.0"

from .graph import (Adjacency, MixingMatrix, build_topology, diameter, exact_average,
                    metropolis_weights, mix, spectral_gap)
from .optimizer import RunConfig, RunResult, derive_config, run

__all__ = [
    "Adjacency", "MixingMatrix", "RunConfig", "RunResult", "build_topology",
    "derive_config", "diameter", "exact_average", "metropolis_weights", "mix",
    "run", "spectral_gap",
]
