"""Seeded random hyperparameter search with per-trial training.

Ten independent trials sample the grid below, train with early stopping
and keep the settings with the lowest validation reconstruction loss.
Random search (not TPE) keeps the study dependency-free and exactly
reproducible; at this trial count the difference is noise.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from labsentry import autoencoder
from labsentry.autoencoder import TrainConfig, TrainHistory
from labsentry.errors import DivergenceError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchSpace:
    hidden_dim: tuple[int, ...] = tuple(range(16, 129, 16))
    batch_size: tuple[int, ...] = (16, 32, 48, 64)
    learning_rate_bounds: tuple[float, float] = (1e-4, 1e-2)  # log-uniform
    epochs: tuple[int, ...] = tuple(range(5, 51, 5))


@dataclass(frozen=True)
class TrialParams:
    hidden_dim: int
    batch_size: int
    learning_rate: float
    epochs: int

    def as_dict(self) -> dict:
        return {
            "hidden_dim": self.hidden_dim,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
        }


@dataclass
class TrialResult:
    trial: int
    params: TrialParams
    val_loss: float  # minimum validation loss of the run; inf on divergence
    history: TrainHistory = field(default_factory=TrainHistory)

    @property
    def epochs_run(self) -> int:
        return self.history.epochs_run

    def as_dict(self) -> dict:
        return {
            "trial": self.trial,
            "params": self.params.as_dict(),
            "val_loss": self.val_loss,
            "epochs_run": self.epochs_run,
        }


def sample(space: SearchSpace, rng: np.random.Generator) -> TrialParams:
    """Draw one grid point; learning_rate is log-uniform over its interval."""
    lo, hi = space.learning_rate_bounds
    return TrialParams(
        hidden_dim=int(rng.choice(space.hidden_dim)),
        batch_size=int(rng.choice(space.batch_size)),
        learning_rate=float(np.exp(rng.uniform(np.log(lo), np.log(hi)))),
        epochs=int(rng.choice(space.epochs)),
    )


def tune(
    data,
    n_trials: int = 10,
    seed: int = 0,
    space: SearchSpace | None = None,
    patience: int = 5,
    val_fraction: float = 0.10,
) -> tuple[TrialParams, list[TrialResult]]:
    """Run the study and return (best params, all trial results).

    Candidate settings are drawn up front from one seeded RNG; trial i
    then trains with its own RNG seeded seed+i, so trials could run in
    parallel and still merge deterministically.  A diverging trial is
    recorded with val_loss = inf instead of aborting the study.  Ties on
    val_loss go to the earlier trial.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be positive")
    space = space or SearchSpace()
    sampler = np.random.default_rng(seed)
    candidates = [sample(space, sampler) for _ in range(n_trials)]

    results: list[TrialResult] = []
    for i, params in enumerate(candidates):
        cfg = TrainConfig(
            batch_size=params.batch_size,
            learning_rate=params.learning_rate,
            epochs=params.epochs,
            patience=patience,
            val_fraction=val_fraction,
            seed=seed + i,
        )
        model = autoencoder.init(params.hidden_dim, seed=seed + i)
        try:
            _, history = autoencoder.train(model, data, cfg)
            val_loss = history.best_val_loss
        except DivergenceError as exc:
            logger.warning("trial %d diverged: %s", i, exc)
            history = TrainHistory()
            val_loss = math.inf
        results.append(TrialResult(trial=i, params=params, val_loss=val_loss, history=history))

    best = min(results, key=lambda r: (r.val_loss, r.trial))
    return best.params, results


def report_json(results: list[TrialResult]) -> str:
    """Tuning report: JSON list of {trial, params, val_loss, epochs_run}."""
    return json.dumps([r.as_dict() for r in results], indent=2)
