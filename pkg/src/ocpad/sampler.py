"""Adaptive running mean of bonafide features and pseudo-negative sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, ShapeError


@dataclass
class RunningMeanState:
    """Center of the pseudo-negative Gaussian, blended across batches.

    ``alpha`` weighs the previous center; ``mu_old`` is meaningless until
    ``initialized`` is set by the first update.
    """

    alpha: float = 0.8
    mu_old: np.ndarray | None = None
    initialized: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class SamplerConfig:
    sigma: float
    dim: int
    batch: int

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")


def update_running_mean(state: RunningMeanState, batch_features) -> np.ndarray:
    """Fold one feature batch into ``state`` and return the new center.

    The first call adopts the batch mean as-is; afterwards the center is
    ``alpha * mu_old + (1 - alpha) * batch_mean``. The returned array is a
    plain value: callers treat it as a constant when differentiating.
    """
    f = np.asarray(batch_features, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] == 0:
        raise ContractError("running-mean update needs a non-empty 2-D batch")
    if not np.all(np.isfinite(f)):
        raise ContractError("running-mean update received non-finite features")
    mu_new = f.mean(axis=0)
    if not state.initialized:
        mu_star = mu_new
    else:
        if state.mu_old.shape != mu_new.shape:
            raise ShapeError(f"batch width {mu_new.shape[0]} != running mean width {state.mu_old.shape[0]}")
        mu_star = state.alpha * state.mu_old + (1.0 - state.alpha) * mu_new
    state.mu_old = mu_star.copy()
    state.initialized = True
    return mu_star


def sample_pseudo_negatives(mu_star, cfg: SamplerConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw ``cfg.batch`` rows from N(mu_star, sigma^2 I)."""
    mu = np.asarray(mu_star, dtype=np.float64).reshape(-1)
    if mu.shape[0] != cfg.dim:
        raise ShapeError(f"center has {mu.shape[0]} dims, sampler configured for {cfg.dim}")
    return mu + cfg.sigma * rng.standard_normal((cfg.batch, cfg.dim))
