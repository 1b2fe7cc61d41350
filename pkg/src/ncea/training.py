"""Epoch/batch loop with Adam, validation-based model selection and restarts."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .channel import STREAM_INIT, STREAM_TRAIN, STREAM_VALID, stream
from .nn import DivergenceError, adam_init, adam_step

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Optimisation budget and model-selection settings."""

    epochs: int = 1000
    batch_size: int = 128
    train_size: int = 20_000
    lr: float = 1e-3
    val_fraction: float = 0.1
    restarts: int = 3
    max_train_ant: int = 16

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.train_size < 2 or self.restarts < 1:
            raise ValueError(f"invalid training budget: {self}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")


@dataclass
class FitResult:
    system: Any
    val_loss: float
    val_bler: np.ndarray
    loss_trace: list[float] = field(default_factory=list)
    val_trace: list[float] = field(default_factory=list)
    restart: int = 0


def split_messages(cfg: TrainConfig, n_msg: int, n_users: int, seed: int):
    """Random training messages, (size,) or (size, J), split into train/validation."""
    rng = stream(seed, STREAM_VALID, 0)
    shape = (cfg.train_size,) if n_users == 1 else (cfg.train_size, n_users)
    msgs = rng.integers(0, n_msg, shape)
    n_val = max(1, int(round(cfg.val_fraction * cfg.train_size)))
    return msgs[n_val:], msgs[:n_val]


def fit(
    init: Callable[[np.random.Generator], Any],
    step: Callable[[Any, np.ndarray, np.random.Generator], tuple[float, list[np.ndarray]]],
    validate: Callable[[Any], tuple[float, np.ndarray]],
    params: Callable[[Any], list[np.ndarray]],
    train_msgs: np.ndarray,
    cfg: TrainConfig,
    seed: int,
) -> FitResult:
    """Train ``cfg.restarts`` independent initialisations and keep the best.

    Each restart keeps the parameters with the lowest validation loss seen
    after any epoch (the untrained initialisation included); across restarts
    the lowest validation loss wins.
    """
    best: FitResult | None = None
    for r in range(cfg.restarts):
        system = init(stream(seed, STREAM_INIT, r))
        rng = stream(seed, STREAM_TRAIN, r)
        state = adam_init(params(system), cfg.lr)
        v_loss, v_bler = validate(system)
        run = FitResult(copy.deepcopy(system), v_loss, v_bler, restart=r)
        for epoch in range(cfg.epochs):
            order = rng.permutation(len(train_msgs))
            total = 0.0
            for start in range(0, len(order), cfg.batch_size):
                batch = train_msgs[order[start : start + cfg.batch_size]]
                loss, grads = step(system, batch, rng)
                if not np.isfinite(loss):
                    raise DivergenceError(f"non-finite loss at epoch {epoch}; restart with a new seed")
                adam_step(params(system), grads, state)
                total += loss * len(batch)
            run.loss_trace.append(total / len(order))
            v_loss, v_bler = validate(system)
            run.val_trace.append(v_loss)
            if v_loss < run.val_loss:
                run.system, run.val_loss, run.val_bler = copy.deepcopy(system), v_loss, v_bler
            if epoch % 100 == 99:
                log.debug("restart %d epoch %d: train %.5f val %.5f", r, epoch + 1, run.loss_trace[-1], v_loss)
        log.info("restart %d: best val loss %.5f, val BLER %s", r, run.val_loss, np.round(run.val_bler, 5))
        if best is None or run.val_loss < best.val_loss:
            best = run
    return best
