"""Plateau learning-rate reduction and early stopping on a maximised metric."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

logger = logging.getLogger(__name__)


@dataclass
class PlateauState:
    monitor: str = "val_accuracy"
    factor: float = 0.2
    patience: int = 3
    min_lr: float = 1e-7
    best: float | None = None
    epochs_since_improvement: int = 0


@dataclass
class EarlyStopState:
    monitor: str = "val_accuracy"
    patience: int = 5
    best: float | None = None
    epochs_since_improvement: int = 0
    stopped: bool = False


def _check_finite(metric: float) -> None:
    if not math.isfinite(metric):
        raise ValueError(f"monitored metric must be finite, got {metric}")


def plateau_step(state: PlateauState, metric: float, current_lr: float) -> float:
    """New learning rate after one epoch's metric.

    Only a strict improvement resets the counter; once the counter exceeds
    ``patience`` the rate is multiplied by ``factor`` (not below ``min_lr``,
    and a rate already under the floor is left alone) and counting restarts.
    """
    _check_finite(metric)
    if state.best is None or metric > state.best:
        state.best = metric
        state.epochs_since_improvement = 0
        return current_lr
    state.epochs_since_improvement += 1
    if state.epochs_since_improvement <= state.patience:
        return current_lr
    state.epochs_since_improvement = 0
    if current_lr <= state.min_lr:
        return current_lr
    new_lr = max(current_lr * state.factor, state.min_lr)
    logger.info("%s stalled for %d epochs: lr %.3g -> %.3g", state.monitor, state.patience + 1, current_lr, new_lr)
    return new_lr


def early_stop_step(state: EarlyStopState, metric: float) -> bool:
    """True once the metric has not strictly improved for ``patience`` epochs; stays True."""
    _check_finite(metric)
    if state.stopped:
        return True
    if state.best is None or metric > state.best:
        state.best = metric
        state.epochs_since_improvement = 0
        return False
    state.epochs_since_improvement += 1
    if state.epochs_since_improvement >= state.patience:
        state.stopped = True
        logger.info("%s did not improve for %d epochs: stopping", state.monitor, state.patience)
    return state.stopped
