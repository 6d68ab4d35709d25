"""Random search over optimizer variant and learning rate."""
from __future__ import annotations

import logging
import math
import time
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from app.core.errors import ConfigError, ToolkitError
from app.schemas.hpo import TrialRecord, TrialSpec, TrialStatus
from app.schemas.manifest import DatasetManifest
from app.schemas.train import OptimizerVariant, TrainConfig
from app.services.manifest_service import subsample_split
from app.services.train_service import train

logger = logging.getLogger(__name__)

DEFAULT_TRIALS = 50
DEFAULT_BUDGET_EPOCHS = 3
DEFAULT_TRAIN_FRACTION = 0.25
LOG10_LR_RANGE = (-6.0, -3.0)
VARIANTS = (OptimizerVariant.ADAM, OptimizerVariant.RECTIFIED_ADAM)


def sample_trials(
    n: int = DEFAULT_TRIALS,
    seed: int = 0,
    *,
    budget_epochs: int = DEFAULT_BUDGET_EPOCHS,
) -> list[TrialSpec]:
    """``n`` specs with dense ids, lr = 10**U(-6, -3) and a uniform optimizer choice."""
    if n < 1:
        raise ConfigError(f"need at least one trial, got {n}")
    rng = np.random.default_rng(seed)
    low, high = LOG10_LR_RANGE
    trials = []
    for trial_id in range(n):
        variant = VARIANTS[int(rng.integers(len(VARIANTS)))]
        lr = float(np.clip(10.0 ** rng.uniform(low, high), 10.0 ** low, 10.0 ** high))
        trial_seed = int(rng.integers(0, 2 ** 31 - 1))
        trials.append(TrialSpec(trial_id=trial_id, optimizer=variant, lr=lr, seed=trial_seed, budget_epochs=budget_epochs))
    return trials


def run_trial(
    spec: TrialSpec,
    base_config: TrainConfig,
    manifest: DatasetManifest,
    *,
    train_fraction: float = DEFAULT_TRAIN_FRACTION,
) -> TrialRecord:
    """Train one trial; failures come back as a record instead of an exception."""
    config = base_config.model_copy(update={
        "optimizer": spec.optimizer,
        "lr": spec.lr,
        "seed": spec.seed,
        "max_epochs": spec.budget_epochs,
        "checkpoint_path": None,
        "epoch_checkpoint_dir": None,
        "workers": 1,
    })
    started = time.perf_counter()
    try:
        entries = subsample_split(manifest, "train", train_fraction, spec.seed)
        result = train(config, manifest, train_entries=entries)
    except (ToolkitError, ArithmeticError, ValueError) as exc:
        logger.warning("Trial %d failed: %s", spec.trial_id, exc)
        return TrialRecord(
            spec=spec,
            wall_time=time.perf_counter() - started,
            status=TrialStatus.FAILED,
            error=f"{type(exc).__name__}: {exc}",
        )
    logger.info("Trial %d (%s, lr %.3g): best val accuracy %.4f", spec.trial_id, spec.optimizer.value, spec.lr, result.best_val_accuracy)
    return TrialRecord(
        spec=spec,
        best_val_accuracy=result.best_val_accuracy,
        epochs_run=result.epochs_run,
        wall_time=time.perf_counter() - started,
    )


def rank_trials(records: Sequence[TrialRecord]) -> list[TrialRecord]:
    """Successful trials by best validation accuracy (descending), then failures; ties by trial id."""

    def key(record: TrialRecord):
        failed = record.status is TrialStatus.FAILED or record.best_val_accuracy is None
        accuracy = -math.inf if failed else record.best_val_accuracy
        return failed, -accuracy, record.spec.trial_id

    ordered = sorted(records, key=key)
    return [record.model_copy(update={"rank": rank}) for rank, record in enumerate(ordered, start=1)]


def run_search(
    trials: Sequence[TrialSpec],
    base_config: TrainConfig,
    manifest: DatasetManifest,
    *,
    train_fraction: float = DEFAULT_TRAIN_FRACTION,
    workers: int = 1,
) -> list[TrialRecord]:
    ids = [t.trial_id for t in trials]
    if len(set(ids)) != len(ids):
        raise ConfigError("trial ids must be unique")
    if not 0 < train_fraction <= 1:
        raise ConfigError(f"train fraction must lie in (0, 1], got {train_fraction}")

    def run(spec: TrialSpec) -> TrialRecord:
        return run_trial(spec, base_config, manifest, train_fraction=train_fraction)

    logger.info("Running %d trials on %d worker(s)", len(trials), workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run, trials))
    else:
        records = [run(spec) for spec in trials]
    return rank_trials(records)


def format_search_table(records: Sequence[TrialRecord]) -> str:
    """``key: value`` summary followed by one line per trial in rank order."""
    lines = [f"trials: {len(records)}", f"failed: {sum(r.status is TrialStatus.FAILED for r in records)}"]
    best = next((r for r in records if r.status is TrialStatus.OK), None)
    if best is not None:
        lines.extend([
            f"best_trial: {best.spec.trial_id}",
            f"best_optimizer: {best.spec.optimizer.value}",
            f"best_lr: {best.spec.lr:.6e}",
            f"best_val_accuracy: {best.best_val_accuracy:.4f}",
        ])
    for record in sorted(records, key=lambda r: r.rank):
        accuracy = "-" if record.best_val_accuracy is None else f"{record.best_val_accuracy:.4f}"
        lines.append(
            f"rank {record.rank}: trial {record.spec.trial_id} optimizer {record.spec.optimizer.value} "
            f"lr {record.spec.lr:.6e} best_val_accuracy {accuracy} epochs {record.epochs_run} "
            f"status {record.status.value}"
        )
    return "\n".join(lines) + "\n"
