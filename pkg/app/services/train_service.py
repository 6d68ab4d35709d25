"""Binary cross-entropy training loop, validation-driven scheduling and evaluation."""
from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from app.core.config import PROBABILITY_CLAMP
from app.core.errors import CheckpointError, EmptySplitError, NonFiniteLossError
from app.schemas.image import PreprocessSpec
from app.schemas.manifest import DatasetManifest, ManifestEntry
from app.schemas.metrics import MetricsReport
from app.schemas.train import EpochRecord, SchedulerEvent, TrainConfig
from app.services.checkpoint_service import load_checkpoint, save_checkpoint
from app.services.dataset_service import ImageCache, iter_batches, load_batch, preprocess_spec_for
from app.services.metrics_service import metrics_from_probabilities, threshold
from app.services.optim_service import create_optim_state, optimizer_step
from app.services.schedule_service import EarlyStopState, PlateauState, early_stop_step, plateau_step
from app.services.vit_service import ViTParams, forward_classify, frozen_names, init_params, reset_head
from app.tensor import ops
from app.tensor.tensor import Tensor, backward, no_grad
from app.utils.storage import staged_directory, write_json_lines

logger = logging.getLogger(__name__)

EpochCallback = Callable[[EpochRecord], None]


def bce_loss(prob: Tensor, labels) -> Tensor:
    """Mean of -[y ln p + (1 - y) ln(1 - p)] with p clamped to [1e-7, 1 - 1e-7]."""
    y = np.asarray(labels.data if isinstance(labels, Tensor) else labels, dtype=np.float64)
    if y.shape != prob.shape:
        y = np.broadcast_to(y, prob.shape)
    p = ops.clip(prob, PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP)
    positive = ops.mul(Tensor(y), ops.log(p))
    negative = ops.mul(Tensor(1.0 - y), ops.log(ops.affine(p, -1.0, 1.0)))
    return ops.affine(ops.mean(ops.add(positive, negative)), -1.0)


@dataclass
class TrainResult:
    params: ViTParams
    best_params: ViTParams
    best_epoch: int
    best_val_accuracy: float
    log: list[EpochRecord] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.log)


def epoch_checkpoint_path(directory: str | Path, epoch: int) -> Path:
    return Path(directory) / f"epoch_{epoch:03d}.ckpt"


def _initial_params(config: TrainConfig) -> ViTParams:
    if config.init_checkpoint is None:
        params = init_params(config.vit, config.seed)
    else:
        loaded, loaded_config = load_checkpoint(config.init_checkpoint)
        if loaded_config.model_dump(exclude={"dropout"}) != config.vit.model_dump(exclude={"dropout"}):
            raise CheckpointError(f"{config.init_checkpoint}: model config differs from the training config")
        params = ViTParams(config.vit, loaded)
        logger.info("Starting from %s", config.init_checkpoint)
    if config.reset_head:
        reset_head(params, config.seed)
    for name in frozen_names(config.vit, config.frozen_layers):
        params[name].requires_grad = False
    return params


def predict_probabilities(
    params: ViTParams,
    entries: Sequence[ManifestEntry],
    spec: PreprocessSpec,
    *,
    batch_size: int = 16,
    workers: int = 1,
    cache: ImageCache | None = None,
) -> np.ndarray:
    probabilities = []
    with no_grad():
        for _, batch in iter_batches(entries, batch_size):
            images, _ = load_batch(batch, spec, channels=params.config.in_channels, workers=workers, cache=cache)
            probabilities.append(forward_classify(images, params).numpy())
    return np.concatenate(probabilities) if probabilities else np.zeros(0)


def accuracy(params: ViTParams, entries: Sequence[ManifestEntry], spec: PreprocessSpec, **kwargs) -> float:
    labels = np.array([e.target for e in entries], dtype=bool)
    predictions = threshold(predict_probabilities(params, entries, spec, **kwargs))
    return float(np.mean(predictions == labels))


def evaluate(
    params: ViTParams,
    config: TrainConfig,
    entries: Sequence[ManifestEntry],
    *,
    preprocess: PreprocessSpec | None = None,
    cache: ImageCache | None = None,
) -> MetricsReport:
    """Threshold at 0.5 with COVID as the positive class and score the split."""
    if not entries:
        raise EmptySplitError("cannot evaluate an empty split")
    spec = preprocess_spec_for(params.config, preprocess, apply_clahe=config.apply_clahe)
    probabilities = predict_probabilities(
        params, entries, spec, batch_size=config.batch_size, workers=config.workers, cache=cache
    )
    return metrics_from_probabilities([e.target for e in entries], probabilities)


def _gradients(params: ViTParams) -> dict[str, np.ndarray]:
    return {
        name: tensor.grad if tensor.grad is not None else np.zeros(tensor.shape)
        for name, tensor in params.items()
        if tensor.requires_grad
    }


def train(
    config: TrainConfig,
    manifest: DatasetManifest,
    *,
    preprocess: PreprocessSpec | None = None,
    log_path: str | Path | None = None,
    train_entries: Sequence[ManifestEntry] | None = None,
    on_epoch: EpochCallback | None = None,
) -> TrainResult:
    """Train on the manifest's train split, monitoring validation accuracy.

    ``train_entries`` overrides the train split (the search uses it for
    subsampled budgets). Outputs are written only after training completes.
    """
    train_entries = list(manifest.split("train") if train_entries is None else train_entries)
    val_entries = manifest.split("validation")
    if not train_entries:
        raise EmptySplitError("the train split is empty", stage="train")
    if not val_entries:
        raise EmptySplitError("the validation split is empty", stage="train")

    params = _initial_params(config)
    trainable = {name: t for name, t in params.items() if t.requires_grad}
    state = create_optim_state(
        trainable, config.optimizer, config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps
    )
    spec = preprocess_spec_for(config.vit, preprocess, apply_clahe=config.apply_clahe)
    cache = ImageCache(config.cache_size) if config.cache_size else None
    plateau = PlateauState(factor=config.plateau_factor, patience=config.plateau_patience, min_lr=config.min_lr)
    early_stop = None if config.early_stop_patience is None else EarlyStopState(patience=config.early_stop_patience)
    shuffle_rng = np.random.default_rng(config.seed)
    dropout_rng = np.random.default_rng([config.seed, 1]) if config.vit.dropout > 0 else None

    log: list[EpochRecord] = []
    best_params = params.copy()
    best_epoch, best_val = 0, -math.inf
    stopped = False
    logger.info(
        "Training %d params on %d images (%d validation), %s lr %.3g",
        params.total_size(), len(train_entries), len(val_entries), config.optimizer.value, config.lr,
    )

    with staged_directory(config.epoch_checkpoint_dir) as staging:
        for epoch in range(1, config.max_epochs + 1):
            order = shuffle_rng.permutation(len(train_entries))
            epoch_entries = [train_entries[i] for i in order]
            loss_sum, correct = 0.0, 0
            for start, batch in iter_batches(epoch_entries, config.batch_size):
                seeds = [(config.seed, epoch, start + i) for i in range(len(batch))] if config.online_augment else None
                images, labels = load_batch(
                    batch, spec, channels=config.vit.in_channels, workers=config.workers, cache=cache, augment_seeds=seeds
                )
                params.zero_grad()
                probs = forward_classify(images, params, rng=dropout_rng)
                loss = bce_loss(probs, labels)
                value = loss.item()
                if not math.isfinite(value):
                    raise NonFiniteLossError(f"loss became {value} at epoch {epoch}, batch {start // config.batch_size + 1}")
                backward(loss)
                optimizer_step(trainable, _gradients(params), state)
                loss_sum += value * len(batch)
                correct += int(np.sum(threshold(probs.data) == labels.astype(bool)))

            val_accuracy = accuracy(params, val_entries, spec, batch_size=config.batch_size, workers=config.workers, cache=cache)
            epoch_lr = state.lr
            events: list[SchedulerEvent] = []
            if val_accuracy > best_val:
                events.append(SchedulerEvent(
                    epoch=epoch, event="best_checkpoint", old_value=None if best_epoch == 0 else best_val, new_value=val_accuracy
                ))
                best_params, best_epoch, best_val = params.copy(), epoch, val_accuracy
            if staging is not None:
                save_checkpoint(params, config.vit, epoch_checkpoint_path(staging, epoch))

            new_lr = plateau_step(plateau, val_accuracy, state.lr)
            if new_lr != state.lr:
                events.append(SchedulerEvent(epoch=epoch, event="lr_reduced", old_value=state.lr, new_value=new_lr))
                state.lr = new_lr
            if early_stop is not None and early_stop_step(early_stop, val_accuracy):
                events.append(SchedulerEvent(epoch=epoch, event="early_stop"))
                stopped = True

            record = EpochRecord(
                epoch=epoch,
                train_loss=loss_sum / len(epoch_entries),
                train_accuracy=correct / len(epoch_entries),
                val_accuracy=val_accuracy,
                lr=epoch_lr,
                events=events,
            )
            log.append(record)
            logger.info(
                "epoch %d: loss %.4f train_acc %.4f val_acc %.4f lr %.3g",
                epoch, record.train_loss, record.train_accuracy, val_accuracy, epoch_lr,
            )
            if on_epoch is not None:
                on_epoch(record)
            if stopped:
                break

    if config.checkpoint_path:
        save_checkpoint(best_params, config.vit, config.checkpoint_path)
    if log_path is not None:
        write_json_lines(log_path, [record.model_dump_json() for record in log])
    return TrainResult(
        params=params,
        best_params=best_params,
        best_epoch=best_epoch,
        best_val_accuracy=best_val,
        log=log,
        stopped_early=stopped,
    )


def read_training_log(path: str | Path) -> list[EpochRecord]:
    return [EpochRecord.model_validate_json(line) for line in Path(path).read_text().splitlines() if line.strip()]
