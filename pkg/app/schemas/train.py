from enum import Enum

from pydantic import BaseModel, Field

from app.core.config import IMAGE_CACHE_SIZE, WORKERS
from app.schemas.vit import ViTConfig


class OptimizerVariant(str, Enum):
    ADAM = "Adam"
    RECTIFIED_ADAM = "RectifiedAdam"


class TrainConfig(BaseModel):
    vit: ViTConfig = ViTConfig()
    optimizer: OptimizerVariant = OptimizerVariant.RECTIFIED_ADAM
    lr: float = Field(1e-4, ge=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    batch_size: int = Field(16, ge=1)
    max_epochs: int = Field(25, ge=1)
    plateau_factor: float = Field(0.2, gt=0, lt=1)
    plateau_patience: int = Field(3, ge=0)
    min_lr: float = Field(1e-7, ge=0)
    early_stop_patience: int | None = Field(5, ge=1)
    seed: int = Field(0, ge=0)
    checkpoint_path: str | None = None
    epoch_checkpoint_dir: str | None = None
    init_checkpoint: str | None = None
    frozen_layers: int = Field(0, ge=0)
    reset_head: bool = False
    online_augment: bool = False
    apply_clahe: bool = True
    workers: int = Field(WORKERS, ge=1)
    # preprocessed images kept in memory across epochs; 0 turns the cache off
    cache_size: int = Field(IMAGE_CACHE_SIZE, ge=0)


class SchedulerEvent(BaseModel):
    epoch: int
    event: str
    old_value: float | None = None
    new_value: float | None = None


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    train_accuracy: float
    val_accuracy: float
    lr: float
    events: list[SchedulerEvent] = []
