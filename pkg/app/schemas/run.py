from pydantic import BaseModel
from datetime import datetime

from app.models.run import RunKind


class EpochLogResponse(BaseModel):
    epoch: int
    train_loss: float
    train_accuracy: float
    val_accuracy: float
    lr: float

    class Config:
        from_attributes = True


class TrialResultResponse(BaseModel):
    trial_id: int
    rank: int
    optimizer: str
    lr: float
    seed: int
    budget_epochs: int
    best_val_accuracy: float | None
    epochs_run: int
    wall_time: float
    status: str
    error: str | None

    class Config:
        from_attributes = True


class RunResponse(BaseModel):
    id: int
    run_name: str
    kind: RunKind
    seed: int
    best_val_accuracy: float | None
    best_epoch: int | None
    epochs_run: int
    stopped_early: bool
    checkpoint_path: str | None
    created_at: datetime

    class Config:
        from_attributes = True
