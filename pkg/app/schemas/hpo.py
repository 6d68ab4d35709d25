from enum import Enum

from pydantic import BaseModel, Field

from app.schemas.train import OptimizerVariant


class TrialStatus(str, Enum):
    OK = "ok"
    FAILED = "failed"


class TrialSpec(BaseModel):
    trial_id: int = Field(ge=0)
    optimizer: OptimizerVariant
    lr: float = Field(ge=0)
    seed: int
    budget_epochs: int = Field(3, ge=1)


class TrialRecord(BaseModel):
    spec: TrialSpec
    rank: int = 0
    best_val_accuracy: float | None = Field(None, ge=0, le=1)
    epochs_run: int = 0
    wall_time: float = 0.0
    status: TrialStatus = TrialStatus.OK
    error: str | None = None
