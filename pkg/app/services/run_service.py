from collections.abc import Sequence

from sqlalchemy.orm import Session

from app.models.run import EpochLog, RunKind, SchedulerEventLog, TrainingRun
from app.models.trial import TrialResult
from app.schemas.hpo import TrialRecord
from app.schemas.train import TrainConfig
from app.services.train_service import TrainResult


def record_training_run(db: Session, run_name: str, config: TrainConfig, result: TrainResult) -> TrainingRun:
    """Store a finished training run with its epoch log and scheduler events in one commit."""
    run = TrainingRun(
        run_name=run_name,
        kind=RunKind.TRAIN,
        seed=config.seed,
        config_json=config.model_dump_json(),
        best_val_accuracy=result.best_val_accuracy,
        best_epoch=result.best_epoch,
        epochs_run=result.epochs_run,
        stopped_early=result.stopped_early,
        checkpoint_path=config.checkpoint_path,
    )
    for record in result.log:
        run.epochs.append(EpochLog(
            epoch=record.epoch,
            train_loss=record.train_loss,
            train_accuracy=record.train_accuracy,
            val_accuracy=record.val_accuracy,
            lr=record.lr,
        ))
        for event in record.events:
            run.events.append(SchedulerEventLog(
                epoch=event.epoch, event=event.event, old_value=event.old_value, new_value=event.new_value
            ))
    db.add(run)
    db.commit()
    db.refresh(run)
    return run


def record_search(db: Session, run_name: str, base_config: TrainConfig, records: Sequence[TrialRecord]) -> TrainingRun:
    """Store a ranked sweep; the run's best accuracy is the top successful trial's."""
    accuracies = [r.best_val_accuracy for r in records if r.best_val_accuracy is not None]
    run = TrainingRun(
        run_name=run_name,
        kind=RunKind.HPO,
        seed=base_config.seed,
        config_json=base_config.model_dump_json(),
        best_val_accuracy=max(accuracies) if accuracies else None,
        epochs_run=sum(r.epochs_run for r in records),
    )
    for record in records:
        run.trials.append(TrialResult(
            trial_id=record.spec.trial_id,
            rank=record.rank,
            optimizer=record.spec.optimizer.value,
            lr=record.spec.lr,
            seed=record.spec.seed,
            budget_epochs=record.spec.budget_epochs,
            best_val_accuracy=record.best_val_accuracy,
            epochs_run=record.epochs_run,
            wall_time=record.wall_time,
            status=record.status.value,
            error=record.error,
        ))
    db.add(run)
    db.commit()
    db.refresh(run)
    return run


def get_run_by_id(db: Session, run_id: int) -> TrainingRun | None:
    return db.query(TrainingRun).filter(TrainingRun.id == run_id).first()


def get_all_runs(db: Session, skip: int = 0, limit: int = 100) -> list[TrainingRun]:
    return db.query(TrainingRun).order_by(TrainingRun.id).offset(skip).limit(limit).all()


def get_run_epochs(db: Session, run_id: int) -> list[EpochLog]:
    return db.query(EpochLog).filter(EpochLog.run_id == run_id).order_by(EpochLog.epoch).all()


def get_run_events(db: Session, run_id: int) -> list[SchedulerEventLog]:
    return db.query(SchedulerEventLog).filter(SchedulerEventLog.run_id == run_id).order_by(SchedulerEventLog.id).all()


def get_run_trials(db: Session, run_id: int) -> list[TrialResult]:
    return db.query(TrialResult).filter(TrialResult.run_id == run_id).order_by(TrialResult.rank).all()


def delete_run(db: Session, run_id: int) -> bool:
    """Delete a run and its child rows."""
    run = get_run_by_id(db, run_id)
    if run is None:
        return False
    db.delete(run)
    db.commit()
    return True


def clear_runs(db: Session) -> int:
    """Delete every run; returns how many were removed."""
    runs = db.query(TrainingRun).all()
    for run in runs:
        db.delete(run)
    db.commit()
    return len(runs)
