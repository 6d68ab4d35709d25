from sqlalchemy import Integer, String, Column, ForeignKey, DateTime, Float, Boolean, Text, Enum as SQLEnum
from sqlalchemy.orm import relationship
from datetime import datetime
import enum
from app.db.database import Base


class RunKind(str, enum.Enum):
    TRAIN = "train"
    HPO = "hpo"


class TrainingRun(Base):
    __tablename__ = "training_runs"

    id = Column(Integer, primary_key=True, index=True)
    run_name = Column(String, index=True, nullable=False)
    kind = Column(SQLEnum(RunKind), nullable=False)
    seed = Column(Integer, nullable=False)
    config_json = Column(Text, nullable=False)
    best_val_accuracy = Column(Float, nullable=True)
    best_epoch = Column(Integer, nullable=True)
    epochs_run = Column(Integer, default=0, nullable=False)
    stopped_early = Column(Boolean, default=False, nullable=False)
    checkpoint_path = Column(String, nullable=True)
    created_at = Column(DateTime, default=datetime.utcnow, nullable=False)

    epochs = relationship("EpochLog", back_populates="run", cascade="all, delete-orphan", order_by="EpochLog.epoch")
    events = relationship("SchedulerEventLog", back_populates="run", cascade="all, delete-orphan", order_by="SchedulerEventLog.id")
    trials = relationship("TrialResult", back_populates="run", cascade="all, delete-orphan", order_by="TrialResult.rank")


class EpochLog(Base):
    __tablename__ = "epoch_logs"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("training_runs.id", ondelete="CASCADE"), nullable=False, index=True)
    epoch = Column(Integer, nullable=False)
    train_loss = Column(Float, nullable=False)
    train_accuracy = Column(Float, nullable=False)
    val_accuracy = Column(Float, nullable=False)
    lr = Column(Float, nullable=False)

    run = relationship("TrainingRun", back_populates="epochs")


class SchedulerEventLog(Base):
    __tablename__ = "scheduler_events"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("training_runs.id", ondelete="CASCADE"), nullable=False, index=True)
    epoch = Column(Integer, nullable=False)
    event = Column(String, nullable=False)
    old_value = Column(Float, nullable=True)
    new_value = Column(Float, nullable=True)

    run = relationship("TrainingRun", back_populates="events")
