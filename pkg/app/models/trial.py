from sqlalchemy import Integer, String, Column, ForeignKey, Float
from sqlalchemy.orm import relationship
from app.db.database import Base


class TrialResult(Base):
    __tablename__ = "trial_results"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("training_runs.id", ondelete="CASCADE"), nullable=False, index=True)
    trial_id = Column(Integer, nullable=False)
    rank = Column(Integer, nullable=False)
    optimizer = Column(String, nullable=False)
    lr = Column(Float, nullable=False)
    seed = Column(Integer, nullable=False)
    budget_epochs = Column(Integer, nullable=False)
    best_val_accuracy = Column(Float, nullable=True)
    epochs_run = Column(Integer, default=0, nullable=False)
    wall_time = Column(Float, default=0.0, nullable=False)
    status = Column(String, nullable=False)  # "ok" or "failed"
    error = Column(String, nullable=True)

    run = relationship("TrainingRun", back_populates="trials")
