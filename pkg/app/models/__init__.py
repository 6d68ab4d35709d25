from app.models.run import EpochLog, RunKind, SchedulerEventLog, TrainingRun
from app.models.trial import TrialResult

__all__ = ["EpochLog", "RunKind", "SchedulerEventLog", "TrainingRun", "TrialResult"]
