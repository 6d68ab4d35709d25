from pydantic import BaseModel, Field, model_validator


class ConfusionCounts(BaseModel):
    tp: int = Field(0, ge=0)
    fp: int = Field(0, ge=0)
    fn: int = Field(0, ge=0)
    tn: int = Field(0, ge=0)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def swapped(self) -> "ConfusionCounts":
        """The same counts seen with the other class as positive."""
        return ConfusionCounts(tp=self.tn, fp=self.fn, fn=self.fp, tn=self.tp)


class ClassMetrics(BaseModel):
    precision: float = Field(ge=0, le=1)
    recall: float = Field(ge=0, le=1)
    f1: float = Field(ge=0, le=1)
    support: int = Field(ge=0)
    precision_undefined: bool = False
    recall_undefined: bool = False
    f1_undefined: bool = False


class MetricsReport(BaseModel):
    counts: ConfusionCounts
    accuracy: float = Field(ge=0, le=1)
    precision: float = Field(ge=0, le=1)
    recall: float = Field(ge=0, le=1)
    f1: float = Field(ge=0, le=1)
    precision_undefined: bool = False
    recall_undefined: bool = False
    f1_undefined: bool = False
    per_class: dict[str, ClassMetrics]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float

    @model_validator(mode="after")
    def check_total(self) -> "MetricsReport":
        if self.counts.total == 0:
            raise ValueError("metrics need at least one evaluated sample")
        return self
