from collections import Counter
from typing import Literal

from pydantic import BaseModel, Field, model_validator

from app.core.config import NEGATIVE_LABEL, POSITIVE_LABEL

Split = Literal["train", "validation", "test"]
Label = Literal["COVID", "NON-COVID"]


class ManifestEntry(BaseModel):
    path: str
    label: Label
    split: Split
    source: str = ""

    @property
    def target(self) -> int:
        return 1 if self.label == POSITIVE_LABEL else 0


class SplitCounts(BaseModel):
    """Requested images per class for one split."""
    covid: int = Field(0, ge=0)
    non_covid: int = Field(0, ge=0)

    @property
    def total(self) -> int:
        return self.covid + self.non_covid


class DatasetManifest(BaseModel):
    seed: int
    entries: list[ManifestEntry] = []

    @model_validator(mode="after")
    def check_unique_paths(self) -> "DatasetManifest":
        seen: set[str] = set()
        for entry in self.entries:
            if entry.path in seen:
                raise ValueError(f"path listed twice: {entry.path}")
            seen.add(entry.path)
        return self

    def split(self, name: Split) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def class_counts(self, name: Split) -> dict[str, int]:
        counts = Counter(e.label for e in self.entries if e.split == name)
        return {POSITIVE_LABEL: counts.get(POSITIVE_LABEL, 0), NEGATIVE_LABEL: counts.get(NEGATIVE_LABEL, 0)}

    def counts(self) -> dict[str, dict[str, int]]:
        return {name: self.class_counts(name) for name in ("train", "validation", "test")}
