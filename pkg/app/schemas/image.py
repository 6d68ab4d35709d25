import math

from pydantic import BaseModel, Field, field_validator

from app.core.config import CLAHE_CLIP_LIMIT, CLAHE_TILE_GRID, DEFAULT_IMAGE_SIZE


class ClaheSpec(BaseModel):
    clip_limit: float = Field(CLAHE_CLIP_LIMIT, gt=0)
    tile_grid: tuple[int, int] = CLAHE_TILE_GRID

    @field_validator("tile_grid")
    @classmethod
    def check_tile_grid(cls, value: tuple[int, int]) -> tuple[int, int]:
        if value[0] < 1 or value[1] < 1:
            raise ValueError(f"tile grid extents must be >= 1, got {value}")
        return value

    @property
    def unclipped(self) -> bool:
        return math.isinf(self.clip_limit)


class AugmentSpec(BaseModel):
    flip_horizontal_prob: float = Field(0.5, ge=0, le=1)
    flip_vertical_prob: float = Field(0.5, ge=0, le=1)
    rotation_limit_degrees: float = Field(270.0, ge=0, le=360)
    border_value: int = Field(0, ge=0, le=255)
    brightness_limit: float = Field(0.4, ge=0)
    contrast_limit: float = Field(0.4, ge=0)
    rng_seed: int = Field(0, ge=0)


class PreprocessSpec(BaseModel):
    """Everything the flat augment config file describes."""
    augment: AugmentSpec = AugmentSpec()
    clahe: ClaheSpec = ClaheSpec()
    apply_clahe: bool = True
    clahe_first: bool = True
    target_size: tuple[int, int] = (DEFAULT_IMAGE_SIZE, DEFAULT_IMAGE_SIZE)
