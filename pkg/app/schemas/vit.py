from typing import Literal

from pydantic import BaseModel, Field, model_validator

from app.core.config import DEFAULT_IMAGE_SIZE, DEFAULT_PATCH_SIZE


class ViTConfig(BaseModel):
    image_size: int = Field(DEFAULT_IMAGE_SIZE, ge=1)
    patch_size: int = Field(DEFAULT_PATCH_SIZE, ge=1)
    in_channels: int = Field(3, ge=1)
    hidden_dim: int = Field(768, ge=1)
    mlp_dim: int = Field(3072, ge=1)
    num_heads: int = Field(12, ge=1)
    num_layers: int = Field(12, ge=0)
    num_classes: Literal[1] = 1
    layernorm_eps: float = Field(1e-6, gt=0)
    dropout: float = Field(0.0, ge=0, lt=1)

    @model_validator(mode="after")
    def check_divisibility(self) -> "ViTConfig":
        if self.image_size % self.patch_size:
            raise ValueError(f"image_size {self.image_size} is not divisible by patch_size {self.patch_size}")
        if self.hidden_dim % self.num_heads:
            raise ValueError(f"hidden_dim {self.hidden_dim} is not divisible by num_heads {self.num_heads}")
        return self

    @property
    def grid_size(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid_size ** 2

    @property
    def seq_len(self) -> int:
        return self.num_patches + 1

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.num_heads

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.in_channels
