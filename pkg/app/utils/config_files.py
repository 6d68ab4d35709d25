"""Flat ``key = value`` config files."""
from pathlib import Path

from pydantic import ValidationError

from app.core.errors import ConfigError
from app.schemas.image import AugmentSpec, ClaheSpec, PreprocessSpec
from app.schemas.train import TrainConfig
from app.schemas.vit import ViTConfig

AUGMENT_KEYS = {
    "flip_h": "flip_horizontal_prob",
    "flip_v": "flip_vertical_prob",
    "rotation_limit": "rotation_limit_degrees",
    "brightness_limit": "brightness_limit",
    "contrast_limit": "contrast_limit",
    "border_value": "border_value",
    "seed": "rng_seed",
}
CLAHE_KEYS = {"clahe_clip": "clip_limit", "clahe_tiles": "tile_grid"}
PIPELINE_KEYS = {"clahe_first", "apply_clahe", "target_size"}


def parse_key_values(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{number}: expected 'key = value', got {raw.strip()!r}")
        if key in values:
            raise ConfigError(f"{source}:{number}: duplicate key {key!r}")
        values[key] = value
    return values


def _grid(value: str, key: str) -> tuple[int, int]:
    rows, sep, cols = value.lower().partition("x")
    try:
        return (int(rows), int(cols)) if sep else (int(rows), int(rows))
    except ValueError:
        raise ConfigError(f"{key} must look like 8x8, got {value!r}")


def _validate(model, data: dict, source: str):
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{source}: {exc}")


def preprocess_spec_from_values(values: dict[str, str], source: str = "<config>") -> PreprocessSpec:
    unknown = set(values) - set(AUGMENT_KEYS) - set(CLAHE_KEYS) - PIPELINE_KEYS
    if unknown:
        raise ConfigError(f"{source}: unknown keys {sorted(unknown)}")
    augment = {AUGMENT_KEYS[k]: v for k, v in values.items() if k in AUGMENT_KEYS}
    clahe = {CLAHE_KEYS[k]: v for k, v in values.items() if k in CLAHE_KEYS}
    if "tile_grid" in clahe:
        clahe["tile_grid"] = _grid(clahe["tile_grid"], "clahe_tiles")
    pipeline: dict = {k: v for k, v in values.items() if k in PIPELINE_KEYS}
    if "target_size" in pipeline:
        pipeline["target_size"] = _grid(pipeline["target_size"], "target_size")
    pipeline["augment"] = _validate(AugmentSpec, augment, source)
    pipeline["clahe"] = _validate(ClaheSpec, clahe, source)
    return _validate(PreprocessSpec, pipeline, source)


def train_config_from_values(values: dict[str, str], source: str = "<config>") -> TrainConfig:
    vit_fields = set(ViTConfig.model_fields) - {"num_classes"}
    train_fields = set(TrainConfig.model_fields) - {"vit"}
    unknown = set(values) - vit_fields - train_fields
    if unknown:
        raise ConfigError(f"{source}: unknown keys {sorted(unknown)}")
    vit = {k: v for k, v in values.items() if k in vit_fields}
    data: dict = {k: (None if v.lower() in ("none", "") else v) for k, v in values.items() if k in train_fields}
    data["vit"] = _validate(ViTConfig, vit, source)
    return _validate(TrainConfig, data, source)


def load_preprocess_spec(path: str | Path) -> PreprocessSpec:
    path = Path(path)
    return preprocess_spec_from_values(parse_key_values(path.read_text(), str(path)), str(path))


def load_train_config(path: str | Path) -> TrainConfig:
    path = Path(path)
    return train_config_from_values(parse_key_values(path.read_text(), str(path)), str(path))


def format_train_config(config: TrainConfig) -> str:
    """Inverse of ``load_train_config``: one ``key = value`` line per field."""
    lines = [f"{k} = {v}" for k, v in config.vit.model_dump(exclude={"num_classes"}).items()]
    for key, value in config.model_dump(exclude={"vit"}, mode="json").items():
        lines.append(f"{key} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"
