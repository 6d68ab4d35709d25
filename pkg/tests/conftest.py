from pathlib import Path

import numpy as np
import pytest
from sqlalchemy.orm import sessionmaker

from app.db.database import Base, make_engine
from app.schemas.manifest import SplitCounts
from app.schemas.train import TrainConfig
from app.schemas.vit import ViTConfig
from app.services.image_service import GrayImage, encode_pgm
from app.services.manifest_service import assign_splits

TINY_VIT = dict(image_size=32, patch_size=8, hidden_dim=32, mlp_dim=64, num_heads=2, num_layers=2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config() -> ViTConfig:
    return ViTConfig(**TINY_VIT)


def synthetic_radiograph(label: int, rng: np.random.Generator, size: int = 32) -> GrayImage:
    """COVID images are bright in the top half, NON-COVID ones in the bottom half."""
    pixels = rng.integers(0, 40, size=(size, size))
    bright = slice(0, size // 2) if label == 1 else slice(size // 2, size)
    pixels[bright] += 180
    return GrayImage(pixels.astype(np.uint8))


def write_corpus(root: Path, counts: dict[str, tuple[int, int]], seed: int = 0) -> dict[str, list[str]]:
    """Write PGM files under ``root/<class dir>``; ``counts`` maps dir -> (label, count)."""
    rng = np.random.default_rng(seed)
    paths: dict[str, list[str]] = {}
    for name, (label, count) in counts.items():
        directory = root / name
        directory.mkdir(parents=True, exist_ok=True)
        paths[name] = []
        for i in range(count):
            path = directory / f"{name.lower()}_{i:04d}.pgm"
            path.write_bytes(encode_pgm(synthetic_radiograph(label, rng)))
            paths[name].append(str(path))
    return paths


@pytest.fixture
def corpus(tmp_path):
    return write_corpus(tmp_path / "data", {"COVID": (1, 12), "Normal": (0, 12)})


@pytest.fixture
def small_manifest(corpus):
    counts = {
        "train": SplitCounts(covid=8, non_covid=8),
        "validation": SplitCounts(covid=2, non_covid=2),
        "test": SplitCounts(covid=2, non_covid=2),
    }
    return assign_splits(corpus["COVID"], {"Normal": corpus["Normal"]}, counts=counts, seed=3)


@pytest.fixture
def fast_train_config(tiny_config) -> TrainConfig:
    return TrainConfig(
        vit=tiny_config,
        optimizer="Adam",
        lr=1e-3,
        batch_size=8,
        max_epochs=2,
        apply_clahe=False,
        early_stop_patience=None,
    )


@pytest.fixture
def db_session():
    engine = make_engine("sqlite://")
    import app.models  # noqa: F401

    Base.metadata.create_all(bind=engine)
    session = sessionmaker(autocommit=False, autoflush=False, bind=engine)()
    try:
        yield session
    finally:
        session.close()
