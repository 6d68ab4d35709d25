"""Reading manifest entries into model-ready batches."""
from __future__ import annotations

import logging
import threading
from collections import OrderedDict
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from app.core.errors import DecodeError
from app.schemas.image import PreprocessSpec
from app.schemas.manifest import ManifestEntry
from app.schemas.vit import ViTConfig
from app.services.image_service import GrayImage, decode_image, preprocess_image, stack_channels

logger = logging.getLogger(__name__)


def load_gray(path: str | Path) -> GrayImage:
    """Decode one file; every failure names the offending path."""
    path = str(path)
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise DecodeError(exc.strerror or "unreadable file", path=path)
    try:
        return decode_image(data)
    except DecodeError as exc:
        if exc.path:
            raise
        raise DecodeError(str(exc), path=path)


def preprocess_spec_for(config: ViTConfig, spec: PreprocessSpec | None = None, *, apply_clahe: bool = True) -> PreprocessSpec:
    """The pipeline spec resized to the model's input size."""
    spec = spec or PreprocessSpec()
    return spec.model_copy(update={
        "target_size": (config.image_size, config.image_size),
        "apply_clahe": apply_clahe and spec.apply_clahe,
    })


class ImageCache:
    """Deterministically preprocessed images keyed by path; thread-safe.

    Holds at most ``max_items`` images, evicting the least recently used.
    """

    def __init__(self, max_items: int) -> None:
        if max_items < 1:
            raise ValueError(f"cache size must be at least 1, got {max_items}")
        self.max_items = max_items
        self._images: OrderedDict[str, GrayImage] = OrderedDict()
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._images)

    def __contains__(self, path: str) -> bool:
        return path in self._images

    def get(self, path: str) -> GrayImage | None:
        with self._lock:
            image = self._images.get(path)
            if image is not None:
                self._images.move_to_end(path)
            return image

    def put(self, path: str, image: GrayImage) -> None:
        with self._lock:
            self._images[path] = image
            self._images.move_to_end(path)
            while len(self._images) > self.max_items:
                self._images.popitem(last=False)


def prepare_image(
    entry: ManifestEntry,
    spec: PreprocessSpec,
    *,
    rng: np.random.Generator | None = None,
    cache: ImageCache | None = None,
) -> GrayImage:
    """Decoded and preprocessed image; augmented (and never cached) when ``rng`` is given."""
    if rng is None and cache is not None:
        cached = cache.get(entry.path)
        if cached is not None:
            return cached
    image = preprocess_image(load_gray(entry.path), spec, rng)
    if rng is None and cache is not None:
        cache.put(entry.path, image)
    return image


def load_batch(
    entries: Sequence[ManifestEntry],
    spec: PreprocessSpec,
    *,
    channels: int = 3,
    workers: int = 1,
    cache: ImageCache | None = None,
    augment_seeds: Sequence[int | Sequence[int]] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """(B, H, W, C) float images and (B,) 0/1 labels, in ``entries`` order.

    Each image is handled independently, so ``workers`` > 1 preprocesses in
    a thread pool without changing the result.
    """
    if augment_seeds is not None and len(augment_seeds) != len(entries):
        raise ValueError("one augmentation seed is needed per entry")

    def prepare(index: int) -> np.ndarray:
        rng = None if augment_seeds is None else np.random.default_rng(augment_seeds[index])
        return stack_channels(prepare_image(entries[index], spec, rng=rng, cache=cache), channels).data

    if workers > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            images = list(pool.map(prepare, range(len(entries))))
    else:
        images = [prepare(i) for i in range(len(entries))]
    labels = np.array([entry.target for entry in entries], dtype=np.float64)
    return np.stack(images, axis=0), labels


def iter_batches(entries: Sequence[ManifestEntry], batch_size: int):
    for start in range(0, len(entries), batch_size):
        yield start, entries[start:start + batch_size]
