import os

RUNS_DATABASE_URL = os.getenv("VITCXR_RUNS_DATABASE_URL", "sqlite:///./vitcxr_runs.db")
LOG_LEVEL = os.getenv("VITCXR_LOG_LEVEL", "INFO")
WORKERS = int(os.getenv("VITCXR_WORKERS", "1"))
IMAGE_CACHE_SIZE = int(os.getenv("VITCXR_IMAGE_CACHE_SIZE", "4096"))

# Labels and splits
POSITIVE_LABEL = "COVID"
NEGATIVE_LABEL = "NON-COVID"
SPLITS = ("train", "validation", "test")

# Image pipeline defaults
DEFAULT_IMAGE_SIZE = 224
DEFAULT_PATCH_SIZE = 32
CLAHE_CLIP_LIMIT = 4.0
CLAHE_TILE_GRID = (8, 8)
HISTOGRAM_BINS = 256

# File formats
CHECKPOINT_MAGIC = b"VITCKPT\x00"
CHECKPOINT_VERSION = 1
MANIFEST_FORMAT = "vitcxr-manifest v1"

# Loss
PROBABILITY_CLAMP = 1e-7
DECISION_THRESHOLD = 0.5
