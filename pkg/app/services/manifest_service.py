"""Train/validation/test assignment and the TSV manifest file."""
from __future__ import annotations

import csv
import io
import logging
import math
from collections.abc import Mapping, Sequence
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from app.core.config import MANIFEST_FORMAT, NEGATIVE_LABEL, POSITIVE_LABEL, SPLITS
from app.core.errors import ManifestError
from app.schemas.manifest import DatasetManifest, ManifestEntry, SplitCounts
from app.utils.storage import atomic_write_text

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".pgm", ".png"}
COLUMNS = ("path", "label", "split", "source")
COLUMN_ROW = "\t".join(COLUMNS)

# Per-class image counts of the reference COVID/NON-COVID corpus split.
REFERENCE_SPLIT_COUNTS = {
    "train": SplitCounts(covid=6880, non_covid=6980),
    "validation": SplitCounts(covid=350, non_covid=369),
    "test": SplitCounts(covid=2313, non_covid=2313),
}


def _shuffled(paths: Sequence[str], rng: np.random.Generator) -> list[str]:
    ordered = sorted(paths)
    return [ordered[i] for i in rng.permutation(len(ordered))]


def _counts_from_fractions(available: int, fractions: Sequence[float]) -> list[int]:
    """Validation and test get floor(fraction * available); train takes the rest."""
    validation = math.floor(fractions[1] * available)
    test = math.floor(fractions[2] * available)
    return [available - validation - test, validation, test]


def _check_fractions(fractions: Sequence[float]) -> None:
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ManifestError(f"split fractions must be three non-negative numbers, got {list(fractions)}")
    if not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ManifestError(f"split fractions must sum to 1, got {sum(fractions)}")


def _source_shares(per_split: Sequence[int], sources: int) -> list[list[int]]:
    """Divide each split's count across sources as evenly as possible.

    Shares are taken from cumulative totals, so every source ends up with
    total // sources images (plus one for the first total % sources sources).
    """
    shares = [[0] * len(per_split) for _ in range(sources)]
    cumulative_prev = 0
    for j, count in enumerate(per_split):
        cumulative = cumulative_prev + count
        for s in range(sources):
            before = cumulative_prev // sources + (1 if s < cumulative_prev % sources else 0)
            after = cumulative // sources + (1 if s < cumulative % sources else 0)
            shares[s][j] = after - before
        cumulative_prev = cumulative
    return shares


def assign_splits(
    covid_paths: Sequence[str],
    non_covid_sources: Mapping[str, Sequence[str]],
    *,
    counts: Mapping[str, SplitCounts] | None = None,
    fractions: Sequence[float] | None = None,
    seed: int = 0,
    covid_source: str = "COVID",
) -> DatasetManifest:
    """Deterministically assign images to splits.

    Exactly one of ``counts`` (per-split class counts) or ``fractions``
    (train, validation, test) must be given. NON-COVID images are drawn as
    evenly as possible from every source; in fractions mode the NON-COVID
    pool is k * (smallest source) so each source contributes equally.
    """
    if (counts is None) == (fractions is None):
        raise ManifestError("give either explicit split counts or split fractions")
    if not covid_paths:
        raise ManifestError("no COVID images to assign")
    if not non_covid_sources or any(not paths for paths in non_covid_sources.values()):
        raise ManifestError("every NON-COVID source needs at least one image")
    all_paths = list(covid_paths) + [p for paths in non_covid_sources.values() for p in paths]
    if len(set(all_paths)) != len(all_paths):
        raise ManifestError("the same image appears in more than one source")

    rng = np.random.default_rng(seed)
    covid_pool = _shuffled(covid_paths, rng)
    source_names = sorted(non_covid_sources)
    source_pools = {name: _shuffled(non_covid_sources[name], rng) for name in source_names}

    if counts is not None:
        unknown = set(counts) - set(SPLITS)
        if unknown:
            raise ManifestError(f"unknown splits {sorted(unknown)}")
        covid_counts = [counts.get(s, SplitCounts()).covid for s in SPLITS]
        non_covid_counts = [counts.get(s, SplitCounts()).non_covid for s in SPLITS]
    else:
        _check_fractions(fractions)
        smallest = min(len(pool) for pool in source_pools.values())
        covid_counts = _counts_from_fractions(len(covid_pool), fractions)
        non_covid_counts = _counts_from_fractions(smallest * len(source_names), fractions)

    if sum(covid_counts) > len(covid_pool):
        raise ManifestError(f"requested {sum(covid_counts)} COVID images, only {len(covid_pool)} available")
    shares = _source_shares(non_covid_counts, len(source_names))
    for name, share in zip(source_names, shares):
        if sum(share) > len(source_pools[name]):
            raise ManifestError(
                f"source {name!r} must supply {sum(share)} NON-COVID images, only {len(source_pools[name])} available"
            )

    entries: list[ManifestEntry] = []
    covid_cursor = 0
    source_cursors = dict.fromkeys(source_names, 0)
    for j, split in enumerate(SPLITS):
        for path in covid_pool[covid_cursor:covid_cursor + covid_counts[j]]:
            entries.append(ManifestEntry(path=path, label=POSITIVE_LABEL, split=split, source=covid_source))
        covid_cursor += covid_counts[j]
        for name, share in zip(source_names, shares):
            start = source_cursors[name]
            for path in source_pools[name][start:start + share[j]]:
                entries.append(ManifestEntry(path=path, label=NEGATIVE_LABEL, split=split, source=name))
            source_cursors[name] = start + share[j]

    manifest = DatasetManifest(seed=seed, entries=entries)
    logger.info("Assigned %d images: %s", len(entries), manifest.counts())
    return manifest


def list_images(directory: str | Path) -> list[str]:
    directory = Path(directory)
    if not directory.is_dir():
        raise ManifestError(f"{directory}: not a directory")
    paths = sorted(str(p) for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise ManifestError(f"{directory}: no .pgm or .png images")
    return paths


def _check_disjoint_dirs(dirs: Sequence[Path]) -> None:
    resolved = [d.resolve() for d in dirs]
    for i, a in enumerate(resolved):
        for b in resolved[i + 1:]:
            if a == b or a in b.parents or b in a.parents:
                raise ManifestError(f"class directories overlap: {a} and {b}")


def build_manifest(
    covid_dir: str | Path,
    non_covid_dirs: Sequence[str | Path],
    *,
    counts: Mapping[str, SplitCounts] | None = None,
    fractions: Sequence[float] | None = None,
    seed: int = 0,
) -> DatasetManifest:
    dirs = [Path(covid_dir)] + [Path(d) for d in non_covid_dirs]
    if len(dirs) < 2:
        raise ManifestError("at least one NON-COVID directory is required")
    _check_disjoint_dirs(dirs)
    sources: dict[str, list[str]] = {}
    for directory in dirs[1:]:
        name = directory.name
        if name in sources:
            raise ManifestError(f"two NON-COVID directories share the name {name!r}")
        sources[name] = list_images(directory)
    return assign_splits(
        list_images(dirs[0]),
        sources,
        counts=counts,
        fractions=fractions,
        seed=seed,
        covid_source=dirs[0].name,
    )


def format_manifest(manifest: DatasetManifest) -> str:
    buffer = io.StringIO()
    buffer.write(f"# {MANIFEST_FORMAT}\n")
    buffer.write(f"# seed: {manifest.seed}\n")
    for split, by_label in manifest.counts().items():
        buffer.write(f"# {split}: {POSITIVE_LABEL}={by_label[POSITIVE_LABEL]} {NEGATIVE_LABEL}={by_label[NEGATIVE_LABEL]}\n")
    writer = csv.writer(buffer, delimiter="\t", lineterminator="\n")
    writer.writerow(COLUMNS)
    for entry in manifest.entries:
        writer.writerow([entry.path, entry.label, entry.split, entry.source])
    return buffer.getvalue()


def write_manifest(manifest: DatasetManifest, path: str | Path) -> Path:
    return atomic_write_text(path, format_manifest(manifest))


def _parse_header(lines: list[str], source: str) -> tuple[int, dict[str, dict[str, int]]]:
    if not lines or lines[0] != f"# {MANIFEST_FORMAT}":
        raise ManifestError(f"{source}: missing '# {MANIFEST_FORMAT}' header")
    seed = None
    recorded: dict[str, dict[str, int]] = {}
    for line in lines[1:]:
        key, _, value = line[1:].strip().partition(":")
        value = value.strip()
        try:
            if key == "seed":
                seed = int(value)
            elif key in SPLITS:
                recorded[key] = {label: int(n) for label, n in (item.split("=") for item in value.split())}
        except ValueError:
            raise ManifestError(f"{source}: malformed header line {line!r}")
    if seed is None:
        raise ManifestError(f"{source}: header does not record the seed")
    return seed, recorded


def parse_manifest(text: str, source: str = "<manifest>") -> DatasetManifest:
    lines = text.splitlines()
    header = [line for line in lines if line.startswith("#")]
    body = [line for line in lines if line and not line.startswith("#")]
    seed, recorded = _parse_header(header, source)
    rows = list(csv.reader(body, delimiter="\t"))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise ManifestError(f"{source}: expected a column row {COLUMN_ROW!r}")
    entries = []
    for number, row in enumerate(rows[1:], start=2):
        if len(row) != len(COLUMNS):
            raise ManifestError(f"{source}: record {number} has {len(row)} fields, expected {len(COLUMNS)}")
        try:
            entries.append(ManifestEntry(**dict(zip(COLUMNS, row))))
        except ValidationError as exc:
            raise ManifestError(f"{source}: record {number}: {exc.errors()[0]['msg']}")
    try:
        manifest = DatasetManifest(seed=seed, entries=entries)
    except ValidationError as exc:
        raise ManifestError(f"{source}: {exc.errors()[0]['msg']}")
    for split, by_label in recorded.items():
        if by_label != manifest.class_counts(split):
            raise ManifestError(f"{source}: header counts for {split} {by_label} disagree with records")
    return manifest


def read_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"{path}: {exc.strerror}")
    return parse_manifest(text, str(path))


def subsample_split(
    manifest: DatasetManifest,
    split: str,
    fraction: float,
    seed: int = 0,
) -> list[ManifestEntry]:
    """A class-stratified, order-preserving subset; each present class keeps at least one image."""
    if not 0 < fraction <= 1:
        raise ManifestError(f"subsample fraction must lie in (0, 1], got {fraction}")
    entries = manifest.split(split)
    if fraction == 1:
        return entries
    rng = np.random.default_rng(seed)
    keep: set[int] = set()
    for label in (POSITIVE_LABEL, NEGATIVE_LABEL):
        indices = [i for i, e in enumerate(entries) if e.label == label]
        if not indices:
            continue
        n = max(1, round(fraction * len(indices)))
        keep.update(int(i) for i in rng.choice(indices, size=n, replace=False))
    return [e for i, e in enumerate(entries) if i in keep]
