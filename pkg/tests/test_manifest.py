import pytest
from pydantic import ValidationError

from app.core.errors import ManifestError
from app.schemas.manifest import SplitCounts
from app.services.manifest_service import (
    REFERENCE_SPLIT_COUNTS,
    assign_splits,
    build_manifest,
    format_manifest,
    parse_manifest,
    read_manifest,
    subsample_split,
    write_manifest,
)
from tests.conftest import write_corpus


def fake_paths(prefix: str, count: int) -> list[str]:
    return [f"{prefix}/{i:05d}.png" for i in range(count)]


@pytest.fixture
def reference_pool():
    covid = fake_paths("COVID", 9543)
    sources = {name: fake_paths(name, 3400) for name in ("Lung_Opacity", "Normal", "Viral_Pneumonia")}
    return covid, sources


def test_reference_counts(reference_pool):
    covid, sources = reference_pool
    manifest = assign_splits(covid, sources, counts=REFERENCE_SPLIT_COUNTS, seed=11)
    counts = manifest.counts()
    assert counts["train"] == {"COVID": 6880, "NON-COVID": 6980}
    assert counts["validation"] == {"COVID": 350, "NON-COVID": 369}
    assert counts["test"] == {"COVID": 2313, "NON-COVID": 2313}
    assert [len(manifest.split(s)) for s in ("train", "validation", "test")] == [13860, 719, 4626]

    per_source = {}
    for entry in manifest.entries:
        if entry.label == "NON-COVID":
            per_source[entry.source] = per_source.get(entry.source, 0) + 1
    assert max(per_source.values()) - min(per_source.values()) <= 1
    assert sum(per_source.values()) == 6980 + 369 + 2313


def test_splits_are_disjoint(reference_pool):
    covid, sources = reference_pool
    manifest = assign_splits(covid, sources, counts=REFERENCE_SPLIT_COUNTS, seed=0)
    paths = [e.path for e in manifest.entries]
    assert len(paths) == len(set(paths))


def test_all_train_fractions():
    manifest = assign_splits(fake_paths("c", 10), {"n": fake_paths("n", 7)}, fractions=(1.0, 0.0, 0.0))
    assert len(manifest.split("train")) == 17
    assert not manifest.split("validation") and not manifest.split("test")


def test_fractions_balance_sources():
    sources = {"a": fake_paths("a", 10), "b": fake_paths("b", 4)}
    manifest = assign_splits(fake_paths("c", 20), sources, fractions=(0.5, 0.25, 0.25), seed=1)
    non_covid = [e for e in manifest.entries if e.label == "NON-COVID"]
    assert len(non_covid) == 8
    assert sum(e.source == "a" for e in non_covid) == sum(e.source == "b" for e in non_covid) == 4
    assert manifest.class_counts("validation") == {"COVID": 5, "NON-COVID": 2}


def test_same_seed_same_bytes():
    sources = {"n": fake_paths("n", 30)}
    first = assign_splits(fake_paths("c", 30), sources, fractions=(0.6, 0.2, 0.2), seed=5)
    second = assign_splits(fake_paths("c", 30), sources, fractions=(0.6, 0.2, 0.2), seed=5)
    other = assign_splits(fake_paths("c", 30), sources, fractions=(0.6, 0.2, 0.2), seed=6)
    assert format_manifest(first) == format_manifest(second)
    assert format_manifest(first) != format_manifest(other)


def test_insufficient_images():
    with pytest.raises(ManifestError, match="COVID"):
        assign_splits(fake_paths("c", 3), {"n": fake_paths("n", 10)}, counts={"train": SplitCounts(covid=4, non_covid=1)})
    with pytest.raises(ManifestError, match="source"):
        assign_splits(fake_paths("c", 10), {"n": fake_paths("n", 3)}, counts={"train": SplitCounts(covid=1, non_covid=4)})


def test_bad_requests():
    with pytest.raises(ManifestError):
        assign_splits(fake_paths("c", 3), {"n": fake_paths("n", 3)}, fractions=(0.5, 0.2, 0.2))
    with pytest.raises(ManifestError):
        assign_splits(fake_paths("c", 3), {"n": fake_paths("n", 3)})
    with pytest.raises(ManifestError):
        assign_splits(fake_paths("c", 3), {"n": fake_paths("c", 3)}, fractions=(1, 0, 0))


def test_build_manifest_from_directories(tmp_path):
    dirs = write_corpus(tmp_path, {"COVID": (1, 6), "Normal": (0, 3), "Viral": (0, 3)})
    manifest = build_manifest(tmp_path / "COVID", [tmp_path / "Normal", tmp_path / "Viral"], fractions=(1, 0, 0), seed=2)
    assert manifest.class_counts("train") == {"COVID": 6, "NON-COVID": 6}
    assert {e.path for e in manifest.entries} == set(dirs["COVID"] + dirs["Normal"] + dirs["Viral"])


def test_overlapping_directories_rejected(tmp_path):
    write_corpus(tmp_path, {"COVID": (1, 2), "Normal": (0, 2)})
    with pytest.raises(ManifestError, match="overlap"):
        build_manifest(tmp_path / "COVID", [tmp_path], fractions=(1, 0, 0))
    with pytest.raises(ManifestError, match="overlap"):
        build_manifest(tmp_path / "COVID", [tmp_path / "COVID"], fractions=(1, 0, 0))


def test_empty_directory_rejected(tmp_path):
    write_corpus(tmp_path, {"COVID": (1, 2)})
    (tmp_path / "Empty").mkdir()
    with pytest.raises(ManifestError, match="no .pgm"):
        build_manifest(tmp_path / "COVID", [tmp_path / "Empty"], fractions=(1, 0, 0))


def test_file_round_trip(tmp_path):
    manifest = assign_splits(fake_paths("c", 12), {"n": fake_paths("n", 12)}, fractions=(0.5, 0.25, 0.25), seed=9)
    path = write_manifest(manifest, tmp_path / "m.tsv")
    assert read_manifest(path) == manifest
    assert path.read_text().startswith("# vitcxr-manifest v1\n# seed: 9\n")


def test_tampered_manifest_rejected(tmp_path):
    manifest = assign_splits(fake_paths("c", 4), {"n": fake_paths("n", 4)}, fractions=(1, 0, 0))
    text = format_manifest(manifest)
    with pytest.raises(ManifestError, match="disagree"):
        parse_manifest(text.rsplit("\n", 2)[0] + "\n")
    with pytest.raises(ManifestError, match="header"):
        parse_manifest(text.split("\n", 1)[1])
    with pytest.raises(ManifestError):
        parse_manifest(text.replace("\tNON-COVID\t", "\tPNEUMONIA\t", 1))


def test_subsample_split_is_stratified():
    manifest = assign_splits(fake_paths("c", 40), {"n": fake_paths("n", 40)}, fractions=(1, 0, 0), seed=4)
    subset = subsample_split(manifest, "train", 0.25, seed=1)
    assert sum(e.label == "COVID" for e in subset) == 10
    assert sum(e.label == "NON-COVID" for e in subset) == 10
    assert subset == subsample_split(manifest, "train", 0.25, seed=1)
    assert subsample_split(manifest, "train", 1.0) == manifest.split("train")
    with pytest.raises(ManifestError):
        subsample_split(manifest, "train", 0.0)


def test_negative_counts_rejected():
    with pytest.raises(ValidationError):
        SplitCounts(covid=-3, non_covid=2)
    with pytest.raises(ValidationError):
        SplitCounts(covid=4, non_covid=-1)
