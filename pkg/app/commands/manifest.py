import click
from pydantic import ValidationError

from app.commands.common import handle_toolkit_errors, ok, seed_option
from app.core.config import NEGATIVE_LABEL, POSITIVE_LABEL
from app.schemas.manifest import SplitCounts
from app.services.manifest_service import REFERENCE_SPLIT_COUNTS, build_manifest, write_manifest


def _parse_fractions(ctx, param, value):
    if value is None:
        return None
    try:
        fractions = tuple(float(part) for part in value.split(","))
    except ValueError:
        raise click.BadParameter(f"expected three comma-separated numbers, got {value!r}")
    if len(fractions) != 3:
        raise click.BadParameter(f"expected train,validation,test fractions, got {value!r}")
    return fractions


def _parse_counts(ctx, param, value):
    """``train=6880:6980,validation=350:369,test=2313:2313`` (COVID:NON-COVID)."""
    if value is None:
        return None
    counts = {}
    try:
        for item in value.split(","):
            split, _, pair = item.partition("=")
            covid, non_covid = (int(n) for n in pair.split(":"))
            counts[split.strip()] = SplitCounts(covid=covid, non_covid=non_covid)
    except ValidationError as exc:
        raise click.BadParameter(f"split counts must be non-negative: {exc.errors()[0]['msg']}")
    except ValueError:
        raise click.BadParameter(f"expected split=COVID:NON-COVID pairs, got {value!r}")
    return counts


@click.command("manifest")
@click.option("--covid-dir", required=True, type=click.Path(exists=True, file_okay=False), help="Directory of COVID images.")
@click.option(
    "--non-covid-dir", "non_covid_dirs", required=True, multiple=True, type=click.Path(exists=True, file_okay=False),
    help="Directory of NON-COVID images; repeat for several sources drawn in equal shares.",
)
@click.option("--fractions", callback=_parse_fractions, help="train,validation,test fractions, e.g. 0.7,0.15,0.15.")
@click.option("--counts", callback=_parse_counts, help="Explicit per-split counts: train=C:N,validation=C:N,test=C:N.")
@click.option("--reference-counts", is_flag=True, help="Use the reference split (13,860 / 719 / 4,626).")
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False), help="Manifest file to write.")
@seed_option
@handle_toolkit_errors
def manifest_command(covid_dir, non_covid_dirs, fractions, counts, reference_counts, output, seed):
    """Assign images to train/validation/test and write a TSV manifest."""
    chosen = [name for name, given in (("--fractions", fractions), ("--counts", counts), ("--reference-counts", reference_counts)) if given]
    if len(chosen) > 1:
        raise click.UsageError(f"{' and '.join(chosen)} are mutually exclusive")
    if reference_counts:
        counts = REFERENCE_SPLIT_COUNTS
    elif not chosen:
        fractions = (0.7, 0.15, 0.15)
    manifest = build_manifest(covid_dir, list(non_covid_dirs), counts=counts, fractions=fractions, seed=seed or 0)
    write_manifest(manifest, output)
    for split, by_label in manifest.counts().items():
        click.echo(f"{split}: {POSITIVE_LABEL}={by_label[POSITIVE_LABEL]} {NEGATIVE_LABEL}={by_label[NEGATIVE_LABEL]}")
    ok(f"Manifest with {len(manifest.entries)} images written to {output}")
