import math

import click

from app.commands.common import handle_toolkit_errors, load_config
from app.core.config import NEGATIVE_LABEL, POSITIVE_LABEL
from app.core.errors import ShapeError
from app.schemas.train import TrainConfig
from app.services.checkpoint_service import load_checkpoint
from app.services.manifest_service import read_manifest
from app.services.vit_service import param_count, shape_table
from app.utils.config_files import load_train_config


@click.command("inspect")
@click.option("--checkpoint", "checkpoint_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Show the shape table of a train config instead.")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False), help="Show per-split class counts.")
@handle_toolkit_errors
def inspect_command(checkpoint_path, config_path, manifest_path):
    """Print a model's shape table and parameter count, or a manifest's counts."""
    if not (checkpoint_path or config_path or manifest_path):
        raise click.UsageError("give --checkpoint, --config or --manifest")
    if checkpoint_path or config_path:
        if checkpoint_path:
            params, vit = load_checkpoint(checkpoint_path)
            stored = params.total_size()
        else:
            vit = load_config(load_train_config, config_path, "--config", TrainConfig).vit
            stored = None
        table = shape_table(vit)
        width = max(len(name) for name, _ in table)
        for name, shape in table:
            click.echo(f"{name.ljust(width)}  {shape}")
        total = sum(math.prod(shape) for _, shape in table)
        if total != param_count(vit) or (stored is not None and stored != total):
            raise ShapeError(f"parameter count mismatch: table {total}, closed form {param_count(vit)}, stored {stored}")
        click.echo(f"seq_len: {vit.seq_len}")
        click.echo(f"param_count: {total}")
    if manifest_path:
        manifest = read_manifest(manifest_path)
        click.echo(f"seed: {manifest.seed}")
        for split, by_label in manifest.counts().items():
            click.echo(f"{split}: {POSITIVE_LABEL}={by_label[POSITIVE_LABEL]} {NEGATIVE_LABEL}={by_label[NEGATIVE_LABEL]}")
