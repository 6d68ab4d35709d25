import logging

import click

from app.commands.common import (
    check_run_store, handle_toolkit_errors, load_config, no_record_option, ok, run_db_option, run_store, seed_option,
    workers_option,
)
from app.schemas.image import PreprocessSpec
from app.schemas.train import TrainConfig
from app.services import run_service
from app.services.manifest_service import read_manifest
from app.services.train_service import train
from app.utils.config_files import load_preprocess_spec, load_train_config

logger = logging.getLogger(__name__)


@click.command("train")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Train config file (key = value).")
@click.option("--augment-config", type=click.Path(dir_okay=False), help="Augment/CLAHE config file.")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Dataset manifest.")
@click.option("--checkpoint", "checkpoint_path", type=click.Path(dir_okay=False), help="Where to write the best-validation checkpoint.")
@click.option("--epoch-checkpoint-dir", type=click.Path(file_okay=False), help="Also keep one checkpoint per epoch here.")
@click.option("--log", "log_path", type=click.Path(dir_okay=False), help="JSON-lines training log.")
@click.option("--run-name", default="train", show_default=True)
@seed_option
@workers_option
@run_db_option
@no_record_option
@handle_toolkit_errors
def train_command(config_path, augment_config, manifest_path, checkpoint_path, epoch_checkpoint_dir, log_path,
                  run_name, seed, workers, run_db, no_record):
    """Train the ViT classifier on a manifest's train split."""
    config = load_config(load_train_config, config_path, "--config", TrainConfig)
    preprocess = load_config(load_preprocess_spec, augment_config, "--augment-config", PreprocessSpec)
    overrides = {"seed": seed, "workers": workers, "checkpoint_path": checkpoint_path, "epoch_checkpoint_dir": epoch_checkpoint_dir}
    config = config.model_copy(update={k: v for k, v in overrides.items() if v is not None})
    if not no_record:
        check_run_store(run_db)
    manifest = read_manifest(manifest_path)

    result = train(config, manifest, preprocess=preprocess, log_path=log_path)
    if config.checkpoint_path:
        ok(f"Checkpoint from epoch {result.best_epoch} written to {config.checkpoint_path}")

    click.echo(f"epochs_run: {result.epochs_run}")
    click.echo(f"stopped_early: {str(result.stopped_early).lower()}")
    click.echo(f"best_epoch: {result.best_epoch}")
    click.echo(f"best_val_accuracy: {result.best_val_accuracy:.4f}")
    if not no_record:
        with run_store(run_db) as db:
            run = run_service.record_training_run(db, run_name, config, result)
            ok(f"Recorded run {run.id}")
