import click

from app.commands.common import handle_toolkit_errors, load_config, workers_option
from app.schemas.image import PreprocessSpec
from app.schemas.train import TrainConfig
from app.services.checkpoint_service import load_checkpoint
from app.services.manifest_service import read_manifest
from app.services.metrics_service import format_report
from app.services.train_service import evaluate
from app.utils.config_files import load_preprocess_spec, load_train_config
from app.utils.storage import atomic_write_json, atomic_write_text


@click.command("eval")
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--split", type=click.Choice(["train", "validation", "test"]), default="test", show_default=True)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Train config (batch size, CLAHE switch).")
@click.option("--augment-config", type=click.Path(dir_okay=False), help="CLAHE settings used at training time.")
@click.option("--output", "-o", type=click.Path(dir_okay=False), help="Also write the key: value report here.")
@click.option("--json", "json_path", type=click.Path(dir_okay=False), help="Machine-readable report.")
@workers_option
@handle_toolkit_errors
def evaluate_command(checkpoint_path, manifest_path, split, config_path, augment_config, output, json_path, workers):
    """Score a checkpoint on one manifest split."""
    config = load_config(load_train_config, config_path, "--config", TrainConfig)
    preprocess = load_config(load_preprocess_spec, augment_config, "--augment-config", PreprocessSpec)
    if workers is not None:
        config = config.model_copy(update={"workers": workers})
    params, vit_config = load_checkpoint(checkpoint_path)
    config = config.model_copy(update={"vit": vit_config})
    manifest = read_manifest(manifest_path)

    report = evaluate(params, config, manifest.split(split), preprocess=preprocess)
    text = f"split: {split}\n" + format_report(report)
    if output:
        atomic_write_text(output, text)
    if json_path:
        atomic_write_json(json_path, {"split": split, **report.model_dump()})
    click.echo(text, nl=False)
