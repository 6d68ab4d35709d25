import click

from app.commands.common import (
    check_run_store, handle_toolkit_errors, load_config, no_record_option, ok, run_db_option, run_store, seed_option,
    workers_option,
)
from app.schemas.train import TrainConfig
from app.services import run_service
from app.services.hpo_service import (
    DEFAULT_BUDGET_EPOCHS, DEFAULT_TRAIN_FRACTION, DEFAULT_TRIALS, format_search_table, run_search, sample_trials,
)
from app.services.manifest_service import read_manifest
from app.utils.config_files import load_train_config
from app.utils.storage import atomic_write_json, atomic_write_text


@click.command("hpo")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Base train config; optimizer and lr are searched.")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--trials", type=click.IntRange(min=1), default=DEFAULT_TRIALS, show_default=True)
@click.option("--budget-epochs", type=click.IntRange(min=1), default=DEFAULT_BUDGET_EPOCHS, show_default=True)
@click.option("--train-fraction", type=click.FloatRange(0, 1, min_open=True), default=DEFAULT_TRAIN_FRACTION, show_default=True)
@click.option("--output", "-o", type=click.Path(dir_okay=False), help="Write the ranked table here.")
@click.option("--json", "json_path", type=click.Path(dir_okay=False), help="Machine-readable trial records.")
@click.option("--run-name", default="hpo", show_default=True)
@seed_option
@workers_option
@run_db_option
@no_record_option
@handle_toolkit_errors
def hpo_command(config_path, manifest_path, trials, budget_epochs, train_fraction, output, json_path, run_name,
                seed, workers, run_db, no_record):
    """Random search over optimizer (Adam / RectifiedAdam) and learning rate."""
    config = load_config(load_train_config, config_path, "--config", TrainConfig)
    if seed is not None:
        config = config.model_copy(update={"seed": seed})
    if not no_record:
        check_run_store(run_db)
    manifest = read_manifest(manifest_path)

    specs = sample_trials(trials, config.seed, budget_epochs=budget_epochs)
    records = run_search(specs, config, manifest, train_fraction=train_fraction, workers=workers or config.workers)
    table = format_search_table(records)
    if output:
        atomic_write_text(output, table)
    if json_path:
        atomic_write_json(json_path, [record.model_dump(mode="json", exclude={"wall_time"}) for record in records])
    click.echo(table, nl=False)
    if not no_record:
        with run_store(run_db) as db:
            run = run_service.record_search(db, run_name, config, records)
            ok(f"Recorded search {run.id}")
