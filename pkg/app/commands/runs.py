import click

from app.commands.common import fail, handle_toolkit_errors, ok, run_db_option, run_store
from app.schemas.run import EpochLogResponse, RunResponse, TrialResultResponse
from app.services import run_service


@click.group("runs")
def runs_group():
    """List, show and delete stored training runs and searches."""


@runs_group.command("list")
@run_db_option
@click.option("--skip", type=click.IntRange(min=0), default=0)
@click.option("--limit", type=click.IntRange(min=1), default=100)
@handle_toolkit_errors
def list_runs(run_db, skip, limit):
    with run_store(run_db) as db:
        runs = [RunResponse.model_validate(run) for run in run_service.get_all_runs(db, skip, limit)]
    if not runs:
        click.echo("no runs recorded")
    for run in runs:
        accuracy = "-" if run.best_val_accuracy is None else f"{run.best_val_accuracy:.4f}"
        click.echo(
            f"{run.id}\t{run.kind.value}\t{run.run_name}\tseed {run.seed}\tepochs {run.epochs_run}\t"
            f"best_val_accuracy {accuracy}\t{run.created_at:%Y-%m-%d %H:%M:%S}"
        )


@runs_group.command("show")
@click.argument("run_id", type=int)
@run_db_option
@handle_toolkit_errors
def show_run(run_id, run_db):
    with run_store(run_db) as db:
        run = run_service.get_run_by_id(db, run_id)
        if run is None:
            fail(f"run {run_id} not found")
            raise click.exceptions.Exit(1)
        summary = RunResponse.model_validate(run)
        epochs = [EpochLogResponse.model_validate(e) for e in run_service.get_run_epochs(db, run_id)]
        trials = [TrialResultResponse.model_validate(t) for t in run_service.get_run_trials(db, run_id)]
    for key, value in summary.model_dump(mode="json").items():
        click.echo(f"{key}: {value}")
    for epoch in epochs:
        click.echo(
            f"epoch {epoch.epoch}: loss {epoch.train_loss:.4f} train_acc {epoch.train_accuracy:.4f} "
            f"val_acc {epoch.val_accuracy:.4f} lr {epoch.lr:.3g}"
        )
    for trial in trials:
        accuracy = "-" if trial.best_val_accuracy is None else f"{trial.best_val_accuracy:.4f}"
        click.echo(
            f"rank {trial.rank}: trial {trial.trial_id} {trial.optimizer} lr {trial.lr:.6e} "
            f"best_val_accuracy {accuracy} status {trial.status}"
        )


@runs_group.command("delete")
@click.argument("run_id", type=int)
@run_db_option
@handle_toolkit_errors
def delete_run(run_id, run_db):
    with run_store(run_db) as db:
        deleted = run_service.delete_run(db, run_id)
    if not deleted:
        fail(f"run {run_id} not found")
        raise click.exceptions.Exit(1)
    ok(f"run {run_id} deleted")


@runs_group.command("clear")
@run_db_option
@click.confirmation_option(prompt="Delete every stored run?")
@handle_toolkit_errors
def clear_runs(run_db):
    with run_store(run_db) as db:
        count = run_service.clear_runs(db)
    ok(f"{count} runs deleted")
