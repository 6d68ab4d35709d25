import click

from app.commands.evaluate import evaluate_command
from app.commands.hpo import hpo_command
from app.commands.inspect import inspect_command
from app.commands.manifest import manifest_command
from app.commands.preprocess import preprocess_command
from app.commands.runs import runs_group
from app.commands.train import train_command
from app.core.logging import configure_logging


@click.group(name="vitcxr", context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--verbose", "-v", is_flag=True, help="Log at DEBUG level.")
def cli(verbose):
    """Vision Transformer toolkit for COVID / NON-COVID chest X-ray classification."""
    configure_logging("DEBUG" if verbose else None)


cli.add_command(preprocess_command)
cli.add_command(manifest_command)
cli.add_command(train_command)
cli.add_command(evaluate_command)
cli.add_command(hpo_command)
cli.add_command(inspect_command)
cli.add_command(runs_group)


if __name__ == "__main__":
    cli()
