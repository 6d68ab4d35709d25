"""Shared plumbing for the subcommands: error mapping, config loading, run store sessions."""
from __future__ import annotations

import functools
from collections.abc import Callable
from contextlib import contextmanager
from pathlib import Path
from typing import TypeVar

import click
from sqlalchemy.exc import SQLAlchemyError

from app.core.config import RUNS_DATABASE_URL
from app.core.errors import ConfigError, ToolkitError
from app.db.database import make_session_factory

T = TypeVar("T")

seed_option = click.option("--seed", type=click.IntRange(min=0), default=None, help="Seed for every random draw; overrides the config file.")
workers_option = click.option("--workers", type=click.IntRange(min=1), default=None, help="Threads used to preprocess images.")
run_db_option = click.option("--run-db", default=RUNS_DATABASE_URL, show_default=True, help="SQLAlchemy URL of the run store.")
no_record_option = click.option("--no-record", is_flag=True, help="Do not store this run in the run store.")


def ok(message: str) -> None:
    click.echo(f"✓ {message}")


def fail(message: str) -> None:
    click.echo(f"✗ {message}", err=True)


def handle_toolkit_errors(command: Callable) -> Callable:
    """Report a ToolkitError or run-store failure as ``✗ stage: message`` and exit with status 1."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ToolkitError as exc:
            fail(f"{exc.stage}: {exc}")
            raise click.exceptions.Exit(1)
        except SQLAlchemyError as exc:
            fail(f"run-store: {exc}")
            raise click.exceptions.Exit(1)

    return wrapper


def load_config(loader: Callable[[Path], T], path: str | Path | None, param_hint: str, default: Callable[[], T]) -> T:
    """Parse a config file; problems with it are usage errors (exit 2) naming the flag."""
    if path is None:
        return default()
    try:
        return loader(Path(path))
    except ConfigError as exc:
        raise click.BadParameter(str(exc), param_hint=param_hint)
    except OSError as exc:
        raise click.BadParameter(f"{path}: {exc.strerror}", param_hint=param_hint)


@contextmanager
def run_store(url: str):
    session = make_session_factory(url)()
    try:
        yield session
    finally:
        session.close()


def check_run_store(url: str) -> None:
    """Open the run store before any work so a bad ``--run-db`` fails before outputs are written."""
    with run_store(url):
        pass
