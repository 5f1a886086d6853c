"""Operator entry point: serve the webhook endpoints, validate configuration,
or replay a mock scenario from the command line."""

from __future__ import annotations

import logging
import sys

import click

from .config import ConfigError, load_config
from .scenario import ScenarioError, run_scenario


@click.group()
def main() -> None:
    """Project-specific forge automation bot."""
    logging.basicConfig(level=logging.INFO, format="%(message)s")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--listen", default=None, help="addr:port override")
def serve(config_path: str, listen: str | None) -> None:
    """Start the webhook server and the scheduler."""
    import uvicorn

    from .mockforge import MockForge
    from .scenario import build_engine
    from .server import create_app

    try:
        config = load_config(config_path)
    except ConfigError as exc:
        raise SystemExit(f"invalid configuration:\n{exc}")
    # The live adapter is selected by supplying forge credentials; without
    # them the server runs against an empty in-memory forge (demo mode).
    import os

    if os.environ.get("BOT_GITHUB_TOKEN"):
        from .live import LiveForge

        port = LiveForge()
    else:
        port = MockForge()
    engine = build_engine(port, config)
    app = create_app(config, engine)
    addr, _, port_text = (listen or config.listen).partition(":")
    uvicorn.run(app, host=addr, port=int(port_text or 8000))


@main.command("check-config")
@click.option("--config", "config_path", required=True, type=click.Path())
def check_config(config_path: str) -> None:
    """Validate a configuration file, reporting every problem at once."""
    try:
        config = load_config(config_path)
    except ConfigError as exc:
        click.echo("invalid configuration:", err=True)
        for problem in exc.problems:
            click.echo(f"  - {problem}", err=True)
        sys.exit(1)
    click.echo(f"ok: {len(config.repositories)} repositories configured")


@main.command()
@click.argument("scenario", type=click.Path(exists=True))
@click.option("--duplicate-deliveries", is_flag=True, help="deliver every webhook twice")
def replay(scenario: str, duplicate_deliveries: bool) -> None:
    """Run a scenario script against the mock forge and print its transcript."""
    try:
        transcript = run_scenario(scenario, duplicate_deliveries=duplicate_deliveries)
    except ScenarioError as exc:
        click.echo(f"scenario failed: {exc}", err=True)
        sys.exit(1)
    click.echo(transcript.render(), nl=False)


if __name__ == "__main__":
    main()
