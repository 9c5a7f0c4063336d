"""Command-line entry point: ``uavchain run | sweep | verify-chain``."""

import logging
import sys
from pathlib import Path
from typing import Optional

import click

from uavchain import __version__
from uavchain.commands import (
    ExitCode,
    build_sweep_spec,
    cmd_run,
    cmd_sweep,
    cmd_verify_chain,
    exit_code_for,
    format_error_message,
    resolve_config,
)
from uavchain.core.config import CONFIG_ENV_VAR, ConfigError
from uavchain.core.metrics import UndefinedMetricError
from uavchain.core.runner import SweepSpecError

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
_HANDLED = (ConfigError, SweepSpecError, UndefinedMetricError)

config_option = click.option(
    "--config",
    "config_path",
    type=click.Path(dir_okay=False, path_type=Path),
    envvar=CONFIG_ENV_VAR,
    default=None,
    help=f"Scenario YAML (default: ${CONFIG_ENV_VAR}, then the shipped defaults).",
)
seed_option = click.option("--seed", type=int, default=None, help="Override the run seed.")


def _fail(ctx: click.Context, cmd_name: str, error: Exception) -> None:
    click.echo(format_error_message(cmd_name, error), err=True)
    ctx.exit(int(exit_code_for(error)))


@click.group()
@click.version_option(__version__, prog_name="uavchain")
@click.option(
    "--log-level",
    type=click.Choice(LOG_LEVELS, case_sensitive=False),
    default="WARNING",
    show_default=True,
)
def cli(log_level: str) -> None:
    """Simulate UAV-assisted node-to-node delivery with and without a blockchain."""
    logging.basicConfig(
        level=getattr(logging, log_level.upper()),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


@cli.command()
@config_option
@click.option("--scheme", default=None, help="n2n-bs, n2n-uav or n2n-uav-bc.")
@click.option("--nodes", type=int, default=None, help="Number of mobile nodes.")
@seed_option
@click.option(
    "--export-chain",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Directory for private/public chain exports (blockchain scheme only).",
)
@click.pass_context
def run(
    ctx: click.Context,
    config_path: Optional[Path],
    scheme: Optional[str],
    nodes: Optional[int],
    seed: Optional[int],
    export_chain: Optional[Path],
) -> None:
    """Run one scenario and print its CSV row."""
    try:
        config = resolve_config(config_path, {"scheme": scheme, "n_nodes": nodes, "seed": seed})
        output = cmd_run(config, export_dir=export_chain)
    except _HANDLED as e:
        _fail(ctx, "run", e)
        return
    click.echo(output.csv_text, nl=False)


@cli.command()
@config_option
@click.option("--scheme", "schemes", multiple=True, help="Scheme to include (repeatable).")
@click.option("--nodes", "node_counts", type=int, multiple=True, help="Node count (repeatable).")
@seed_option
@click.option("--replicate", type=int, default=5, show_default=True, help="Seeds per point.")
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("results"),
    show_default=True,
)
@click.option("--workers", type=int, default=1, show_default=True, help="Concurrent runs.")
@click.pass_context
def sweep(
    ctx: click.Context,
    config_path: Optional[Path],
    schemes: tuple[str, ...],
    node_counts: tuple[int, ...],
    seed: Optional[int],
    replicate: int,
    out_dir: Path,
    workers: int,
) -> None:
    """Run every scheme x node count x seed and write the plot series."""
    try:
        config = resolve_config(config_path, {"seed": seed})
        spec = build_sweep_spec(config, node_counts, schemes, replicate)
        written = cmd_sweep(spec, out_dir, workers=workers)
    except _HANDLED as e:
        _fail(ctx, "sweep", e)
        return
    for path in written.values():
        click.echo(str(path))


@cli.command("verify-chain")
@click.argument("path", type=click.Path(dir_okay=False, path_type=Path))
@click.pass_context
def verify_chain(ctx: click.Context, path: Path) -> None:
    """Check hashes and linkage of a chain export."""
    code, message = cmd_verify_chain(path)
    click.echo(message, err=code is not ExitCode.OK)
    ctx.exit(int(code))


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
