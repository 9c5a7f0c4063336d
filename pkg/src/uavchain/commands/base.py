"""Command implementations behind the ``uavchain`` CLI."""

import asyncio
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Any, Optional

from uavchain.core.config import (
    ConfigParseError,
    ConfigValidationError,
    Scheme,
    SimConfig,
    load_config_file,
)
from uavchain.core.engine import Simulation
from uavchain.core.metrics import MetricsReport, UndefinedMetricError, summarize
from uavchain.core.runner import RunResult, SweepRunner, SweepSpec, SweepSpecError
from uavchain.sim.ledger import export_chain, first_broken_block

from .formatters import (
    calibration_to_csv,
    messages_series,
    success_series,
    summary_to_csv,
    to_csv,
)
from .parsers import ChainExportError, parse_chain_export

logger = logging.getLogger(__name__)

SWEEP_FILES = ("runs.csv", "summary.csv", "fig3_series.csv", "fig4_series.csv", "calibration.csv")


def write_text(path: Path, text: str) -> None:
    """Write with ``\\n`` line endings on every platform."""
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(text)


class ExitCode(IntEnum):
    OK = 0
    VALIDATION = 1
    PARSE = 2
    VERIFICATION = 3


def exit_code_for(error: BaseException) -> ExitCode:
    """Map a failure onto the CLI's exit code."""
    if isinstance(error, (ConfigParseError, ChainExportError)):
        return ExitCode.PARSE
    return ExitCode.VALIDATION


def format_error_message(cmd_name: str, error: BaseException) -> str:
    """Friendly diagnostic for a failed command.

    Args:
        cmd_name: Command name
        error: What went wrong

    Returns:
        Message for standard error
    """
    if isinstance(error, ConfigParseError):
        return f"{cmd_name}: cannot read config: {error}"
    if isinstance(error, ConfigValidationError):
        return f"{cmd_name}: invalid config value {error.key}={error.value!r}: {error.reason}"
    if isinstance(error, UndefinedMetricError):
        return f"{cmd_name}: {error}\n\nUse at least two mobile nodes so flows can be sampled."
    if isinstance(error, ChainExportError):
        return f"{cmd_name}: not a chain export: {error}"
    if isinstance(error, SweepSpecError):
        return f"{cmd_name}: invalid sweep: {error}"
    return f"{cmd_name}: {error}" if str(error) else f"{cmd_name} failed"


def resolve_config(config_path: Optional[Path], overrides: dict[str, Any]) -> SimConfig:
    """Load the config (file, env var or defaults) and apply flag overrides.

    ``None`` overrides are ignored; ``scheme`` may be given as text.

    Raises:
        ConfigParseError: the file cannot be read or parsed
        ConfigValidationError: a value breaks an invariant
    """
    config = load_config_file(config_path)
    applied = {k: v for k, v in overrides.items() if v is not None}
    if isinstance(applied.get("scheme"), str):
        try:
            applied["scheme"] = Scheme.parse(applied["scheme"])
        except ValueError as e:
            raise ConfigValidationError("scheme", applied["scheme"], str(e)) from e
    return config.with_overrides(**applied) if applied else config


@dataclass
class RunOutput:
    report: MetricsReport
    csv_text: str
    chain_files: tuple[Path, ...] = ()


def cmd_run(config: SimConfig, export_dir: Optional[Path] = None) -> RunOutput:
    """Execute one run and render its CSV.

    Raises:
        UndefinedMetricError: the run sampled no flows
    """
    sim = Simulation(config)
    report = sim.run()
    if report.flows_total == 0:
        raise UndefinedMetricError(
            f"success rate undefined: {config.n_nodes} nodes produced no flows"
        )

    written: list[Path] = []
    if export_dir is not None:
        if sim.ledger is None:
            logger.warning("--export-chain ignored: %s keeps no ledger", config.scheme.value)
        else:
            export_dir.mkdir(parents=True, exist_ok=True)
            for name, chain in (("private", sim.ledger.private), ("public", sim.ledger.public)):
                path = export_dir / f"{name}.chain.jsonl"
                write_text(path, export_chain(chain))
                written.append(path)
    return RunOutput(report=report, csv_text=to_csv([report]), chain_files=tuple(written))


def build_sweep_spec(
    config: SimConfig,
    node_counts: Sequence[int],
    schemes: Sequence[str],
    replicate: int,
) -> SweepSpec:
    try:
        parsed = [Scheme.parse(s) for s in schemes]
    except ValueError as e:
        raise SweepSpecError(str(e)) from e
    return SweepSpec.build(
        config, node_counts=list(node_counts), schemes=parsed, replicate=replicate
    )


def cmd_sweep(spec: SweepSpec, out_dir: Path, workers: int = 1) -> dict[str, Path]:
    """Run every combination and write the sweep files.

    Returns:
        Map of file name to written path

    Raises:
        SweepSpecError: a combination is invalid (nothing is run) or a run failed
    """
    runner = SweepRunner(workers=workers)
    results: list[RunResult] = asyncio.run(runner.run_sweep(spec))
    failed = [r for r in results if not r.success]
    if failed:
        first = failed[0]
        raise SweepSpecError(
            f"{len(failed)} runs failed; first: {first.config.scheme.value} "
            f"n={first.config.n_nodes} seed={first.config.seed}: {first.error}"
        )

    reports = [r.report for r in results if r.report is not None]
    summaries = summarize(reports)
    contents = {
        "runs.csv": to_csv(reports),
        "summary.csv": summary_to_csv(summaries),
        "fig3_series.csv": success_series(summaries),
        "fig4_series.csv": messages_series(summaries),
        "calibration.csv": calibration_to_csv(summaries),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    for name in SWEEP_FILES:
        path = out_dir / name
        write_text(path, contents[name])
        written[name] = path
    logger.info("sweep of %d runs written to %s", len(reports), out_dir)
    return written


def cmd_verify_chain(path: Path) -> tuple[ExitCode, str]:
    """Verify a chain export file.

    Returns:
        (exit code, human-readable verdict)
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        return ExitCode.PARSE, f"cannot read {path}: {e}"
    try:
        chain = parse_chain_export(text)
    except ChainExportError as e:
        return ExitCode.PARSE, format_error_message("verify-chain", e)

    broken = first_broken_block(chain)
    if broken is None:
        return ExitCode.OK, f"{path}: {len(chain)} blocks verified"
    return (
        ExitCode.VERIFICATION,
        f"{path}: block {broken} (line {broken + 1}) fails hash or linkage check",
    )
