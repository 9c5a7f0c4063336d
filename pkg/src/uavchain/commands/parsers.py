"""Parsers turning emitted text (run CSV, chain exports) back into structured data."""

import csv
import io
import json
from typing import Any

from uavchain.commands.formatters import RUN_COLUMNS
from uavchain.sim.ledger import Block, Chain

BLOCK_FIELDS = ("index", "prev_hash", "hash", "proposer", "timestamp_s", "transactions")


class ChainExportError(ValueError):
    """A chain export cannot be parsed."""


def parse_runs_csv(text: str) -> list[dict[str, Any]]:
    """Parse :func:`~uavchain.commands.formatters.to_csv` output.

    Args:
        text: CSV text with the run header

    Returns:
        One dict per row; counters as int, success_rate as float or None
    """
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != RUN_COLUMNS:
        raise ValueError(f"unexpected header: {reader.fieldnames}")

    rows: list[dict[str, Any]] = []
    for raw in reader:
        row: dict[str, Any] = {}
        for column in RUN_COLUMNS:
            cell = raw[column]
            if column == "scheme":
                row[column] = cell
            elif column == "success_rate":
                row[column] = float(cell) if cell else None
            else:
                row[column] = int(cell)
        rows.append(row)
    return rows


def parse_chain_export(text: str) -> Chain:
    """Rebuild a chain from its line-delimited export.

    Only the block structure is checked here. Transaction payloads are taken as
    written, so an edited payload surfaces as a digest mismatch in
    :func:`~uavchain.sim.ledger.verify_chain` rather than as a parse error.

    Raises:
        ChainExportError: empty file, invalid JSON, or a record with the wrong fields
    """
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise ChainExportError("chain export is empty")

    blocks: list[Block] = []
    for lineno, line in enumerate(lines, start=1):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise ChainExportError(f"line {lineno}: invalid JSON: {e.msg}") from e
        if not isinstance(record, dict):
            raise ChainExportError(f"line {lineno}: expected an object")
        if tuple(record) != BLOCK_FIELDS:
            raise ChainExportError(f"line {lineno}: fields {list(record)} != {list(BLOCK_FIELDS)}")
        try:
            blocks.append(Block.from_record(record, checked=False))
        except (KeyError, TypeError, ValueError) as e:
            raise ChainExportError(f"line {lineno}: malformed block: {e}") from e
    return Chain(blocks=tuple(blocks))
