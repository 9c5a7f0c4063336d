"""CSV and series formatters for run reports and sweep summaries.

All numbers are written with Python's locale-independent formatting and a ``.``
decimal separator; rows end with ``\\n`` on every platform.
"""

import csv
import io
from collections.abc import Iterable, Sequence
from typing import Any, Optional

from uavchain.core.config import Scheme
from uavchain.core.metrics import (
    MetricsReport,
    PointSummary,
    delivery_success_rate,
    total_messages,
)

RUN_COLUMNS = (
    "scheme",
    "n_nodes",
    "seed",
    "success_rate",
    "total_messages",
    "flows_total",
    "delivered_authentic",
    "delivered_compromised",
    "dropped",
    "data_transmissions",
    "control_messages",
    "consensus_messages",
)

SUMMARY_COLUMNS = (
    "scheme",
    "n_nodes",
    "replicates",
    "success_mean",
    "success_stdev",
    "messages_mean",
    "messages_stdev",
)

SERIES_COLUMNS = ("scheme", "x", "y")

CALIBRATION_COLUMNS = (
    "scheme",
    "n_nodes",
    "metric",
    "measured",
    "reference",
    "tolerance",
    "within_tolerance",
)

# Reference curves the default scenario is calibrated against.
REFERENCE_SUCCESS_RATE: dict[Scheme, dict[int, float]] = {
    Scheme.N2N_BS: dict(zip(range(10, 101, 10), (95, 92, 88, 84, 80, 76, 71, 66, 61, 55))),
    Scheme.N2N_UAV_NO_BC: dict(zip(range(10, 101, 10), (96, 93, 89, 85, 81, 77, 73, 69, 65, 60))),
    Scheme.N2N_UAV_BC: dict(zip(range(10, 101, 10), (98, 96, 95, 93, 91, 89, 86, 83, 80, 77))),
}
REFERENCE_MESSAGES: dict[Scheme, dict[int, float]] = {
    Scheme.N2N_BS: dict(
        zip(range(10, 101, 10), (500, 530, 590, 650, 700, 770, 870, 990, 1100, 1200))
    ),
    Scheme.N2N_UAV_NO_BC: dict(
        zip(range(10, 101, 10), (1000, 1050, 1100, 1180, 1300, 1430, 1550, 1700, 1900, 2150))
    ),
    Scheme.N2N_UAV_BC: dict(
        zip(range(10, 101, 10), (1200, 1250, 1300, 1400, 1550, 1720, 1900, 2150, 2400, 2650))
    ),
}
SUCCESS_TOLERANCE_POINTS = 5.0
MESSAGES_TOLERANCE_RATIO = 0.10


def format_number(value: Optional[float]) -> str:
    """Shortest round-tripping text for a number; empty for an undefined value."""
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def _write(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def report_row(report: MetricsReport) -> list[str]:
    rate = delivery_success_rate(report) if report.flows_total > 0 else None
    return [
        report.scheme.value,
        str(report.n_nodes),
        str(report.seed),
        format_number(rate),
        str(total_messages(report)),
        str(report.flows_total),
        str(report.delivered_authentic),
        str(report.delivered_compromised),
        str(report.dropped),
        str(report.data_transmissions),
        str(report.control_messages),
        str(report.consensus_messages),
    ]


def to_csv(reports: Sequence[MetricsReport]) -> str:
    """Header plus one row per report, in the order given.

    A run that sampled no flows has an empty ``success_rate`` cell.
    """
    return _write(RUN_COLUMNS, (report_row(r) for r in reports))


def summary_to_csv(summaries: Sequence[PointSummary]) -> str:
    return _write(
        SUMMARY_COLUMNS,
        (
            [
                s.scheme.value,
                str(s.n_nodes),
                str(s.replicates),
                format_number(s.success_mean),
                format_number(s.success_stdev),
                format_number(s.messages_mean),
                format_number(s.messages_stdev),
            ]
            for s in summaries
        ),
    )


def success_series(summaries: Sequence[PointSummary]) -> str:
    """Success rate against node count, one row per point with a defined rate."""
    return _write(
        SERIES_COLUMNS,
        (
            [s.scheme.value, str(s.n_nodes), format_number(s.success_mean)]
            for s in summaries
            if s.success_mean is not None
        ),
    )


def messages_series(summaries: Sequence[PointSummary]) -> str:
    """Total messages against node count."""
    return _write(
        SERIES_COLUMNS,
        ([s.scheme.value, str(s.n_nodes), format_number(s.messages_mean)] for s in summaries),
    )


def calibration_rows(summaries: Sequence[PointSummary]) -> list[list[str]]:
    rows: list[list[str]] = []
    for s in summaries:
        success_ref = REFERENCE_SUCCESS_RATE[s.scheme].get(s.n_nodes)
        if success_ref is not None and s.success_mean is not None:
            within = abs(s.success_mean - success_ref) <= SUCCESS_TOLERANCE_POINTS
            rows.append(
                [
                    s.scheme.value,
                    str(s.n_nodes),
                    "success_rate",
                    format_number(s.success_mean),
                    format_number(success_ref),
                    format_number(SUCCESS_TOLERANCE_POINTS),
                    "yes" if within else "no",
                ]
            )
        messages_ref = REFERENCE_MESSAGES[s.scheme].get(s.n_nodes)
        if messages_ref is not None:
            tolerance = MESSAGES_TOLERANCE_RATIO * messages_ref
            within = abs(s.messages_mean - messages_ref) <= tolerance
            rows.append(
                [
                    s.scheme.value,
                    str(s.n_nodes),
                    "total_messages",
                    format_number(s.messages_mean),
                    format_number(messages_ref),
                    format_number(tolerance),
                    "yes" if within else "no",
                ]
            )
    return rows


def calibration_to_csv(summaries: Sequence[PointSummary]) -> str:
    """Measured means next to the reference curves, for points that have a reference."""
    return _write(CALIBRATION_COLUMNS, calibration_rows(summaries))
