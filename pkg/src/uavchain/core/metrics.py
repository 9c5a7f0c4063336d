"""Per-run counters, derived metrics and multi-seed aggregation."""

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from uavchain.core.config import Scheme, SimConfig
from uavchain.sim.routing import Outcome, RouteOutcome


class UndefinedMetricError(ValueError):
    """A derived metric has no value for this report (e.g. no flows were sampled)."""


@dataclass(frozen=True)
class MetricsSnapshot:
    """Cumulative counters at one instant of simulated time."""

    time_s: float
    flows_total: int
    delivered_authentic: int
    delivered_compromised: int
    dropped: int
    data_transmissions: int
    control_messages: int
    consensus_messages: int


@dataclass(frozen=True)
class MetricsReport:
    config_echo: SimConfig
    flows_total: int = 0
    delivered_authentic: int = 0
    delivered_compromised: int = 0
    dropped: int = 0
    data_transmissions: int = 0
    control_messages: int = 0
    consensus_messages: int = 0
    timeline: tuple[MetricsSnapshot, ...] = ()

    def __post_init__(self) -> None:
        counts = (
            self.flows_total,
            self.delivered_authentic,
            self.delivered_compromised,
            self.dropped,
            self.data_transmissions,
            self.control_messages,
            self.consensus_messages,
        )
        if any(c < 0 for c in counts):
            raise ValueError("report counters must be >= 0")
        outcomes = self.delivered_authentic + self.delivered_compromised + self.dropped
        if outcomes != self.flows_total:
            raise ValueError(f"{outcomes} terminal outcomes for {self.flows_total} flows")

    @property
    def scheme(self) -> Scheme:
        return self.config_echo.scheme

    @property
    def n_nodes(self) -> int:
        return self.config_echo.n_nodes

    @property
    def seed(self) -> int:
        return self.config_echo.seed


@dataclass
class MetricsAccumulator:
    """Mutable counters owned by a single run."""

    flows_total: int = 0
    delivered_authentic: int = 0
    delivered_compromised: int = 0
    dropped: int = 0
    data_transmissions: int = 0
    control_messages: int = 0
    consensus_messages: int = 0
    timeline: list[MetricsSnapshot] = field(default_factory=list)

    def record_route(self, route: RouteOutcome) -> None:
        self.flows_total += 1
        if route.outcome is Outcome.DELIVERED_AUTHENTIC:
            self.delivered_authentic += 1
        elif route.outcome is Outcome.DELIVERED_COMPROMISED:
            self.delivered_compromised += 1
        elif route.outcome is Outcome.DROPPED:
            self.dropped += 1
        else:
            raise ValueError(f"route finished without a terminal outcome: {route.outcome.value}")
        self.data_transmissions += route.transmissions
        self.control_messages += route.control_messages

    def record_control(self, messages: int) -> None:
        """Count control traffic that belongs to no single flow."""
        if messages < 0:
            raise ValueError(f"messages must be >= 0, got {messages}")
        self.control_messages += messages

    def snapshot(self, time_s: float) -> MetricsSnapshot:
        snap = MetricsSnapshot(
            time_s=time_s,
            flows_total=self.flows_total,
            delivered_authentic=self.delivered_authentic,
            delivered_compromised=self.delivered_compromised,
            dropped=self.dropped,
            data_transmissions=self.data_transmissions,
            control_messages=self.control_messages,
            consensus_messages=self.consensus_messages,
        )
        self.timeline.append(snap)
        return snap

    def report(self, config: SimConfig) -> MetricsReport:
        return MetricsReport(
            config_echo=config,
            flows_total=self.flows_total,
            delivered_authentic=self.delivered_authentic,
            delivered_compromised=self.delivered_compromised,
            dropped=self.dropped,
            data_transmissions=self.data_transmissions,
            control_messages=self.control_messages,
            consensus_messages=self.consensus_messages,
            timeline=tuple(self.timeline),
        )


def delivery_success_rate(report: MetricsReport) -> float:
    """Percentage of sampled flows delivered authentically.

    Raises:
        UndefinedMetricError: the run sampled no flows
    """
    if report.flows_total == 0:
        raise UndefinedMetricError(
            f"success rate undefined: {report.scheme.value} with {report.n_nodes} nodes "
            "sampled no flows"
        )
    return 100.0 * report.delivered_authentic / report.flows_total


def total_messages(report: MetricsReport) -> int:
    return report.data_transmissions + report.control_messages + report.consensus_messages


@dataclass(frozen=True)
class PointSummary:
    """Mean and sample standard deviation over the seeds of one (scheme, n_nodes) point."""

    scheme: Scheme
    n_nodes: int
    replicates: int
    success_mean: Optional[float]
    success_stdev: Optional[float]
    messages_mean: float
    messages_stdev: float


def _mean_stdev(values: Sequence[float]) -> tuple[float, float]:
    data = np.asarray(values, dtype=float)
    stdev = float(np.std(data, ddof=1)) if data.size > 1 else 0.0
    return float(np.mean(data)), stdev


def summarize(reports: Iterable[MetricsReport]) -> list[PointSummary]:
    """Group reports by (scheme, n_nodes), keeping first-seen order.

    Seeds with an undefined success rate are left out of the success statistics;
    a point where every seed is undefined gets None.
    """
    groups: dict[tuple[Scheme, int], list[MetricsReport]] = {}
    for report in reports:
        groups.setdefault((report.scheme, report.n_nodes), []).append(report)

    summaries: list[PointSummary] = []
    for (scheme, n_nodes), group in groups.items():
        rates = [delivery_success_rate(r) for r in group if r.flows_total > 0]
        success_mean: Optional[float] = None
        success_stdev: Optional[float] = None
        if rates:
            success_mean, success_stdev = _mean_stdev(rates)
        messages_mean, messages_stdev = _mean_stdev([total_messages(r) for r in group])
        summaries.append(
            PointSummary(
                scheme=scheme,
                n_nodes=n_nodes,
                replicates=len(group),
                success_mean=success_mean,
                success_stdev=success_stdev,
                messages_mean=messages_mean,
                messages_stdev=messages_stdev,
            )
        )
    return summaries
