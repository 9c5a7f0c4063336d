"""Concurrent sweep execution over (scheme, node count, seed) combinations."""

import asyncio
import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from datetime import datetime
from typing import Literal, Optional

from uavchain.core.config import ConfigError, Scheme, SimConfig
from uavchain.core.engine import run
from uavchain.core.metrics import MetricsReport

logger = logging.getLogger(__name__)

DEFAULT_NODE_COUNTS = tuple(range(10, 101, 10))


class SweepSpecError(ValueError):
    """The sweep definition itself is invalid."""


@dataclass(frozen=True)
class SweepSpec:
    """Every (scheme, n_nodes, seed) combination to run, in output order."""

    node_counts: tuple[int, ...]
    schemes: tuple[Scheme, ...]
    seeds: tuple[int, ...]
    base_config: SimConfig

    def __post_init__(self) -> None:
        if not self.node_counts:
            raise SweepSpecError("node_counts must not be empty")
        if not self.schemes:
            raise SweepSpecError("schemes must not be empty")
        if not self.seeds:
            raise SweepSpecError("seeds must not be empty")
        if any(b <= a for a, b in zip(self.node_counts, self.node_counts[1:])):
            raise SweepSpecError(f"node_counts must be strictly increasing: {self.node_counts}")
        if len(set(self.schemes)) != len(self.schemes):
            raise SweepSpecError("schemes must not repeat")

    @classmethod
    def build(
        cls,
        base_config: SimConfig,
        node_counts: Optional[Sequence[int]] = None,
        schemes: Optional[Sequence[Scheme]] = None,
        replicate: int = 1,
    ) -> "SweepSpec":
        """Seeds are ``base_config.seed, seed + 1, ...`` for ``replicate`` replicates."""
        if replicate < 1:
            raise SweepSpecError(f"replicate must be >= 1, got {replicate}")
        return cls(
            node_counts=tuple(node_counts) if node_counts else DEFAULT_NODE_COUNTS,
            schemes=tuple(schemes) if schemes else tuple(Scheme),
            seeds=tuple(base_config.seed + k for k in range(replicate)),
            base_config=base_config,
        )

    def configs(self) -> list[SimConfig]:
        """Expand and validate every combination before anything runs.

        Raises:
            ConfigValidationError: a combination breaks a config invariant
        """
        return [
            self.base_config.with_overrides(scheme=scheme, n_nodes=n, seed=seed)
            for scheme in self.schemes
            for n in self.node_counts
            for seed in self.seeds
        ]


@dataclass
class RunResult:
    """Result of one simulation inside a sweep."""

    config: SimConfig
    report: Optional[MetricsReport] = None
    error: str = ""
    status: Literal["running", "done", "cancelled", "failed"] = "running"
    start_time: datetime = field(default_factory=datetime.now)
    end_time: Optional[datetime] = None

    @property
    def duration(self) -> float:
        """Wall-clock duration in seconds."""
        end = self.end_time or datetime.now()
        return (end - self.start_time).total_seconds()

    @property
    def success(self) -> bool:
        return self.status == "done" and self.report is not None


class SweepRunner:
    """Runs simulations in worker threads, at most ``workers`` at a time.

    Results come back in the order the configs were given, whatever order they
    finish in.
    """

    def __init__(self, workers: int = 1) -> None:
        if workers < 1:
            raise SweepSpecError(f"workers must be >= 1, got {workers}")
        self.workers = workers

    async def run_one(
        self,
        config: SimConfig,
        semaphore: asyncio.Semaphore,
        callback: Optional[Callable[[RunResult], None]] = None,
    ) -> RunResult:
        async with semaphore:
            result = RunResult(config=config)
            try:
                result.report = await asyncio.to_thread(run, config)
                result.status = "done"
            except asyncio.CancelledError:
                result.status = "cancelled"
                raise
            except Exception as e:
                result.status = "failed"
                result.error = f"{type(e).__name__}: {e}"
                logger.exception(
                    "run failed: %s n=%d seed=%d", config.scheme.value, config.n_nodes, config.seed
                )
            finally:
                result.end_time = datetime.now()
                if callback:
                    callback(result)
        return result

    async def run_configs(
        self,
        configs: Sequence[SimConfig],
        callback: Optional[Callable[[RunResult], None]] = None,
    ) -> list[RunResult]:
        semaphore = asyncio.Semaphore(self.workers)
        return list(
            await asyncio.gather(*(self.run_one(c, semaphore, callback) for c in configs))
        )

    async def run_sweep(
        self,
        spec: SweepSpec,
        callback: Optional[Callable[[RunResult], None]] = None,
    ) -> list[RunResult]:
        """Validate every combination, then run them all.

        Raises:
            SweepSpecError: a combination is invalid; nothing was run
        """
        try:
            configs = spec.configs()
        except ConfigError as e:
            raise SweepSpecError(f"invalid sweep combination: {e}") from e
        logger.info("sweep: %d runs on %d workers", len(configs), self.workers)
        return await self.run_configs(configs, callback)
