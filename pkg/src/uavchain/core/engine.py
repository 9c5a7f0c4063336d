"""Discrete-event engine: clock, event queue, random streams and scenario orchestration.

Time is kept in integer microseconds. Events at the same instant run in the order
they were scheduled. A run is a pure function of its :class:`SimConfig`.
"""

import hashlib
import heapq
import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from uavchain.core.config import Scheme, SimConfig
from uavchain.core.metrics import MetricsAccumulator, MetricsReport
from uavchain.sim import mobility
from uavchain.sim.channel import Channel, LinkKind, budgets_from_config
from uavchain.sim.entities import EntityState, Role, bs_id, distance, node_id, uav_id
from uavchain.sim.ledger import DroneContract, Ledger
from uavchain.sim.routing import (
    Outcome,
    Packet,
    nearest_uav,
    relay_permitted,
    route_n2n_bs,
    route_n2n_uav,
)

logger = logging.getLogger(__name__)

US_PER_S = 1_000_000
STREAM_LABELS = (
    "placement",
    "rogue",
    "credentials",
    "traffic",
    "mobility",
    "reposition",
    "routing",
)


def to_us(seconds: float) -> int:
    return int(round(seconds * US_PER_S))


def rng_stream(seed: int, stream_label: str) -> np.random.Generator:
    """Independent, reproducible generator for ``(seed, stream_label)``.

    The label is folded into the seed sequence through the first 8 bytes of its
    SHA-256 digest, so streams stay stable across processes and Python versions.
    """
    label_key = int.from_bytes(hashlib.sha256(stream_label.encode("utf-8")).digest()[:8], "big")
    return np.random.default_rng(np.random.SeedSequence([seed, label_key]))


class EventKind(str, Enum):
    PACKET_GENERATION = "PacketGeneration"
    MOBILITY_TICK = "MobilityTick"
    UAV_REPOSITION = "UavReposition"
    CONSENSUS_ROUND = "ConsensusRound"
    METRICS_SNAPSHOT = "MetricsSnapshot"


@dataclass(frozen=True)
class Event:
    time_us: int
    kind: EventKind
    subject: str
    seq: int

    @property
    def time_s(self) -> float:
        return self.time_us / US_PER_S


class EventQueue:
    """Min-heap of events keyed by (time, insertion sequence)."""

    def __init__(self) -> None:
        self._heap: list[tuple[int, int, Event]] = []
        self._seq = 0
        self.now_us = 0

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, time_us: int, kind: EventKind, subject: str = "") -> Event:
        if time_us < self.now_us:
            raise ValueError(
                f"cannot schedule {kind.value} at {time_us} us, clock is {self.now_us}"
            )
        event = Event(time_us=time_us, kind=kind, subject=subject, seq=self._seq)
        self._seq += 1
        heapq.heappush(self._heap, (time_us, event.seq, event))
        return event

    def peek_time(self) -> Optional[int]:
        return self._heap[0][0] if self._heap else None

    def pop(self) -> Event:
        _, _, event = heapq.heappop(self._heap)
        self.now_us = event.time_us
        return event


def sample_flow_count(config: SimConfig) -> int:
    """Size of the accounting window, 0 below two nodes.

    A base count plus one term per node and one per node pair, rounded half up.
    """
    n = config.n_nodes
    if n < 2:
        return 0
    scaled = (
        config.accounting_base_flows
        + config.accounting_flows_per_node * n
        + config.accounting_flows_per_pair * n * (n - 1) / 2
    )
    return int(math.floor(scaled + 0.5))


class Simulation:
    """One scenario run. Build, then call :meth:`run` once."""

    def __init__(self, config: SimConfig) -> None:
        self.config = config
        self.area = (config.area_width_m, config.area_height_m)
        self.duration_us = to_us(config.duration_s)
        self.queue = EventQueue()
        self.metrics = MetricsAccumulator()
        self.streams = {label: rng_stream(config.seed, label) for label in STREAM_LABELS}
        self.channel = Channel(
            budgets=budgets_from_config(config),
            min_link_quality=config.min_link_quality,
            contention_per_node=config.bs_contention_per_node,
        )
        self.ledger: Optional[Ledger] = None
        self.nodes: dict[str, EntityState] = {}
        self.uavs: dict[str, EntityState] = {}
        self.base_stations: list[EntityState] = []
        self.start_us: dict[str, int] = {}
        self.attachments: dict[str, Optional[str]] = {}
        self.service_areas: dict[str, tuple[float, float, float, float]] = {}
        self.packets: list[Packet] = []
        self._flows_planned = 0
        self._done = False
        self._handlers: dict[EventKind, Callable[[Event], None]] = {
            EventKind.PACKET_GENERATION: self._on_packet,
            EventKind.MOBILITY_TICK: self._on_mobility_tick,
            EventKind.UAV_REPOSITION: self._on_reposition,
            EventKind.CONSENSUS_ROUND: self._on_consensus_round,
            EventKind.METRICS_SNAPSHOT: self._on_snapshot,
        }
        self._build()

    # --- setup ---

    def _build(self) -> None:
        c = self.config
        placement = self.streams["placement"]
        for i, (x, y) in enumerate(mobility.uniform_placement(c.n_nodes, self.area, placement)):
            nid = node_id(i)
            self.nodes[nid] = EntityState(nid, Role.MOBILE_NODE, (x, y, 0.0))

        uses_uavs = c.scheme.uses_uavs
        if uses_uavs:
            self._build_fleet(mobility.uniform_placement(c.n_uavs, self.area, placement))

        for i in range(c.n_bs):
            x = c.area_width_m * (i + 1) / (c.n_bs + 1)
            self.base_stations.append(
                EntityState(bs_id(i), Role.BASE_STATION, (x, c.area_height_m / 2.0, c.bs_height_m))
            )
        for bs in self.base_stations:
            self.channel.capacities[bs.id] = c.bs_capacity_pps
        if uses_uavs:
            self.channel.shared_relays = frozenset(bs.id for bs in self.base_stations)
            for uid in self.uavs:
                self.channel.capacities[uid] = c.uav_capacity_pps

        self._plan_traffic()
        self._refresh_attachments()
        self._schedule_periodic()

        logger.info(
            "built %s scenario: %d nodes, %d uavs (%d rogue), %d flows planned",
            c.scheme.value,
            len(self.nodes),
            len(self.uavs),
            sum(u.rogue for u in self.uavs.values()),
            self._flows_planned,
        )

    def _build_fleet(self, positions: list[tuple[float, float]]) -> None:
        c = self.config
        n_rogue = int(math.floor(c.rogue_uav_fraction * c.n_uavs + 0.5))
        rogue_idx: set[int] = set()
        if n_rogue:
            chosen = self.streams["rogue"].choice(c.n_uavs, size=n_rogue, replace=False)
            rogue_idx = {int(i) for i in chosen}

        credentials = self.streams["credentials"]
        providers = [f"P{i}" for i in range(c.n_providers)]
        for i, (x, y) in enumerate(positions):
            uid = uav_id(i)
            token = credentials.bytes(8).hex()
            rogue = i in rogue_idx
            provider = "" if rogue else providers[i % c.n_providers]
            credential = f"forged:{uid}:{token}" if rogue else f"{provider}:{uid}:{token}"
            self.uavs[uid] = EntityState(
                uid,
                Role.UAV,
                (x, y, c.uav_altitude_m),
                rogue=rogue,
                provider=provider,
                credential=credential,
            )

        if c.scheme is not Scheme.N2N_UAV_BC:
            return

        self.ledger = Ledger.create(providers, validators=c.validators, faulty=c.faulty_validators)
        operators = [u for u in self.uavs.values() if not u.rogue]
        records = self.ledger.register_fleet([(u.id, u.provider, u.credential) for u in operators])
        if records:
            contracts = [
                DroneContract(
                    provider=u.provider,
                    drone_id=u.id,
                    service_area=(0.0, 0.0, c.area_width_m, c.area_height_m),
                    valid_from_s=0.0,
                    valid_to_s=c.contract_duration_s,
                    resource_commitment={
                        "relay_capacity_pps": c.uav_capacity_pps,
                        "tx_power_w": c.tx_power_uav_w,
                    },
                )
                for u in operators
            ]
            if self.ledger.sign_fleet_contracts(contracts, area=self.area):
                for contract in contracts:
                    self.service_areas[contract.drone_id] = contract.service_area
        self.metrics.consensus_messages = self.ledger.consensus_messages

    def _plan_traffic(self) -> None:
        c = self.config
        traffic = self.streams["traffic"]
        spread_us = to_us(c.cbr_start_spread_s)
        for nid in sorted(self.nodes):
            self.start_us[nid] = int(traffic.integers(0, spread_us + 1))

        self._flows_planned = sample_flow_count(c)
        if self._flows_planned == 0:
            return
        first_start = min(self.start_us.values())
        high = max(self.duration_us, first_start + 1)
        times = np.sort(traffic.integers(first_start, high, size=self._flows_planned))
        for k, t in enumerate(times):
            self.queue.schedule(int(t), EventKind.PACKET_GENERATION, f"F{k:05d}")

    def _schedule_periodic(self) -> None:
        c = self.config
        self._schedule_next(EventKind.MOBILITY_TICK, c.mobility_tick_s)
        if c.scheme.uses_uavs and self.uavs:
            self._schedule_next(EventKind.UAV_REPOSITION, c.reposition_interval_s)
        if self.ledger is not None:
            self._schedule_next(EventKind.CONSENSUS_ROUND, c.consensus_interval_s)
        self._schedule_next(EventKind.METRICS_SNAPSHOT, c.metrics_snapshot_interval_s)

    def _schedule_next(self, kind: EventKind, interval_s: float) -> None:
        at = self.queue.now_us + to_us(interval_s)
        if at <= self.duration_us:
            self.queue.schedule(at, kind)

    # --- helpers ---

    def _started(self) -> list[str]:
        now = self.queue.now_us
        return [nid for nid in sorted(self.nodes) if self.start_us[nid] <= now]

    def _eligible_relays(self) -> list[EntityState]:
        """UAVs a node may attach to now; with a ledger only contracted, in-area ones."""
        uavs = [self.uavs[uid] for uid in sorted(self.uavs)]
        ledger = self.ledger
        if ledger is None:
            return uavs
        now_s = self.queue.now_us / US_PER_S
        return [u for u in uavs if relay_permitted(ledger, u, now_s)[0]]

    def _refresh_attachments(self) -> None:
        if not self.uavs:
            self.attachments = {nid: None for nid in self.nodes}
            return
        relays = self._eligible_relays()
        reach = self.channel.usable_range(LinkKind.N2D)
        self.attachments = {
            nid: nearest_uav(node.position, relays, reach) for nid, node in self.nodes.items()
        }

    def _patrols(self, uav: EntityState) -> bool:
        c = self.config
        return uav.rogue and not c.rogue_follow_density and c.rogue_speed_mps > 0

    def _nearest_bs(self, entity: EntityState) -> EntityState:
        return min(
            self.base_stations, key=lambda bs: (distance(entity.position, bs.position), bs.id)
        )

    def _update_offered_load(self, started: list[str]) -> None:
        rate = self.config.cbr_rate_pps
        contenders = {bs.id: 0 for bs in self.base_stations}
        for nid in started:
            if self.attachments.get(nid) is None:
                contenders[self._nearest_bs(self.nodes[nid]).id] += 1
        for bs in self.base_stations:
            self.channel.offered_load[bs.id] = len(started) * rate
            self.channel.contenders[bs.id] = contenders[bs.id]
        if not self.uavs:
            return
        per_uav: dict[str, int] = {uid: 0 for uid in self.uavs}
        for nid in started:
            attached = self.attachments.get(nid)
            if attached is not None:
                per_uav[attached] += 1
        replay = self._replay_load(len(started))
        for uid, count in per_uav.items():
            extra = 0.0 if self.uavs[uid].rogue else replay
            self.channel.offered_load[uid] = count * rate + extra

    def _replay_load(self, active: int) -> float:
        """Load each honest relay takes on from rogues replaying what they overhear.

        A rogue replays ``rogue_replay_fraction`` of the active traffic at the reference
        density and proportionally more or less around it; the replays spread evenly
        over the honest fleet. Authenticated relays drop replays unread.
        """
        c = self.config
        rogues = sum(u.rogue for u in self.uavs.values())
        honest = len(self.uavs) - rogues
        if self.ledger is not None or rogues == 0 or honest == 0:
            return 0.0
        density = active / c.rogue_replay_reference_nodes
        return rogues * c.rogue_replay_fraction * density * active * c.cbr_rate_pps / honest

    # --- handlers ---

    def _on_packet(self, event: Event) -> None:
        c = self.config
        traffic = self.streams["traffic"]
        started = self._started()
        src_id = started[int(traffic.integers(0, len(started)))]
        ids = sorted(self.nodes)
        j = int(traffic.integers(0, len(ids) - 1))
        dst_id = ids[j + 1 if j >= ids.index(src_id) else j]
        src, dst = self.nodes[src_id], self.nodes[dst_id]
        packet = Packet(
            id=event.subject,
            src=src.id,
            dst=dst.id,
            size_bytes=c.cbr_packet_bytes,
            created_at_s=event.time_s,
        )
        self.packets.append(packet)
        self._update_offered_load(started)
        self.channel.flows_seen += 1

        rng = self.streams["routing"]
        bs = self._nearest_bs(src)
        if c.scheme is Scheme.N2N_BS:
            route = route_n2n_bs(packet, src, bs, dst, self.channel, rng)
        else:
            route = route_n2n_uav(
                packet,
                src,
                dst,
                [self.uavs[uid] for uid in sorted(self.uavs)],
                bs,
                self.ledger,
                self.channel,
                rng,
                fanet_forwarding=c.fanet_forwarding,
                bs_fallback=c.bs_fallback,
            )
        self.metrics.record_route(route)

        if self.ledger is not None and route.outcome is Outcome.DELIVERED_AUTHENTIC:
            relays = [hop for hop in packet.hop_trace if hop in self.uavs]
            self.ledger.record_delivery(packet.id, src.id, dst.id, relays, event.time_s)

    def _on_mobility_tick(self, event: Event) -> None:
        c = self.config
        rng = self.streams["mobility"]
        speeds = (c.node_speed_min_mps, c.node_speed_max_mps)
        for nid in sorted(self.nodes):
            self.nodes[nid] = mobility.waypoint_step(
                self.nodes[nid], c.mobility_tick_s, rng, self.area, speeds
            )
        for uid in sorted(self.uavs):
            uav = self.uavs[uid]
            if self._patrols(uav):
                self.uavs[uid] = mobility.patrol_step(
                    uav, c.mobility_tick_s, self.streams["rogue"], self.area, c.rogue_speed_mps
                )
            else:
                self.uavs[uid] = mobility.fly_toward(uav, c.mobility_tick_s)
        self._refresh_attachments()
        self._schedule_next(EventKind.MOBILITY_TICK, c.mobility_tick_s)

    def _on_reposition(self, event: Event) -> None:
        c = self.config
        grid = mobility.density_grid(
            [node.position for node in self.nodes.values()], c.density_cell_m, self.area
        )
        movers = [
            self.uavs[uid]
            for uid in sorted(self.uavs)
            if c.rogue_follow_density or not self.uavs[uid].rogue
        ]
        moved = mobility.reposition_uavs(
            movers,
            grid,
            self.streams["reposition"],
            self.area,
            jitter_m=c.reposition_jitter_m,
            speed_mps=c.uav_speed_mps,
            service_areas=self.service_areas,
        )
        for uav in moved:
            self.uavs[uav.id] = uav
        # every airborne UAV, rogue or not, announces its new position
        self.metrics.record_control(c.uav_beacon_messages * len(self.uavs))
        self._refresh_attachments()
        logger.debug("t=%.1fs repositioned %d uavs", event.time_s, len(moved))
        self._schedule_next(EventKind.UAV_REPOSITION, c.reposition_interval_s)

    def _on_consensus_round(self, event: Event) -> None:
        assert self.ledger is not None
        if self.ledger.revoke_expired(event.time_s):
            self._refresh_attachments()
        self.ledger.consensus_round(event.time_s)
        self.metrics.consensus_messages = self.ledger.consensus_messages
        self._schedule_next(EventKind.CONSENSUS_ROUND, self.config.consensus_interval_s)

    def _on_snapshot(self, event: Event) -> None:
        self.metrics.snapshot(event.time_s)
        self._schedule_next(EventKind.METRICS_SNAPSHOT, self.config.metrics_snapshot_interval_s)

    # --- driver ---

    def run(self) -> MetricsReport:
        """Process every event up to and including ``duration_s``."""
        if self._done:
            raise RuntimeError("a Simulation runs once; build a new one")
        self._done = True

        last = 0
        while self.queue:
            next_at = self.queue.peek_time()
            if next_at is None or next_at > self.duration_us:
                break
            event = self.queue.pop()
            assert event.time_us >= last
            last = event.time_us
            self._handlers[event.kind](event)

        pending = [p.id for p in self.packets if not p.outcome.terminal]
        if pending:
            raise RuntimeError(f"packets left pending: {pending[:5]}")

        report = self.metrics.report(self.config)
        logger.info(
            "finished %s n=%d seed=%d: %d flows, %d authentic, %d messages",
            self.config.scheme.value,
            self.config.n_nodes,
            self.config.seed,
            report.flows_total,
            report.delivered_authentic,
            report.data_transmissions + report.control_messages + report.consensus_messages,
        )
        return report


def run(config: SimConfig) -> MetricsReport:
    """Simulate ``config.duration_s`` seconds and return the run's report."""
    return Simulation(config).run()
