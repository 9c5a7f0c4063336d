"""Abstract radio model: link classes, distance-based delivery and admission control.

Stochasticity enters only through Bernoulli draws on the caller's stream; the
probability itself is a closed-form function of distance.
"""

import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Optional

import numpy as np

from uavchain.sim.entities import EntityState, Role, distance_between

if TYPE_CHECKING:
    from uavchain.core.config import SimConfig
    from uavchain.sim.routing import Packet


class LinkKind(str, Enum):
    N2D = "n2d"
    N2B = "n2b"
    D2D = "d2d"
    D2B = "d2b"


_KIND_BY_ROLES: dict[frozenset[Role], LinkKind] = {
    frozenset({Role.MOBILE_NODE, Role.UAV}): LinkKind.N2D,
    frozenset({Role.MOBILE_NODE, Role.BASE_STATION}): LinkKind.N2B,
    frozenset({Role.UAV}): LinkKind.D2D,
    frozenset({Role.UAV, Role.BASE_STATION}): LinkKind.D2B,
}


def link_kind(a: Role, b: Role) -> LinkKind:
    """Classify a link from its endpoint roles."""
    kind = _KIND_BY_ROLES.get(frozenset({a, b}))
    if kind is None:
        raise ValueError(f"no link class between {a.value} and {b.value}")
    return kind


@dataclass(frozen=True)
class LinkBudget:
    kind: LinkKind
    max_range_m: float
    base_success: float
    path_loss_exponent: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.base_success <= 1.0:
            raise ValueError(f"base_success must be in [0, 1], got {self.base_success}")
        if self.max_range_m <= 0:
            raise ValueError(f"max_range_m must be > 0, got {self.max_range_m}")

    def probability_at(self, distance_m: float) -> float:
        if distance_m >= self.max_range_m:
            return 0.0
        falloff = 1.0 - (distance_m / self.max_range_m) ** self.path_loss_exponent
        return self.base_success * min(max(falloff, 0.0), 1.0)

    def usable_range(self, min_quality: float = 0.0) -> float:
        """Distance at which the success probability falls to ``min_quality``."""
        if min_quality <= 0.0:
            return self.max_range_m
        if self.base_success <= min_quality:
            return 0.0
        return self.max_range_m * (1.0 - min_quality / self.base_success) ** (
            1.0 / self.path_loss_exponent
        )


def link_success_probability(src: EntityState, dst: EntityState, budget: LinkBudget) -> float:
    """``base * clamp(1 - (d / max_range) ** exponent, 0, 1)`` on 3-D distance, 0 beyond range."""
    if src.id == dst.id:
        raise ValueError(f"link endpoints must differ, got {src.id} twice")
    return budget.probability_at(distance_between(src, dst))


def bs_admission(offered_load_pps: float, capacity_pps: float, rng: np.random.Generator) -> bool:
    """Admit one packet at a congested relay.

    Drop probability is ``max(0, (offered - capacity) / offered)``; returns True on accept.
    """
    if capacity_pps <= 0:
        raise ValueError(f"capacity_pps must be > 0, got {capacity_pps}")
    if offered_load_pps <= capacity_pps:
        return True
    drop = (offered_load_pps - capacity_pps) / offered_load_pps
    return bool(rng.random() >= drop)


def base_success_for_power(
    tx_power_w: float, reference_power_w: float, outage_at_reference: float
) -> float:
    """Map a transmit power to a link's best-case success probability."""
    outage = outage_at_reference * math.sqrt(reference_power_w / tx_power_w)
    return min(max(1.0 - outage, 0.0), 1.0)


def budgets_from_config(config: "SimConfig") -> dict[LinkKind, LinkBudget]:
    """Build the four link budgets, deriving unset ``base_success`` from TX power."""
    weaker_power = {
        LinkKind.N2D: min(config.tx_power_node_w, config.tx_power_uav_w),
        LinkKind.N2B: config.tx_power_node_w,
        LinkKind.D2D: config.tx_power_uav_w,
        LinkKind.D2B: config.tx_power_uav_w,
    }
    budgets: dict[LinkKind, LinkBudget] = {}
    for kind in LinkKind:
        settings = config.links[kind.value]
        base = settings.base_success
        if base is None:
            base = base_success_for_power(
                weaker_power[kind], config.reference_tx_power_w, config.outage_at_reference_power
            )
        budgets[kind] = LinkBudget(
            kind=kind,
            max_range_m=settings.max_range_m,
            base_success=base,
            path_loss_exponent=settings.path_loss_exponent,
        )
    return budgets


@dataclass
class Channel:
    """Per-run radio state: budgets, relay capacities and the transmission counter.

    ``offered_load`` holds each relay's load in packets per second. For relays listed
    in ``shared_relays`` that load is scaled by the fraction of flows so far
    (``flows_seen``) that reached the relay, the arriving flow included.

    Node uplinks into a relay listed in ``contenders`` also collide with probability
    ``contention_per_node`` times the number of nodes contending for it.
    """

    budgets: Mapping[LinkKind, LinkBudget]
    min_link_quality: float = 0.0
    capacities: dict[str, float] = field(default_factory=dict)
    offered_load: dict[str, float] = field(default_factory=dict)
    shared_relays: frozenset[str] = frozenset()
    arrivals: dict[str, int] = field(default_factory=dict)
    contention_per_node: float = 0.0
    contenders: dict[str, int] = field(default_factory=dict)
    flows_seen: int = 0
    transmissions: int = 0

    def budget_for(self, src: EntityState, dst: EntityState) -> LinkBudget:
        return self.budgets[link_kind(src.role, dst.role)]

    def usable_range(self, kind: LinkKind) -> float:
        return self.budgets[kind].usable_range(self.min_link_quality)

    def probability(self, src: EntityState, dst: EntityState) -> float:
        return link_success_probability(src, dst, self.budget_for(src, dst))

    def transmit(
        self,
        packet: "Packet",
        src: EntityState,
        dst: EntityState,
        rng: np.random.Generator,
        budget: Optional[LinkBudget] = None,
    ) -> bool:
        """Send ``packet`` over one hop. Counts exactly one transmission either way.

        On delivery the receiver is appended to the packet's hop trace.
        """
        expected = link_kind(src.role, dst.role)
        if budget is None:
            budget = self.budgets[expected]
        elif budget.kind is not expected:
            raise ValueError(f"{budget.kind.value} budget used on a {expected.value} link")

        self.transmissions += 1
        p = link_success_probability(src, dst, budget)
        delivered = bool(rng.random() < p)
        if delivered:
            packet.hop_trace.append(dst.id)
        return delivered

    def admit(self, relay_id: str, rng: np.random.Generator, uplink: bool = False) -> bool:
        """Admission at a capacity-limited relay; relays without a capacity always accept.

        With ``uplink`` set the packet first survives random-access contention.
        """
        self.arrivals[relay_id] = self.arrivals.get(relay_id, 0) + 1
        if uplink and self.collides(relay_id, rng):
            return False
        capacity = self.capacities.get(relay_id)
        if capacity is None:
            return True
        return bs_admission(self.load_at(relay_id), capacity, rng)

    def collides(self, relay_id: str, rng: np.random.Generator) -> bool:
        chance = min(1.0, self.contention_per_node * self.contenders.get(relay_id, 0))
        if chance <= 0.0:
            return False
        return bool(rng.random() < chance)

    def load_at(self, relay_id: str) -> float:
        load = self.offered_load.get(relay_id, 0.0)
        if relay_id in self.shared_relays and self.flows_seen > 0:
            load *= min(1.0, self.arrivals.get(relay_id, 0) / self.flows_seen)
        return load
