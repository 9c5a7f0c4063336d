"""Delivery schemes: direct via the base station and UAV relay with or without authentication.

Each routine carries one packet end to end and returns how it ended together with what
it cost. Every hop goes through :meth:`Channel.transmit`, so the channel's counter is
the source of truth for data transmissions.
"""

from collections.abc import Collection, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Protocol

import numpy as np

from uavchain.sim.channel import Channel, LinkKind
from uavchain.sim.entities import EntityState, Position, Role, distance, distance_between
from uavchain.sim.ledger import DroneContract


class Outcome(str, Enum):
    PENDING = "Pending"
    DELIVERED_AUTHENTIC = "DeliveredAuthentic"
    DELIVERED_COMPROMISED = "DeliveredCompromised"
    DROPPED = "Dropped"

    @property
    def terminal(self) -> bool:
        return self is not Outcome.PENDING


@dataclass
class Packet:
    """One sampled application flow. ``hop_trace`` grows as hops are delivered."""

    id: str
    src: str
    dst: str
    size_bytes: int
    created_at_s: float
    hop_trace: list[str] = field(default_factory=list)
    outcome: Outcome = Outcome.PENDING

    def __post_init__(self) -> None:
        if not self.hop_trace:
            self.hop_trace.append(self.src)
        elif self.hop_trace[0] != self.src:
            raise ValueError(f"{self.id}: hop trace must start at {self.src}")

    def finish(self, outcome: Outcome) -> None:
        if not outcome.terminal:
            raise ValueError(f"{self.id}: {outcome.value} is not a terminal outcome")
        if self.outcome.terminal:
            raise RuntimeError(f"{self.id}: already finished as {self.outcome.value}")
        self.outcome = outcome


@dataclass(frozen=True)
class RouteOutcome:
    outcome: Outcome
    transmissions: int
    control_messages: int = 0

    def __post_init__(self) -> None:
        if self.transmissions < 0 or self.control_messages < 0:
            raise ValueError("route counters must be >= 0")


class Authenticator(Protocol):
    """Anything that can vouch for a drone's identity and contract, at a message cost."""

    def authenticate(self, drone_id: str, credential: str) -> tuple[bool, int]: ...

    def contract_for(self, drone_id: str) -> Optional[DroneContract]: ...


def relay_permitted(ledger: Authenticator, uav: EntityState, t_s: float) -> tuple[bool, int]:
    """Check that ``uav`` may relay at ``t_s``.

    It needs an active identity matching its credential and a contract that is in
    force at ``t_s`` and covers its current position. Returns the verdict and the
    messages the identity check cost.
    """
    ok, cost = ledger.authenticate(uav.id, uav.credential)
    if not ok:
        return False, cost
    contract = ledger.contract_for(uav.id)
    x, y, _ = uav.position
    return contract is not None and contract.active_at(t_s) and contract.covers(x, y), cost


def _finish(
    packet: Packet, outcome: Outcome, channel: Channel, start: int, control: int
) -> RouteOutcome:
    packet.finish(outcome)
    return RouteOutcome(outcome, channel.transmissions - start, control)


def _down_via_bs(
    packet: Packet,
    relay: EntityState,
    bs: EntityState,
    dst: EntityState,
    channel: Channel,
    rng: np.random.Generator,
) -> bool:
    """relay -> BS -> dst with admission at the BS; True on delivery.

    A mobile node sending straight to the BS also contends for its uplink.
    """
    if not channel.transmit(packet, relay, bs, rng):
        return False
    if not channel.admit(bs.id, rng, uplink=relay.role is Role.MOBILE_NODE):
        return False
    return channel.transmit(packet, bs, dst, rng)


def route_n2n_bs(
    packet: Packet,
    src: EntityState,
    bs: EntityState,
    dst: EntityState,
    channel: Channel,
    rng: np.random.Generator,
) -> RouteOutcome:
    """Two-hop delivery src -> BS -> dst, the BS hop gated by admission control.

    Args:
        packet: Pending packet whose trace starts at ``src``
        src: Source mobile node
        bs: Base station
        dst: Destination mobile node
        channel: Run channel; its counter records every transmit call
        rng: Routing stream

    Returns:
        RouteOutcome; control messages are always 0 for this scheme
    """
    start = channel.transmissions
    delivered = _down_via_bs(packet, src, bs, dst, channel, rng)
    outcome = Outcome.DELIVERED_AUTHENTIC if delivered else Outcome.DROPPED
    return _finish(packet, outcome, channel, start, 0)


def nearest_uav(
    pos: Position,
    uavs: Sequence[EntityState],
    max_range_m: float,
    exclude: Collection[str] = (),
) -> Optional[str]:
    """Closest UAV to ``pos`` within ``max_range_m`` (3-D), lowest id on ties."""
    best: Optional[tuple[float, str]] = None
    for uav in uavs:
        if uav.id in exclude:
            continue
        d = distance(pos, uav.position)
        if d > max_range_m:
            continue
        key = (d, uav.id)
        if best is None or key < best:
            best = key
    return None if best is None else best[1]


def fanet_next_hop(
    current: str,
    dst_pos: Position,
    uavs: Sequence[EntityState],
    visited: Collection[str],
    d2d_range_m: float,
    n2d_range_m: float,
) -> Optional[str]:
    """Greedy geographic forwarding step.

    Among unvisited UAVs within D2D range of ``current`` that are strictly closer to
    the destination, picks the one closest to it (lowest id on ties). Returns None
    when the destination is already within N2D range of ``current`` or when no
    neighbor makes progress.
    """
    by_id = {uav.id: uav for uav in uavs}
    here = by_id.get(current)
    if here is None or here.role is not Role.UAV:
        raise ValueError(f"{current} is not a UAV in the candidate set")

    own_gap = distance(here.position, dst_pos)
    if own_gap <= n2d_range_m:
        return None

    best: Optional[tuple[float, str]] = None
    for uav in uavs:
        if uav.id == current or uav.id in visited:
            continue
        if distance_between(here, uav) > d2d_range_m:
            continue
        gap = distance(uav.position, dst_pos)
        if gap >= own_gap:
            continue
        key = (gap, uav.id)
        if best is None or key < best:
            best = key
    return None if best is None else best[1]


def route_n2n_uav(
    packet: Packet,
    src: EntityState,
    dst: EntityState,
    uavs: Sequence[EntityState],
    bs: EntityState,
    ledger: Optional[Authenticator],
    channel: Channel,
    rng: np.random.Generator,
    *,
    fanet_forwarding: str = "greedy",
    bs_fallback: bool = True,
) -> RouteOutcome:
    """Relay a packet through the UAV swarm.

    The packet enters at the nearest UAV, hops greedily toward the destination and
    drops to it once in N2D range. On a routing void (or with no UAV in reach) it
    falls back to the base station when ``bs_fallback`` is set.

    With a ledger every prospective UAV is authenticated first, at the ledger's
    message cost, and must hold a contract in force that covers where it flies.
    UAVs that fail are treated as unreachable for the rest of the packet's life. Without
    one, a delivery that crossed a rogue UAV is compromised.

    Args:
        packet: Pending packet whose trace starts at ``src``
        src: Source mobile node
        dst: Destination mobile node
        uavs: Every airborne UAV, rogue ones included
        bs: Base station used for fallback
        ledger: Authenticator for the blockchain scheme, None otherwise
        channel: Run channel
        rng: Routing stream
        fanet_forwarding: "greedy" for multi-hop relaying, "none" for the entry UAV only
        bs_fallback: Whether a routing void may fall back to the base station

    Returns:
        RouteOutcome with data transmissions and authentication messages
    """
    start = channel.transmissions
    n2d_range = channel.usable_range(LinkKind.N2D)
    d2d_range = channel.usable_range(LinkKind.D2D)
    by_id = {uav.id: uav for uav in uavs}
    rejected: set[str] = set()
    control = 0

    def vetted(candidate: str) -> bool:
        nonlocal control
        if ledger is None:
            return True
        ok, cost = relay_permitted(ledger, by_id[candidate], packet.created_at_s)
        control += cost
        if not ok:
            rejected.add(candidate)
        return ok

    entry: Optional[EntityState] = None
    while True:
        candidate = nearest_uav(src.position, uavs, n2d_range, exclude=rejected)
        if candidate is None:
            break
        if vetted(candidate):
            entry = by_id[candidate]
            break

    if entry is None:
        delivered = bs_fallback and _down_via_bs(packet, src, bs, dst, channel, rng)
        outcome = Outcome.DELIVERED_AUTHENTIC if delivered else Outcome.DROPPED
        return _finish(packet, outcome, channel, start, control)

    if not channel.transmit(packet, src, entry, rng) or not channel.admit(entry.id, rng):
        return _finish(packet, Outcome.DROPPED, channel, start, control)

    current = entry
    visited = {entry.id}
    crossed_rogue = entry.rogue
    while True:
        if distance_between(current, dst) <= n2d_range:
            delivered = channel.transmit(packet, current, dst, rng)
            break

        hop: Optional[str] = None
        if fanet_forwarding == "greedy":
            while True:
                hop = fanet_next_hop(
                    current.id, dst.position, uavs, visited | rejected, d2d_range, n2d_range
                )
                if hop is None or vetted(hop):
                    break

        if hop is None:
            delivered = bs_fallback and _down_via_bs(packet, current, bs, dst, channel, rng)
            break

        nxt = by_id[hop]
        if not channel.transmit(packet, current, nxt, rng):
            delivered = False
            break
        visited.add(hop)
        crossed_rogue = crossed_rogue or nxt.rogue
        current = nxt

    if not delivered:
        outcome = Outcome.DROPPED
    elif ledger is None and crossed_rogue:
        outcome = Outcome.DELIVERED_COMPROMISED
    else:
        outcome = Outcome.DELIVERED_AUTHENTIC
    return _finish(packet, outcome, channel, start, control)
