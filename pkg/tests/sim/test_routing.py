"""Tests for the three delivery schemes and FANET forwarding."""

from typing import Optional

import numpy as np
import pytest
from factories import make_bs, make_node, make_uav

from uavchain.sim.channel import Channel, LinkBudget, LinkKind
from uavchain.sim.entities import EntityState, distance
from uavchain.sim.ledger import DroneContract
from uavchain.sim.routing import (
    Outcome,
    Packet,
    RouteOutcome,
    fanet_next_hop,
    nearest_uav,
    relay_permitted,
    route_n2n_bs,
    route_n2n_uav,
)

SHORT_RANGE = 400.0


class Registry:
    """Authenticator that knows a fixed set of credentials and contracts.

    Honest UAVs get a whole-area contract for the first hour unless ``contracts``
    says otherwise; a None entry means no contract at all.
    """

    def __init__(
        self,
        uavs: list[EntityState],
        contracts: Optional[dict[str, Optional[DroneContract]]] = None,
    ) -> None:
        self.known = {u.id: u.credential for u in uavs if not u.rogue}
        self.contracts: dict[str, Optional[DroneContract]] = {
            uid: _contract(uid) for uid in self.known
        }
        self.contracts.update(contracts or {})
        self.calls: list[str] = []

    def authenticate(self, drone_id: str, credential: str) -> tuple[bool, int]:
        self.calls.append(drone_id)
        return self.known.get(drone_id) == credential, 2

    def contract_for(self, drone_id: str) -> Optional[DroneContract]:
        return self.contracts.get(drone_id)


def _contract(
    uid: str,
    area: tuple[float, float, float, float] = (0.0, 0.0, 1500.0, 1500.0),
    valid_to_s: float = 3600.0,
) -> DroneContract:
    return DroneContract("P0", uid, area, valid_from_s=0.0, valid_to_s=valid_to_s)


def _channel(base_success: float = 1.0, **extra: object) -> Channel:
    """Lossless-inside-range links: short N2D/D2D, area-wide N2B/D2B."""
    budgets = {
        kind: LinkBudget(
            kind=kind,
            max_range_m=SHORT_RANGE if kind in (LinkKind.N2D, LinkKind.D2D) else 10_000.0,
            base_success=base_success,
            path_loss_exponent=1e6,
        )
        for kind in LinkKind
    }
    return Channel(budgets=budgets, **extra)  # type: ignore[arg-type]


def _packet(src: str = "N0000", dst: str = "N0001", created_at_s: float = 0.0) -> Packet:
    return Packet(id="F00000", src=src, dst=dst, size_bytes=512, created_at_s=created_at_s)


def _line(rogue_middle: bool = False) -> list[EntityState]:
    return [
        make_uav("U000", 100.0, 0.0),
        make_uav("U001", 450.0, 0.0, rogue=rogue_middle, credential="forged:U001:x"),
        make_uav("U002", 800.0, 0.0),
    ]


def _greedy_path(
    start: str, dst_pos: tuple[float, float, float], uavs: list[EntityState]
) -> list[str]:
    """Independent greedy walk over a precomputed distance matrix."""
    ids = [u.id for u in uavs]
    pos = np.array([u.position for u in uavs])
    pair = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)
    to_dst = np.linalg.norm(pos - np.array(dst_pos), axis=1)

    cur = ids.index(start)
    path = [cur]
    while to_dst[cur] > SHORT_RANGE:
        options = [
            k
            for k in range(len(ids))
            if k not in path and pair[cur, k] <= SHORT_RANGE and to_dst[k] < to_dst[cur]
        ]
        if not options:
            break
        cur = min(options, key=lambda k: (to_dst[k], ids[k]))
        path.append(cur)
    return [ids[k] for k in path]


def test_packet_trace_starts_at_source() -> None:
    """Test the hop trace seed and its check."""
    assert _packet().hop_trace == ["N0000"]
    with pytest.raises(ValueError):
        Packet("F1", "N0000", "N0001", 512, 0.0, hop_trace=["U000"])


def test_packet_finishes_once() -> None:
    """Test that the outcome leaves Pending exactly once."""
    packet = _packet()
    with pytest.raises(ValueError):
        packet.finish(Outcome.PENDING)
    packet.finish(Outcome.DROPPED)
    with pytest.raises(RuntimeError):
        packet.finish(Outcome.DELIVERED_AUTHENTIC)


def test_route_outcome_rejects_negative() -> None:
    """Test counter bounds."""
    with pytest.raises(ValueError):
        RouteOutcome(Outcome.DROPPED, -1)


def test_n2n_bs_ideal_two_hop(perfect_channel: Channel, rng: np.random.Generator) -> None:
    """Test perfect links and an idle BS."""
    packet = _packet()
    result = route_n2n_bs(
        packet,
        make_node("N0000", 10, 10),
        make_bs(),
        make_node("N0001", 1400, 1400),
        perfect_channel,
        rng,
    )
    assert result == RouteOutcome(Outcome.DELIVERED_AUTHENTIC, 2, 0)
    assert packet.hop_trace == ["N0000", "BS0", "N0001"]
    assert packet.outcome is Outcome.DELIVERED_AUTHENTIC


def test_n2n_bs_admission_drop(rng: np.random.Generator) -> None:
    """Test that a saturated BS drops after the first hop was counted."""
    channel = _channel(capacities={"BS0": 1.0}, offered_load={"BS0": 1e15})
    result = route_n2n_bs(
        _packet(), make_node("N0000", 10, 10), make_bs(), make_node("N0001", 20, 20), channel, rng
    )
    assert result.outcome is Outcome.DROPPED
    assert result.transmissions == 1
    assert channel.transmissions == 1


def test_nearest_uav_none_in_range() -> None:
    """Test the empty answer."""
    uavs = [make_uav("U000", 1000.0, 1000.0)]
    assert nearest_uav((0.0, 0.0, 0.0), uavs, SHORT_RANGE) is None
    assert nearest_uav((0.0, 0.0, 0.0), [], SHORT_RANGE) is None


def test_nearest_uav_tie_goes_to_lower_id() -> None:
    """Test the tie rule."""
    uavs = [make_uav("U007", 100.0, 0.0), make_uav("U003", -100.0, 0.0)]
    assert nearest_uav((0.0, 0.0, 0.0), uavs, SHORT_RANGE) == "U003"


def test_nearest_uav_exclude() -> None:
    """Test that excluded UAVs are skipped."""
    uavs = [make_uav("U000", 10.0, 0.0), make_uav("U001", 200.0, 0.0)]
    assert nearest_uav((0.0, 0.0, 0.0), uavs, SHORT_RANGE, exclude={"U000"}) == "U001"


def test_nearest_uav_matches_brute_force(rng: np.random.Generator) -> None:
    """Test random instances against an exhaustive minimum."""
    for _ in range(50):
        uavs = [
            make_uav(f"U{i:03d}", float(x), float(y))
            for i, (x, y) in enumerate(rng.uniform(0, 1500, size=(20, 2)))
        ]
        pos = (float(rng.uniform(0, 1500)), float(rng.uniform(0, 1500)), 0.0)
        in_range = [u for u in uavs if distance(pos, u.position) <= SHORT_RANGE]
        expected = (
            min(in_range, key=lambda u: (distance(pos, u.position), u.id)).id if in_range else None
        )
        assert nearest_uav(pos, uavs, SHORT_RANGE) == expected


def test_fanet_next_hop_destination_in_reach() -> None:
    """Test that a UAV already over the destination hands off down."""
    uavs = _line()
    assert fanet_next_hop("U002", (900.0, 0.0, 0.0), uavs, set(), SHORT_RANGE, SHORT_RANGE) is None


def test_fanet_next_hop_forced_move() -> None:
    """Test that the only neighbor making progress is chosen."""
    uavs = _line()
    assert (
        fanet_next_hop("U000", (1200.0, 0.0, 0.0), uavs, {"U000"}, SHORT_RANGE, SHORT_RANGE)
        == "U001"
    )


def test_fanet_next_hop_void() -> None:
    """Test that no progress means no hop."""
    uavs = _line()
    dst = (1200.0, 0.0, 0.0)
    assert fanet_next_hop("U000", dst, uavs, {"U000", "U001"}, SHORT_RANGE, SHORT_RANGE) is None


def test_fanet_next_hop_requires_uav() -> None:
    """Test the precondition on the current hop."""
    with pytest.raises(ValueError):
        fanet_next_hop("N0000", (0.0, 0.0, 0.0), _line(), set(), SHORT_RANGE, SHORT_RANGE)


def test_fanet_path_matches_greedy_recomputation(rng: np.random.Generator) -> None:
    """Test random 20-UAV topologies against an independent greedy walk."""
    for _ in range(50):
        uavs = [
            make_uav(f"U{i:03d}", float(x), float(y))
            for i, (x, y) in enumerate(rng.uniform(0, 1500, size=(20, 2)))
        ]
        dst_pos = (float(rng.uniform(0, 1500)), float(rng.uniform(0, 1500)), 0.0)
        start = uavs[int(rng.integers(20))].id

        path = [start]
        while True:
            hop = fanet_next_hop(path[-1], dst_pos, uavs, set(path), SHORT_RANGE, SHORT_RANGE)
            if hop is None:
                break
            path.append(hop)
        assert path == _greedy_path(start, dst_pos, uavs)


def test_uav_relay_single_hop_both_variants(rng: np.random.Generator) -> None:
    """Test that authentication adds two control messages per UAV and nothing else."""
    src, dst = make_node("N0000", 0.0, 0.0), make_node("N0001", 100.0, 0.0)
    uavs = [make_uav("U000", 50.0, 0.0)]

    plain = route_n2n_uav(_packet(), src, dst, uavs, make_bs(), None, _channel(), rng)
    assert plain == RouteOutcome(Outcome.DELIVERED_AUTHENTIC, 2, 0)

    registry = Registry(uavs)
    vetted = route_n2n_uav(_packet(), src, dst, uavs, make_bs(), registry, _channel(), rng)
    assert vetted == RouteOutcome(Outcome.DELIVERED_AUTHENTIC, 2, 2)
    assert registry.calls == ["U000"]


def test_uav_relay_multi_hop_control_per_hop(rng: np.random.Generator) -> None:
    """Test a three-UAV line: four transmissions and six control messages."""
    src, dst = make_node("N0000", 0.0, 0.0), make_node("N0001", 900.0, 0.0)
    uavs = _line()
    packet = _packet()
    result = route_n2n_uav(packet, src, dst, uavs, make_bs(), Registry(uavs), _channel(), rng)
    assert result == RouteOutcome(Outcome.DELIVERED_AUTHENTIC, 4, 6)
    assert packet.hop_trace == ["N0000", "U000", "U001", "U002", "N0001"]


def test_rogue_on_only_path_without_ledger(rng: np.random.Generator) -> None:
    """Test that crossing a rogue UAV compromises the delivery."""
    src, dst = make_node("N0000", 0.0, 0.0), make_node("N0001", 900.0, 0.0)
    uavs = _line(rogue_middle=True)
    packet = _packet()
    result = route_n2n_uav(packet, src, dst, uavs, make_bs(), None, _channel(), rng)
    assert result.outcome is Outcome.DELIVERED_COMPROMISED
    assert "U001" in packet.hop_trace


def test_rogue_on_only_path_with_ledger_reroutes(rng: np.random.Generator) -> None:
    """Test that the ledger excludes the rogue and the packet falls back to the BS."""
    src, dst = make_node("N0000", 0.0, 0.0), make_node("N0001", 900.0, 0.0)
    uavs = _line(rogue_middle=True)
    packet = _packet()
    result = route_n2n_uav(packet, src, dst, uavs, make_bs(), Registry(uavs), _channel(), rng)
    assert result == RouteOutcome(Outcome.DELIVERED_AUTHENTIC, 3, 4)
    assert packet.hop_trace == ["N0000", "U000", "BS0", "N0001"]


def test_rogue_on_only_path_with_ledger_no_fallback(rng: np.random.Generator) -> None:
    """Test that without fallback the vetted packet is dropped, never compromised."""
    src, dst = make_node("N0000", 0.0, 0.0), make_node("N0001", 900.0, 0.0)
    uavs = _line(rogue_middle=True)
    result = route_n2n_uav(
        _packet(), src, dst, uavs, make_bs(), Registry(uavs), _channel(), rng, bs_fallback=False
    )
    assert result.outcome is Outcome.DROPPED
    assert result.transmissions == 1


def test_rogue_entry_rejected_next_nearest_used(rng: np.random.Generator) -> None:
    """Test that a rogue entry UAV is skipped in favor of the next nearest."""
    src, dst = make_node("N0000", 0.0, 0.0), make_node("N0001", 150.0, 0.0)
    uavs = [
        make_uav("U000", 10.0, 0.0, rogue=True, credential="forged:U000:x"),
        make_uav("U001", 60.0, 0.0),
    ]
    packet = _packet()
    result = route_n2n_uav(packet, src, dst, uavs, make_bs(), Registry(uavs), _channel(), rng)
    assert result == RouteOutcome(Outcome.DELIVERED_AUTHENTIC, 2, 4)
    assert packet.hop_trace == ["N0000", "U001", "N0001"]


@pytest.mark.parametrize(
    "terms",
    [
        None,
        _contract("U000", valid_to_s=5.0),
        _contract("U000", area=(1000.0, 1000.0, 1500.0, 1500.0)),
    ],
    ids=["no-contract", "expired", "outside-area"],
)
def test_entry_without_usable_contract_skipped(
    rng: np.random.Generator, terms: Optional[DroneContract]
) -> None:
    """Test that an honest UAV relays only under a contract in force where it flies."""
    src, dst = make_node("N0000", 0.0, 0.0), make_node("N0001", 150.0, 0.0)
    uavs = [make_uav("U000", 10.0, 0.0), make_uav("U001", 60.0, 0.0)]
    registry = Registry(uavs, contracts={"U000": terms})
    packet = _packet(created_at_s=10.0)
    result = route_n2n_uav(packet, src, dst, uavs, make_bs(), registry, _channel(), rng)
    assert result == RouteOutcome(Outcome.DELIVERED_AUTHENTIC, 2, 4)
    assert packet.hop_trace == ["N0000", "U001", "N0001"]


def test_contract_checked_at_packet_time(rng: np.random.Generator) -> None:
    """Test that a contract still in force at creation time lets the UAV relay."""
    src, dst = make_node("N0000", 0.0, 0.0), make_node("N0001", 150.0, 0.0)
    uavs = [make_uav("U000", 10.0, 0.0), make_uav("U001", 60.0, 0.0)]
    registry = Registry(uavs, contracts={"U000": _contract("U000", valid_to_s=5.0)})
    packet = _packet(created_at_s=4.0)
    result = route_n2n_uav(packet, src, dst, uavs, make_bs(), registry, _channel(), rng)
    assert result == RouteOutcome(Outcome.DELIVERED_AUTHENTIC, 2, 2)
    assert packet.hop_trace == ["N0000", "U000", "N0001"]


def test_relay_permitted() -> None:
    """Test identity, validity window and service area checks."""
    honest = make_uav("U000", 100.0, 100.0)
    rogue = make_uav("U001", 100.0, 100.0, rogue=True, credential="forged:U001:x")
    registry = Registry(
        [honest, rogue], contracts={"U000": _contract("U000", (0.0, 0.0, 200.0, 200.0), 10.0)}
    )
    assert relay_permitted(registry, honest, 0.0) == (True, 2)
    assert relay_permitted(registry, honest, 10.0) == (False, 2)
    assert relay_permitted(registry, rogue, 0.0) == (False, 2)
    moved = make_uav("U000", 300.0, 100.0)
    assert relay_permitted(registry, moved, 0.0) == (False, 2)


def test_n2n_bs_uplink_contention(rng: np.random.Generator) -> None:
    """Test that a fully contended uplink drops every packet after one transmission."""
    channel = _channel(contention_per_node=0.5, contenders={"BS0": 2})
    result = route_n2n_bs(
        _packet(), make_node("N0000", 10, 10), make_bs(), make_node("N0001", 20, 20), channel, rng
    )
    assert result == RouteOutcome(Outcome.DROPPED, 1, 0)
    quiet = _channel(contention_per_node=0.5)
    result = route_n2n_bs(
        _packet(), make_node("N0000", 10, 10), make_bs(), make_node("N0001", 20, 20), quiet, rng
    )
    assert result == RouteOutcome(Outcome.DELIVERED_AUTHENTIC, 2, 0)


def test_no_uav_in_reach(rng: np.random.Generator) -> None:
    """Test fallback and drop when no UAV covers the source."""
    src, dst = make_node("N0000", 0.0, 0.0), make_node("N0001", 100.0, 0.0)
    uavs = [make_uav("U000", 1400.0, 1400.0)]
    via_bs = route_n2n_uav(_packet(), src, dst, uavs, make_bs(), None, _channel(), rng)
    assert via_bs == RouteOutcome(Outcome.DELIVERED_AUTHENTIC, 2, 0)
    stranded = route_n2n_uav(
        _packet(), src, dst, uavs, make_bs(), None, _channel(), rng, bs_fallback=False
    )
    assert stranded == RouteOutcome(Outcome.DROPPED, 0, 0)


def test_entry_only_forwarding(rng: np.random.Generator) -> None:
    """Test that with forwarding off a far destination is served through the BS."""
    src, dst = make_node("N0000", 0.0, 0.0), make_node("N0001", 900.0, 0.0)
    packet = _packet()
    result = route_n2n_uav(
        packet, src, dst, _line(), make_bs(), None, _channel(), rng, fanet_forwarding="none"
    )
    assert result.outcome is Outcome.DELIVERED_AUTHENTIC
    assert packet.hop_trace == ["N0000", "U000", "BS0", "N0001"]


def test_entry_link_loss(rng: np.random.Generator) -> None:
    """Test that a lost first hop drops the packet with one transmission."""
    src, dst = make_node("N0000", 0.0, 0.0), make_node("N0001", 100.0, 0.0)
    result = route_n2n_uav(
        _packet(),
        src,
        dst,
        [make_uav("U000", 50.0, 0.0)],
        make_bs(),
        None,
        _channel(base_success=0.0),
        rng,
    )
    assert result == RouteOutcome(Outcome.DROPPED, 1, 0)


def _random_swarm(rng: np.random.Generator, rogue_share: float) -> list[EntityState]:
    uavs = []
    for i, (x, y) in enumerate(rng.uniform(0, 1500, size=(20, 2))):
        rogue = bool(rng.random() < rogue_share)
        uid = f"U{i:03d}"
        cred = f"forged:{uid}:x" if rogue else ""
        uavs.append(make_uav(uid, float(x), float(y), rogue=rogue, credential=cred))
    return uavs


def _endpoints(rng: np.random.Generator) -> tuple[EntityState, EntityState]:
    a, b = rng.uniform(0, 1500, size=(2, 2))
    src = make_node("N0000", float(a[0]), float(a[1]))
    return src, make_node("N0001", float(b[0]), float(b[1]))


def test_ledger_never_compromised(rng: np.random.Generator) -> None:
    """Test over random lossy topologies that vetted routing is never compromised."""
    for _ in range(300):
        uavs = _random_swarm(rng, 0.3)
        src, dst = _endpoints(rng)
        packet = _packet()
        result = route_n2n_uav(
            packet, src, dst, uavs, make_bs(), Registry(uavs), _channel(0.97), rng
        )
        assert result.outcome is not Outcome.DELIVERED_COMPROMISED
        relays = [h for h in packet.hop_trace if h.startswith("U")]
        assert len(relays) == len(set(relays))
        assert not set(relays) & {u.id for u in uavs if u.rogue}


def test_authentication_transparent_without_rogues() -> None:
    """Test identical data paths with and without a ledger when every UAV is honest."""
    topology_rng = np.random.default_rng(99)
    for trial in range(100):
        uavs = _random_swarm(topology_rng, 0.0)
        src, dst = _endpoints(topology_rng)

        traces: list[list[str]] = []
        counts: list[int] = []
        control: list[int] = []
        ledger: Optional[Registry]
        for ledger in (None, Registry(uavs)):
            packet = _packet()
            result = route_n2n_uav(
                packet,
                src,
                dst,
                uavs,
                make_bs(),
                ledger,
                _channel(0.97),
                np.random.default_rng(trial),
            )
            traces.append(packet.hop_trace)
            counts.append(result.transmissions)
            control.append(result.control_messages)
        assert traces[0] == traces[1]
        assert counts[0] == counts[1]
        assert control[1] >= control[0] == 0
