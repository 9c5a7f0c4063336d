"""Simulated entities: mobile nodes, UAVs and base stations."""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

Position = tuple[float, float, float]
Point2D = tuple[float, float]


class Role(str, Enum):
    MOBILE_NODE = "MobileNode"
    UAV = "Uav"
    BASE_STATION = "BaseStation"


@dataclass(frozen=True)
class EntityState:
    """Snapshot of one entity. Steps return new states; nothing is mutated in place."""

    id: str
    role: Role
    position: Position
    velocity: Point2D = (0.0, 0.0)
    waypoint: Optional[Point2D] = None
    rogue: bool = False
    provider: str = ""
    credential: str = ""

    def __post_init__(self) -> None:
        if self.rogue and self.role is not Role.UAV:
            raise ValueError(f"{self.id}: only UAVs can be rogue")

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)


def node_id(index: int) -> str:
    return f"N{index:04d}"


def uav_id(index: int) -> str:
    return f"U{index:03d}"


def bs_id(index: int) -> str:
    return f"BS{index}"


def distance(a: Position, b: Position) -> float:
    """3-D Euclidean distance."""
    return math.dist(a, b)


def distance_between(a: EntityState, b: EntityState) -> float:
    return math.dist(a.position, b.position)
