"""Random waypoint motion for ground nodes and rogue patrols, density-driven UAV repositioning."""

import dataclasses
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from uavchain.sim.entities import EntityState, Point2D, Role

Area = tuple[float, float]
Rect = tuple[float, float, float, float]  # x0, y0, x1, y1

_ARRIVAL_EPS_M = 1e-9
_MAX_LEGS_PER_STEP = 10_000


def uniform_placement(count: int, area: Area, rng: np.random.Generator) -> list[Point2D]:
    """Draw ``count`` positions i.i.d. uniform over ``[0, w] x [0, h]``."""
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    width, height = area
    samples = rng.uniform(0.0, 1.0, size=(count, 2)) * np.array([width, height])
    return [(float(x), float(y)) for x, y in samples]


def _draw_leg(
    rng: np.random.Generator, area: Area, speed_range: tuple[float, float]
) -> tuple[Point2D, float]:
    wx, wy = rng.uniform(0.0, 1.0, size=2) * np.array(area)
    speed = float(rng.uniform(speed_range[0], speed_range[1]))
    return (float(wx), float(wy)), speed


def _clamp(value: float, low: float, high: float) -> float:
    return min(max(value, low), high)


def waypoint_step(
    state: EntityState,
    dt: float,
    rng: np.random.Generator,
    area: Area,
    speed_range: tuple[float, float],
) -> EntityState:
    """Advance a mobile node by ``dt`` seconds of random waypoint motion.

    The node walks straight toward its waypoint at its current speed. On arrival it
    draws a fresh waypoint uniform in the area and a fresh speed uniform in
    ``speed_range``, then spends whatever is left of ``dt`` on the new leg.

    Args:
        state: Current node state (role must be MobileNode)
        dt: Step length in seconds, >= 0
        rng: Mobility stream
        area: (width, height) in meters
        speed_range: (v_min, v_max) in m/s

    Returns:
        New state; the input is not modified
    """
    if state.role is not Role.MOBILE_NODE:
        raise ValueError(f"{state.id}: waypoint_step applies to mobile nodes only")
    return _walk(state, dt, rng, area, speed_range)


def patrol_step(
    state: EntityState, dt: float, rng: np.random.Generator, area: Area, speed_mps: float
) -> EntityState:
    """Random waypoint motion for a UAV at a fixed ground speed, with no pauses."""
    if state.role is not Role.UAV:
        raise ValueError(f"{state.id}: patrol_step applies to UAVs only")
    if speed_mps <= 0:
        raise ValueError(f"speed_mps must be > 0, got {speed_mps}")
    return _walk(state, dt, rng, area, (speed_mps, speed_mps))


def _walk(
    state: EntityState,
    dt: float,
    rng: np.random.Generator,
    area: Area,
    speed_range: tuple[float, float],
) -> EntityState:
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")

    x, y, z = state.position
    waypoint = state.waypoint
    speed = state.speed
    if waypoint is None or speed <= 0:
        waypoint, speed = _draw_leg(rng, area, speed_range)

    remaining = dt
    for _ in range(_MAX_LEGS_PER_STEP):
        gap = math.hypot(waypoint[0] - x, waypoint[1] - y)
        if gap <= _ARRIVAL_EPS_M:
            x, y = waypoint
            waypoint, speed = _draw_leg(rng, area, speed_range)
            continue
        if remaining <= 0:
            break
        travel = speed * remaining
        if travel < gap:
            x += (waypoint[0] - x) / gap * travel
            y += (waypoint[1] - y) / gap * travel
            remaining = 0.0
            break
        remaining -= gap / speed
        x, y = waypoint

    width, height = area
    x, y = _clamp(x, 0.0, width), _clamp(y, 0.0, height)
    gap = math.hypot(waypoint[0] - x, waypoint[1] - y)
    if gap > 0:
        velocity = ((waypoint[0] - x) / gap * speed, (waypoint[1] - y) / gap * speed)
    else:
        velocity = (speed, 0.0)
    return dataclasses.replace(state, position=(x, y, z), velocity=velocity, waypoint=waypoint)


def fly_toward(state: EntityState, dt: float) -> EntityState:
    """Move a UAV along its velocity toward its waypoint; hover once it arrives."""
    if state.waypoint is None or dt <= 0:
        return state
    x, y, z = state.position
    tx, ty = state.waypoint
    gap = math.hypot(tx - x, ty - y)
    travel = state.speed * dt
    if travel >= gap:
        return dataclasses.replace(state, position=(tx, ty, z), velocity=(0.0, 0.0), waypoint=None)
    x += (tx - x) / gap * travel
    y += (ty - y) / gap * travel
    return dataclasses.replace(state, position=(x, y, z))


@dataclass(frozen=True)
class DensityGrid:
    """Mobile-node counts per square cell, origin at (0, 0).

    ``counts[i, j]`` covers x in cell ``i`` and y in cell ``j``.
    """

    cell_size_m: float
    counts: np.ndarray = field(compare=False)
    origin: Point2D = (0.0, 0.0)

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.counts.shape[0]), int(self.counts.shape[1]))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def cell_bounds(self, i: int, j: int, area: Area) -> Rect:
        x0 = self.origin[0] + i * self.cell_size_m
        y0 = self.origin[1] + j * self.cell_size_m
        return (x0, y0, min(x0 + self.cell_size_m, area[0]), min(y0 + self.cell_size_m, area[1]))

    def cell_center(self, i: int, j: int, area: Area) -> Point2D:
        x0, y0, x1, y1 = self.cell_bounds(i, j, area)
        return ((x0 + x1) / 2.0, (y0 + y1) / 2.0)


def _cell_indices(values: np.ndarray, cell_size_m: float, n_cells: int) -> np.ndarray:
    # Boundary points belong to the lower-index cell: x = k * cell lands in cell k - 1.
    idx = np.ceil(values / cell_size_m).astype(int) - 1
    return np.clip(idx, 0, n_cells - 1)


def density_grid(
    node_positions: Sequence[Sequence[float]], cell_size_m: float, area: Area
) -> DensityGrid:
    """Bin node positions into a grid of ``cell_size_m`` cells covering the whole area."""
    if cell_size_m <= 0:
        raise ValueError(f"cell_size_m must be > 0, got {cell_size_m}")
    nx = max(1, math.ceil(area[0] / cell_size_m))
    ny = max(1, math.ceil(area[1] / cell_size_m))
    counts = np.zeros((nx, ny), dtype=np.int64)
    if len(node_positions) > 0:
        xy = np.asarray([(p[0], p[1]) for p in node_positions], dtype=float)
        ix = _cell_indices(xy[:, 0], cell_size_m, nx)
        iy = _cell_indices(xy[:, 1], cell_size_m, ny)
        np.add.at(counts, (ix, iy), 1)
    return DensityGrid(cell_size_m=cell_size_m, counts=counts)


def reposition_uavs(
    uavs: Sequence[EntityState],
    grid: DensityGrid,
    rng: np.random.Generator,
    area: Area,
    jitter_m: float = 0.0,
    speed_mps: float = 0.0,
    service_areas: Optional[Mapping[str, Rect]] = None,
) -> list[EntityState]:
    """Send each UAV to a cell drawn with probability proportional to its node count.

    The target is the cell center plus uniform jitter of up to ``jitter_m`` per axis,
    kept inside the cell and, when given, inside the UAV's contracted service area.
    With ``speed_mps == 0`` UAVs teleport; otherwise they get a waypoint and fly there
    on later mobility ticks. Altitude and count never change.
    """
    flat = grid.counts.ravel().astype(float)
    total = flat.sum()
    probabilities = flat / total if total > 0 else np.full(flat.size, 1.0 / flat.size)
    _, ny = grid.shape

    moved: list[EntityState] = []
    for uav in uavs:
        cell = int(rng.choice(flat.size, p=probabilities))
        i, j = divmod(cell, ny)
        x0, y0, x1, y1 = grid.cell_bounds(i, j, area)
        cx, cy = grid.cell_center(i, j, area)
        jx, jy = rng.uniform(-jitter_m, jitter_m, size=2) if jitter_m > 0 else (0.0, 0.0)
        tx, ty = _clamp(cx + float(jx), x0, x1), _clamp(cy + float(jy), y0, y1)

        if service_areas and uav.id in service_areas:
            sx0, sy0, sx1, sy1 = service_areas[uav.id]
            tx, ty = _clamp(tx, sx0, sx1), _clamp(ty, sy0, sy1)

        z = uav.position[2]
        if speed_mps > 0:
            gap = math.hypot(tx - uav.position[0], ty - uav.position[1])
            if gap > 0:
                velocity = (
                    (tx - uav.position[0]) / gap * speed_mps,
                    (ty - uav.position[1]) / gap * speed_mps,
                )
                moved.append(dataclasses.replace(uav, waypoint=(tx, ty), velocity=velocity))
                continue
        moved.append(
            dataclasses.replace(uav, position=(tx, ty, z), velocity=(0.0, 0.0), waypoint=None)
        )
    return moved
