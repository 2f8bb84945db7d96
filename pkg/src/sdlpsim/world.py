"""Ground-truth mobility: a one-way ring road with signalized intersections,
congestion zones and roadside infrastructures.

Segments are laid end to end to form a closed loop, so the vehicle count is
constant for a whole run. Positions are (segment, offset) pairs but most of
the logic works on the flattened linear position along the ring.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

MIN_GAP_M = 2.0
DETECTION_RADIUS_M = 50.0
APPROACH_RADIUS_M = 30.0
CONGESTION_SPEED_THRESHOLD = 5.0


class Heading(Enum):
    FORWARD = "forward"


class Light(Enum):
    RED = "red"
    GREEN = "green"


@dataclass(frozen=True, slots=True)
class Segment:
    id: str
    length_m: float
    speed_limit_mps: float


@dataclass(frozen=True, slots=True)
class Intersection:
    id: str
    position_m: float  # linear position of the stop line on the ring
    red_s: float
    green_s: float
    offset_s: float = 0.0


@dataclass(frozen=True, slots=True)
class CongestionZone:
    id: str
    segment: str
    start_m: float
    end_m: float
    crawl_speed_mps: float = 2.5  # cap on desired speed inside the zone


@dataclass(frozen=True, slots=True)
class Infrastructure:
    id: str
    position_m: float
    capacity: int
    service_time_s: float


class MapError(ValueError):
    pass


@dataclass(slots=True)
class RoadMap:
    segments: list[Segment]
    intersections: list[Intersection]
    congestion_zones: list[CongestionZone]
    infrastructures: list[Infrastructure]
    _starts: dict[str, float] = field(default_factory=dict, repr=False)
    ring_length_m: float = 0.0

    def __post_init__(self) -> None:
        if not self.segments:
            raise MapError("map needs at least one segment")
        seen = set()
        pos = 0.0
        for seg in self.segments:
            if seg.id in seen:
                raise MapError(f"duplicate segment id {seg.id!r}")
            if seg.length_m <= 0 or seg.speed_limit_mps <= 0:
                raise MapError(f"segment {seg.id!r} needs positive length and speed limit")
            seen.add(seg.id)
            self._starts[seg.id] = pos
            pos += seg.length_m
        self.ring_length_m = pos
        for x in self.intersections:
            if x.red_s <= 0 or x.green_s <= 0:
                raise MapError(f"intersection {x.id!r} needs positive phase durations")
            if not 0 <= x.position_m < self.ring_length_m:
                raise MapError(f"intersection {x.id!r} position outside ring")
        for z in self.congestion_zones:
            seg = self.segment(z.segment)
            if not 0 <= z.start_m < z.end_m <= seg.length_m:
                raise MapError(f"congestion zone {z.id!r} bounds outside segment")
        for ri in self.infrastructures:
            if ri.capacity < 1:
                raise MapError(f"infrastructure {ri.id!r} needs capacity >= 1")
            if ri.service_time_s <= 0:
                raise MapError(f"infrastructure {ri.id!r} needs positive service time")

    def segment(self, seg_id: str) -> Segment:
        for seg in self.segments:
            if seg.id == seg_id:
                return seg
        raise MapError(f"unknown segment {seg_id!r}")

    def segment_start(self, seg_id: str) -> float:
        try:
            return self._starts[seg_id]
        except KeyError:
            raise MapError(f"unknown segment {seg_id!r}") from None

    def to_linear(self, seg_id: str, offset: float) -> float:
        return self.segment_start(seg_id) + offset

    def from_linear(self, lin: float) -> tuple[str, float]:
        lin = lin % self.ring_length_m
        for seg in self.segments:
            start = self._starts[seg.id]
            if start <= lin < start + seg.length_m:
                return seg.id, lin - start
        # lin == ring_length can only happen through rounding; wrap to start
        return self.segments[0].id, 0.0

    def ahead_distance(self, from_lin: float, to_lin: float) -> float:
        """Driving distance from one linear position to another, forward only."""
        return (to_lin - from_lin) % self.ring_length_m

    def zone_bounds(self, zone: CongestionZone) -> tuple[float, float]:
        start = self.segment_start(zone.segment)
        return start + zone.start_m, start + zone.end_m

    def zone_at(self, lin: float) -> Optional[CongestionZone]:
        for zone in self.congestion_zones:
            lo, hi = self.zone_bounds(zone)
            if lo <= lin <= hi:
                return zone
        return None

    def intersection_by_id(self, int_id: str) -> Intersection:
        for x in self.intersections:
            if x.id == int_id:
                return x
        raise MapError(f"unknown intersection {int_id!r}")

    def infrastructure_by_id(self, ri_id: str) -> Infrastructure:
        for ri in self.infrastructures:
            if ri.id == ri_id:
                return ri
        raise MapError(f"unknown infrastructure {ri_id!r}")


@dataclass(slots=True)
class VehicleState:
    true_id: int
    segment: str
    offset: float
    speed: float
    desired_speed: float
    heading: Heading = Heading.FORWARD
    cooperative_prob: float = 1.0
    dangerous: bool = False
    inside_infrastructure: Optional[tuple[str, float]] = None  # (ri id, exit time)

    @property
    def parked(self) -> bool:
        return self.inside_infrastructure is not None


# -- topology contexts --------------------------------------------------------

@dataclass(frozen=True, slots=True)
class SignalizedIntersection:
    id: str
    light: Light
    time_in_phase: float


@dataclass(frozen=True, slots=True)
class CongestedSegment:
    zone_id: str


@dataclass(frozen=True, slots=True)
class RoadsideInfrastructure:
    id: str
    free_slots: int


@dataclass(frozen=True, slots=True)
class OpenRoad:
    pass


TopologyContext = Union[SignalizedIntersection, CongestedSegment, RoadsideInfrastructure, OpenRoad]

OPEN_ROAD = OpenRoad()


def context_kind(ctx: TopologyContext) -> str:
    if isinstance(ctx, SignalizedIntersection):
        return "intersection"
    if isinstance(ctx, CongestedSegment):
        return "congestion"
    if isinstance(ctx, RoadsideInfrastructure):
        return "infrastructure"
    return "open"


@dataclass(slots=True)
class WorldState:
    time: float
    dt: float
    vehicles: list[VehicleState]
    map: RoadMap
    rng_seed: int
    _index: Optional[dict[int, VehicleState]] = field(default=None, repr=False)

    def vehicle(self, true_id: int) -> VehicleState:
        if self._index is None or len(self._index) != len(self.vehicles):
            self._index = {v.true_id: v for v in self.vehicles}
        try:
            return self._index[true_id]
        except KeyError:
            raise KeyError(f"unknown vehicle {true_id}") from None

    def linear_pos(self, vehicle: VehicleState) -> float:
        return self.map.to_linear(vehicle.segment, vehicle.offset)

    def ri_occupancy(self, ri_id: str) -> int:
        return sum(1 for v in self.vehicles
                   if v.inside_infrastructure is not None and v.inside_infrastructure[0] == ri_id)

    def free_slots(self, ri_id: str) -> int:
        ri = self.map.infrastructure_by_id(ri_id)
        return ri.capacity - self.ri_occupancy(ri_id)


def light_phase(road_map: RoadMap, intersection_id: str, time: float) -> tuple[Light, float]:
    """Phase of a signal at an absolute time. Red comes first in the cycle."""
    x = road_map.intersection_by_id(intersection_id)
    cycle = x.red_s + x.green_s
    t = (time + x.offset_s) % cycle
    if t < x.red_s:
        return Light.RED, t
    return Light.GREEN, t - x.red_s


def detect_context(
    vehicle: VehicleState,
    world: WorldState,
    detection_radius: float = DETECTION_RADIUS_M,
    approach_radius: float = APPROACH_RADIUS_M,
    congestion_speed_threshold: float = CONGESTION_SPEED_THRESHOLD,
) -> TopologyContext:
    """Classify the vehicle's topology context.

    Tie-break precedence when several apply: infrastructure > intersection >
    congestion; everything else is open road.
    """
    world.vehicle(vehicle.true_id)  # raises on unknown vehicles
    if vehicle.parked:
        ri_id = vehicle.inside_infrastructure[0]
        return RoadsideInfrastructure(ri_id, world.free_slots(ri_id))
    lin = world.linear_pos(vehicle)
    for ri in world.map.infrastructures:
        if world.map.ahead_distance(lin, ri.position_m) <= approach_radius:
            return RoadsideInfrastructure(ri.id, world.free_slots(ri.id))
    for x in world.map.intersections:
        if world.map.ahead_distance(lin, x.position_m) <= detection_radius:
            light, t_in = light_phase(world.map, x.id, world.time)
            return SignalizedIntersection(x.id, light, t_in)
    zone = world.map.zone_at(lin)
    if zone is not None and vehicle.speed < congestion_speed_threshold:
        return CongestedSegment(zone.id)
    return OPEN_ROAD


def step_world(world: WorldState) -> WorldState:
    """Advance the world by one dt: single-lane queueing with stop-at-red.

    Vehicles keep MIN_GAP_M behind their (already moved) leader, never cross a
    red stop line, and crawl inside congestion zones. Parked vehicles stay put.
    Mutates and returns the same WorldState.
    """
    rmap = world.map
    ring = rmap.ring_length_m
    moving = [v for v in world.vehicles if not v.parked]
    # Front-to-back so every follower sees its leader's fresh position. The
    # front-most vehicle wraps onto the rear-most one's pre-step position.
    moving.sort(key=lambda v: world.linear_pos(v), reverse=True)
    leader_lin: Optional[float] = None
    if moving:
        leader_lin = world.linear_pos(moving[-1]) + ring

    red_lines = [x.position_m for x in rmap.intersections
                 if light_phase(rmap, x.id, world.time)[0] is Light.RED]

    for v in moving:
        lin = world.linear_pos(v)
        desired = v.desired_speed
        zone = rmap.zone_at(lin)
        if zone is not None:
            desired = min(desired, zone.crawl_speed_mps)
        advance = desired * world.dt
        if leader_lin is not None:
            gap = leader_lin - lin
            if gap < ring - 1e-9:  # a real leader ahead, not own wrap image
                advance = min(advance, max(0.0, gap - MIN_GAP_M))
        for line in red_lines:
            dist = rmap.ahead_distance(lin, line)
            if dist < advance or (dist == 0.0 and advance > 0.0):
                advance = dist
        v.speed = advance / world.dt
        new_lin = (lin + advance) % ring
        v.segment, v.offset = rmap.from_linear(new_lin)
        leader_lin = lin + advance

    world.time += world.dt
    return world


def populate_ring(
    road_map: RoadMap,
    count: int,
    seed: int,
    dangerous_fraction: float = 0.0,
    cooperative_prob: float = 1.0,
    speed_factor_range: tuple[float, float] = (0.8, 1.0),
) -> WorldState:
    """Spread vehicles evenly over the ring with seeded jitter and flags."""
    rng = random.Random(seed)
    spacing = road_map.ring_length_m / count
    vehicles = []
    limit = min(s.speed_limit_mps for s in road_map.segments)
    for i in range(count):
        jitter = rng.uniform(-0.25, 0.25) * spacing
        lin = (i * spacing + jitter) % road_map.ring_length_m
        seg, off = road_map.from_linear(lin)
        desired = limit * rng.uniform(*speed_factor_range)
        vehicles.append(VehicleState(
            true_id=i, segment=seg, offset=off,
            speed=desired, desired_speed=desired,
            cooperative_prob=cooperative_prob,
        ))
    n_danger = round(dangerous_fraction * count)
    for idx in rng.sample(range(count), n_danger):
        vehicles[idx].dangerous = True
    return WorldState(time=0.0, dt=0.5, vehicles=vehicles, map=road_map, rng_seed=seed)
