"""CAM broadcasting, local dynamic maps, and the safety metrics derived from
them.

Radio is ideal within range: every beacon from an in-range, non-parked sender
is received. Silence suppresses transmission only; silent vehicles keep
listening. Vehicles inside a roadside infrastructure neither send nor receive.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

from .world import Heading, WorldState

BEACON_INTERVAL_S = 0.5
RADIO_RANGE_M = 300.0
LDM_EXPIRY_S = 3.0
AWARENESS_RANGE_M = 150.0
T_SAFE_S = 2.0


@dataclass(frozen=True, slots=True)
class Cam:
    pseudonym: int
    segment: str
    offset: float
    speed: float
    heading: Heading
    timestamp: float


@dataclass(slots=True)
class LdmEntry:
    pseudonym: int
    last_cam: Cam
    last_seen: float


@dataclass(slots=True)
class Ldm:
    owner: int
    entries: dict[int, LdmEntry] = field(default_factory=dict)
    expiry: float = LDM_EXPIRY_S

    def evict_stale(self, now: float) -> None:
        dead = [p for p, e in self.entries.items() if now - e.last_seen > self.expiry]
        for p in dead:
            del self.entries[p]


def new_ldms(world: WorldState, expiry: float = LDM_EXPIRY_S) -> dict[int, Ldm]:
    return {v.true_id: Ldm(owner=v.true_id, expiry=expiry) for v in world.vehicles}


def broadcast_round(
    world: WorldState,
    silent_set: set[int],
    beacon_interval: float,
    active_pseudonyms: dict[int, int],
) -> list[tuple[int, Cam]]:
    """One emission round: every non-silent, non-parked vehicle sends exactly
    one CAM when the clock sits on a beacon boundary."""
    ticks = world.time / beacon_interval
    if abs(ticks - round(ticks)) > 1e-9:
        return []
    out = []
    for v in sorted(world.vehicles, key=lambda v: v.true_id):
        if v.true_id in silent_set or v.parked:
            continue
        out.append((v.true_id, Cam(
            pseudonym=active_pseudonyms[v.true_id],
            segment=v.segment,
            offset=v.offset,
            speed=v.speed,
            heading=v.heading,
            timestamp=world.time,
        )))
    return out


def _circular_distance(a: float, b: float, ring: float) -> float:
    d = (b - a) % ring
    return min(d, ring - d)


class _RingIndex:
    """Sorted linear positions with circular range queries."""

    def __init__(self, positions: list[tuple[float, int]], ring: float):
        self.items = sorted(positions)
        self.keys = [p for p, _ in self.items]
        self.ring = ring

    def within(self, center: float, radius: float) -> list[int]:
        if not self.items:
            return []
        if 2 * radius >= self.ring:
            return [i for _, i in self.items]
        a = (center - radius) % self.ring
        b = (center + radius) % self.ring
        spans = [(a, b)] if a <= b else [(a, self.ring), (0.0, b)]
        out = []
        for lo, hi in spans:
            i = bisect.bisect_left(self.keys, lo)
            j = bisect.bisect_right(self.keys, hi)
            out.extend(idx for _, idx in self.items[i:j])
        return out


def _cam_index(world: WorldState, cams: list[tuple[int, Cam]]) -> _RingIndex:
    positions = [(world.map.to_linear(c.segment, c.offset), k) for k, (_, c) in enumerate(cams)]
    return _RingIndex(positions, world.map.ring_length_m)


def update_ldms(
    ldms: dict[int, Ldm],
    cams: list[tuple[int, Cam]],
    world: WorldState,
    radio_range: float = RADIO_RANGE_M,
) -> dict[int, Ldm]:
    """Ingest one round of CAMs into every listener's LDM and evict expired
    entries. Mutates and returns the same mapping."""
    now = world.time
    index = _cam_index(world, cams)
    for v in sorted(world.vehicles, key=lambda v: v.true_id):
        ldm = ldms[v.true_id]
        ldm.evict_stale(now)
        if v.parked:
            continue
        here = world.linear_pos(v)
        for k in sorted(index.within(here, radio_range)):
            sender, cam = cams[k]
            if sender == v.true_id:
                continue
            entry = ldm.entries.get(cam.pseudonym)
            if entry is None:
                ldm.entries[cam.pseudonym] = LdmEntry(cam.pseudonym, cam, now)
            else:
                entry.last_cam = cam
                entry.last_seen = now
    return ldms


def _vehicle_index(world: WorldState) -> _RingIndex:
    positions = [(world.linear_pos(v), v.true_id) for v in world.vehicles if not v.parked]
    return _RingIndex(positions, world.map.ring_length_m)


def stale_pair_counts(
    world: WorldState,
    ldms: dict[int, Ldm],
    t_safe: float,
    active_pseudonyms: dict[int, int],
    awareness_range: float = AWARENESS_RANGE_M,
) -> tuple[int, int]:
    """(stale, total) awareness pairs: one dangerous on-road vehicle d plus a
    distinct on-road vehicle n within awareness range; stale when n's LDM has
    no entry for d's current pseudonym younger than t_safe."""
    now = world.time
    index = _vehicle_index(world)
    total = 0
    stale = 0
    for d in world.vehicles:
        if not d.dangerous or d.parked:
            continue
        pseud = active_pseudonyms[d.true_id]
        here = world.linear_pos(d)
        for n_id in index.within(here, awareness_range):
            if n_id == d.true_id:
                continue
            total += 1
            entry = ldms[n_id].entries.get(pseud)
            if entry is None or now - entry.last_seen > t_safe:
                stale += 1
    return stale, total


def safety_risk(
    world: WorldState,
    ldms: dict[int, Ldm],
    t_safe: float = T_SAFE_S,
    active_pseudonyms: dict[int, int] | None = None,
    awareness_range: float = AWARENESS_RANGE_M,
) -> float:
    """Fraction of stale awareness pairs; 0 when no pairs exist."""
    assert active_pseudonyms is not None
    stale, total = stale_pair_counts(world, ldms, t_safe, active_pseudonyms, awareness_range)
    if total == 0:
        return 0.0
    return stale / total


def ldm_anomalies(
    world: WorldState,
    ldms: dict[int, Ldm],
    active_pseudonyms: dict[int, int],
    owned_pseudonyms: dict[int, set[int]],
    awareness_range: float = AWARENESS_RANGE_M,
) -> tuple[int, int]:
    """(missing, guest) counts over the current LDMs.

    missing: on-road vehicles absent, under every pseudonym they ever held,
    from at least one in-range neighbour's LDM. guest: LDM entries keyed by a
    pseudonym that is no longer anyone's active pseudonym.
    """
    index = _vehicle_index(world)
    missing = 0
    for d in world.vehicles:
        if d.parked:
            continue
        owned = owned_pseudonyms[d.true_id]
        here = world.linear_pos(d)
        for n_id in index.within(here, awareness_range):
            if n_id == d.true_id:
                continue
            entries = ldms[n_id].entries
            if not any(p in entries for p in owned):
                missing += 1
                break
    active = set(active_pseudonyms.values())
    guests = sum(1 for ldm in ldms.values() for p in ldm.entries if p not in active)
    return missing, guests
