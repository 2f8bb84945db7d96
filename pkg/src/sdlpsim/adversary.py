"""Passive linking adversary: coverage-filtered eavesdropping, track
maintenance over pseudonyms, and greedy data association across changes and
silences.

Power ladder: a simple attacker treats every gated candidate as equally
likely; a medium one weighs position residuals with a Gaussian kernel; an
advanced one adds speed and heading residuals. Syntactic-only attackers never
bridge a silence longer than one beacon gap.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

from .beacons import BEACON_INTERVAL_S, Cam
from .pseudonyms import ChangeRecord
from .world import RoadMap


class CoverageKind(Enum):
    LOCAL = "local"
    MID_SIZED = "midsized"
    GLOBAL = "global"


class Capability(Enum):
    SYNTACTIC_ONLY = "syntactic"
    SYNTACTIC_AND_SEMANTIC = "semantic"


class Power(Enum):
    SIMPLE = "simple"
    MEDIUM = "medium"
    ADVANCED = "advanced"


@dataclass(frozen=True, slots=True)
class SnifferDeployment:
    coverage: CoverageKind = CoverageKind.GLOBAL
    capability: Capability = Capability.SYNTACTIC_AND_SEMANTIC
    power: Power = Power.SIMPLE
    gate_radius: float = 21.0
    kernel_sigma: float = 7.0
    speed_sigma: float = 2.0
    miss_mass: float = 0.0
    coverage_fraction: float = 0.5            # MID_SIZED share of the ring
    local_spans: tuple[tuple[float, float], ...] = ()  # LOCAL linear spans
    coast_max_s: float = 90.0                 # semantic bridge horizon

    def __post_init__(self):
        if self.gate_radius <= 0:
            raise ValueError("gate_radius must be positive")
        if self.coverage is CoverageKind.MID_SIZED and not 0 < self.coverage_fraction < 1:
            raise ValueError("coverage fraction must be in (0,1)")
        if not 0 <= self.miss_mass < 1:
            raise ValueError("miss mass must be in [0,1)")


@dataclass(slots=True)
class Track:
    track_id: int
    pseudonym_chain: list[int]
    position: float  # linear, metres on the ring
    speed: float
    heading: str
    last_time: float
    chain_times: list[float] = field(default_factory=list)  # first-seen per link
    alive: bool = True


def resolve_spans(deployment: SnifferDeployment, ring: float, seed: int) -> Optional[list[tuple[float, float]]]:
    """Covered linear spans; None means full coverage."""
    if deployment.coverage is CoverageKind.GLOBAL:
        return None
    if deployment.coverage is CoverageKind.LOCAL:
        return [(a % ring, b % ring if b < ring else b) for a, b in deployment.local_spans]
    rng = random.Random(f"{seed}-coverage")
    start = rng.uniform(0.0, ring)
    length = deployment.coverage_fraction * ring
    end = start + length
    if end <= ring:
        return [(start, end)]
    return [(start, ring), (0.0, end - ring)]


def in_spans(lin: float, spans: Optional[list[tuple[float, float]]]) -> bool:
    if spans is None:
        return True
    return any(a <= lin <= b for a, b in spans)


def observe_round(
    cams: Sequence[Cam],
    deployment: SnifferDeployment,
    road_map: RoadMap,
    spans: Optional[list[tuple[float, float]]],
) -> list[Cam]:
    """CAMs emitted inside the covered spans. Global coverage passes all."""
    if spans is None:
        return list(cams)
    return [c for c in cams if in_spans(road_map.to_linear(c.segment, c.offset), spans)]


def _kernel(deployment: SnifferDeployment, d_pos: float, d_speed: float, same_heading: bool) -> float:
    if deployment.power is Power.SIMPLE:
        return 1.0
    w = math.exp(-(d_pos * d_pos) / (2.0 * deployment.kernel_sigma ** 2))
    if deployment.power is Power.ADVANCED:
        w *= math.exp(-(d_speed * d_speed) / (2.0 * deployment.speed_sigma ** 2))
        if not same_heading:
            w *= 0.01
    return w


def _circ(a: float, b: float, ring: float) -> float:
    d = (b - a) % ring
    return min(d, ring - d)


def assignment_probs(
    track: Track,
    candidates: Sequence[Cam],
    deployment: SnifferDeployment,
    gap: float,
    road_map: RoadMap,
) -> list[float]:
    """Probability that each gated candidate continues the track.

    Candidates are expected to be pre-gated around the extrapolated position.
    Probabilities sum to 1 - miss_mass; an empty list means the track coasts.
    """
    if not candidates:
        return []
    ring = road_map.ring_length_m
    predicted = (track.position + track.speed * gap) % ring
    weights = []
    for cam in candidates:
        lin = road_map.to_linear(cam.segment, cam.offset)
        d_pos = _circ(predicted, lin, ring)
        d_speed = cam.speed - track.speed
        weights.append(_kernel(deployment, d_pos, d_speed, cam.heading.value == track.heading))
    total = sum(weights)
    if total <= 0.0:
        n = len(candidates)
        return [(1.0 - deployment.miss_mass) / n] * n
    return [w / total * (1.0 - deployment.miss_mass) for w in weights]


def gate_candidates(
    track: Track,
    cams: Sequence[Cam],
    deployment: SnifferDeployment,
    gap: float,
    road_map: RoadMap,
) -> list[int]:
    """Indices of cams within gate_radius of the track's extrapolation."""
    ring = road_map.ring_length_m
    predicted = (track.position + track.speed * gap) % ring
    out = []
    for i, cam in enumerate(cams):
        lin = road_map.to_linear(cam.segment, cam.offset)
        if _circ(predicted, lin, ring) <= deployment.gate_radius:
            out.append(i)
    return out


class Adversary:
    """Stateful tracker consuming per-step CAM batches."""

    def __init__(self, deployment: SnifferDeployment, road_map: RoadMap, seed: int,
                 beacon_interval: float = BEACON_INTERVAL_S):
        self.deployment = deployment
        self.map = road_map
        self.spans = resolve_spans(deployment, road_map.ring_length_m, seed)
        self.beacon_interval = beacon_interval
        self.rng = random.Random(f"{seed}-adversary")
        self.tracks: list[Track] = []
        self.by_pseudonym: dict[int, Track] = {}
        self.observed_pseudonyms: set[int] = set()
        self.bridged_links = 0
        self._next_track_id = 0

    def _new_track(self, cam: Cam, now: float) -> Track:
        t = Track(
            track_id=self._next_track_id,
            pseudonym_chain=[cam.pseudonym],
            position=self.map.to_linear(cam.segment, cam.offset),
            speed=cam.speed,
            heading=cam.heading.value,
            last_time=now,
            chain_times=[now],
            alive=True,
        )
        self._next_track_id += 1
        self.tracks.append(t)
        self.by_pseudonym[cam.pseudonym] = t
        return t

    def _extend(self, track: Track, cam: Cam, now: float) -> None:
        if cam.pseudonym != track.pseudonym_chain[-1]:
            del self.by_pseudonym[track.pseudonym_chain[-1]]
            track.pseudonym_chain.append(cam.pseudonym)
            track.chain_times.append(now)
            self.by_pseudonym[cam.pseudonym] = track
        track.position = self.map.to_linear(cam.segment, cam.offset)
        track.speed = cam.speed
        track.heading = cam.heading.value
        track.last_time = now

    def observe(self, cams: Sequence[Cam]) -> list[Cam]:
        return observe_round(cams, self.deployment, self.map, self.spans)

    def link_step(self, cams: Sequence[Cam], now: float) -> None:
        """One association round over the covered CAMs of this step."""
        observed = self.observe(cams)
        for cam in observed:
            self.observed_pseudonyms.add(cam.pseudonym)

        new_cams = []
        for cam in observed:
            track = self.by_pseudonym.get(cam.pseudonym)
            if track is not None and track.alive:
                self._extend(track, cam, now)
            else:
                new_cams.append(cam)

        semantic = self.deployment.capability is Capability.SYNTACTIC_AND_SEMANTIC
        max_gap = self.deployment.coast_max_s if semantic else self.beacon_interval + 1e-9
        open_tracks = [t for t in self.tracks
                       if t.alive and t.last_time < now and 0 < now - t.last_time <= max_gap]

        # Greedy maximum-probability one-to-one assignment; ties broken by a
        # seeded shuffle so a simple attacker amounts to a random matching.
        proposals = []
        for t in sorted(open_tracks, key=lambda t: t.track_id):
            gap = now - t.last_time
            gated = gate_candidates(t, new_cams, self.deployment, gap, self.map)
            if not gated:
                continue
            probs = assignment_probs(t, [new_cams[i] for i in gated], self.deployment, gap, self.map)
            for i, p in zip(gated, probs):
                proposals.append((p, self.rng.random(), t, i))
        proposals.sort(key=lambda x: (-x[0], x[1]))

        taken_tracks: set[int] = set()
        taken_cams: set[int] = set()
        for p, _, track, i in proposals:
            if track.track_id in taken_tracks or i in taken_cams:
                continue
            gap = now - track.last_time
            self._extend(track, new_cams[i], now)
            if gap > self.beacon_interval + 1e-9:
                self.bridged_links += 1
            taken_tracks.add(track.track_id)
            taken_cams.add(i)

        for i, cam in enumerate(new_cams):
            if i not in taken_cams:
                self._new_track(cam, now)

        for t in self.tracks:
            if t.alive and now - t.last_time > self.deployment.coast_max_s:
                t.alive = False

    def dump_tracks_csv(self, path: Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["track_id", "pseudonym_chain", "link_times", "last_time", "alive"])
            for t in sorted(self.tracks, key=lambda t: t.track_id):
                w.writerow([t.track_id, ";".join(str(p) for p in t.pseudonym_chain),
                            ";".join(f"{x:.2f}" for x in t.chain_times),
                            f"{t.last_time:.2f}", int(t.alive)])


def tracking_success(tracks: Sequence[Track], change_log: Sequence[ChangeRecord]) -> float:
    """Correctly linked consecutive pseudonym pairs over all ground-truth
    pairs. A change outside the attacker's coverage simply cannot appear in
    any chain, so shrinking coverage only ever lowers the score. Zero pairs
    yields 0."""
    links = set()
    for t in tracks:
        for a, b in zip(t.pseudonym_chain, t.pseudonym_chain[1:]):
            links.add((a, b))
    total = 0
    correct = 0
    for rec in change_log:
        total += 1
        if (rec.old_id, rec.new_id) in links:
            correct += 1
    if total == 0:
        return 0.0
    return correct / total


def event_assignment_distribution(
    pre_states: Sequence[tuple[float, float, float]],
    post_states: Sequence[tuple[float, float]],
    deployment: SnifferDeployment,
    now: float,
    ring: float,
) -> list[float]:
    """Adversary-view confusion over the members of one mix event.

    pre states are (linear position, speed, last-seen time) per member before
    the change; post states are (position, speed) at reappearance. Rows are
    the per-member candidate kernels; their renormalized average is the event
    distribution (uniform for a simple attacker).
    """
    k = len(post_states)
    if k == 0:
        return []
    if deployment.power is Power.SIMPLE or len(pre_states) == 0:
        return [1.0 / k] * k
    acc = [0.0] * k
    for pre_lin, pre_speed, last_t in pre_states:
        predicted = (pre_lin + pre_speed * (now - last_t)) % ring
        weights = []
        for post_lin, post_speed in post_states:
            d_pos = _circ(predicted, post_lin, ring)
            weights.append(_kernel(deployment, d_pos, post_speed - pre_speed, True))
        total = sum(weights)
        if total <= 0.0:
            weights = [1.0 / k] * k
            total = 1.0
        for i, w in enumerate(weights):
            acc[i] += w / total
    total = sum(acc)
    return [a / total for a in acc]


def occupant_exit_distribution(
    pre_states: Sequence[tuple[float, float, float]],
    exit_lin: float,
    deployment: SnifferDeployment,
    now: float,
    ring: float,
) -> list[float]:
    """Which of k co-present occupants just reappeared at the exit point:
    kernel over each occupant's extrapolated approach state (uniform for a
    simple attacker)."""
    k = len(pre_states)
    if k == 0:
        return []
    if deployment.power is Power.SIMPLE:
        return [1.0 / k] * k
    weights = []
    for pre_lin, pre_speed, last_t in pre_states:
        predicted = (pre_lin + pre_speed * (now - last_t)) % ring
        weights.append(_kernel(deployment, _circ(predicted, exit_lin, ring), pre_speed, True))
    total = sum(weights)
    if total <= 0.0:
        return [1.0 / k] * k
    return [w / total for w in weights]
