"""Message types exchanged between the controller and the vehicle data plane
over the in-process channel, plus their JSON forms for protocol recording.

Reports flow up once per epoch; directives flow down and take effect at the
next step boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .metrics import PrivacyMetric
from .strategies import StrategyId, StrategyRule, StrategySettings


@dataclass(frozen=True, slots=True)
class VehicleReportRow:
    true_id: int
    context: str
    speed: float
    privacy_level: float


@dataclass(frozen=True, slots=True)
class ContextReport:
    time: float
    vehicles: tuple[VehicleReportRow, ...]
    safety_risk: float
    stale_pairs: int
    missing_vehicles: int
    guest_entries: int
    dangerous_ids: tuple[int, ...]
    selfish_ids: tuple[int, ...]
    linkage_ratio: Optional[float]
    silences_bridged: int

    def dominant_context(self) -> str:
        """Most common non-open context kind, or 'open' when there is none."""
        counts: dict[str, int] = {}
        for row in self.vehicles:
            if row.context != "open":
                counts[row.context] = counts.get(row.context, 0) + 1
        if not counts:
            return "open"
        return max(sorted(counts), key=lambda k: counts[k])

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "vehicles": [[r.true_id, r.context, r.speed, r.privacy_level]
                         for r in self.vehicles],
            "safety_risk": self.safety_risk,
            "stale_pairs": self.stale_pairs,
            "missing_vehicles": self.missing_vehicles,
            "guest_entries": self.guest_entries,
            "dangerous_ids": list(self.dangerous_ids),
            "selfish_ids": list(self.selfish_ids),
            "linkage_ratio": self.linkage_ratio,
            "silences_bridged": self.silences_bridged,
        }


@dataclass(frozen=True, slots=True)
class LockDirective:
    true_id: int
    duration: float
    priority: int


@dataclass(frozen=True, slots=True)
class IncentiveGrant:
    true_id: int
    credits: float


@dataclass(frozen=True, slots=True)
class PolicyUpdate:
    true_id: Optional[int]  # None applies to every vehicle
    min_usage_duration: float
    max_parallel: int
    reuse_allowed: bool


@dataclass(frozen=True, slots=True)
class ControlDirective:
    issued_at: float
    selected: StrategyId
    settings: StrategySettings
    rules: tuple[StrategyRule, ...]
    metric: PrivacyMetric
    locks: tuple[LockDirective, ...] = ()
    incentives: tuple[IncentiveGrant, ...] = ()
    policy_updates: tuple[PolicyUpdate, ...] = ()

    def to_dict(self) -> dict:
        s = self.settings
        return {
            "issued_at": self.issued_at,
            "selected": self.selected.value,
            "settings": {
                "silence_duration": s.silence_duration,
                "red_light_duration": s.red_light_duration,
                "speed_threshold": s.speed_threshold,
                "min_group_size": s.min_group_size,
                "ri_capacity": s.ri_capacity,
                "privacy_threshold": s.privacy_threshold,
                "lock_enabled": s.lock_enabled,
            },
            "rules": [[r.context, r.action, r.validity, r.issued_at] for r in self.rules],
            "metric": self.metric.value,
            "locks": [[l.true_id, l.duration, l.priority] for l in self.locks],
            "incentives": [[g.true_id, g.credits] for g in self.incentives],
            "policy_updates": [
                [p.true_id, p.min_usage_duration, p.max_parallel, p.reuse_allowed]
                for p in self.policy_updates
            ],
        }
