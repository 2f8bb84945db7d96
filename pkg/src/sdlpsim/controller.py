"""Control plane: context-aware strategy selection, privacy-metric selection,
parameter settings, the linear privacy model, safety locks, learning,
incentives, pseudonym rule planning, and the misbehaviour-exchange stub.

In sdn mode the controller re-plans once per reporting epoch; in static mode
it emits exactly one directive at t = 0 and stays quiet afterwards.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

from .adversary import Capability, CoverageKind, Power
from .metrics import MixEvent, PrivacyMetric, entropy
from .protocol import (
    ContextReport,
    ControlDirective,
    IncentiveGrant,
    LockDirective,
    PolicyUpdate,
)
from .pseudonyms import MAX_LOCK_S, ChangeRecord, PseudonymPolicy
from .strategies import StrategyId, StrategyRule, StrategySettings

log = logging.getLogger(__name__)

LEARNING_SIMPLE_BELOW = 0.3
LEARNING_MEDIUM_BELOW = 0.6

# metric each strategy ships with when the controller is not adapting it
TABLE_DEFAULT_METRIC = {
    StrategyId.UPCS: PrivacyMetric.ENTROPY,
    StrategyId.SOCIAL_SPOTS: PrivacyMetric.SIZE,
    StrategyId.TAPCS: PrivacyMetric.ENTROPY,
    StrategyId.PRIVANET: PrivacyMetric.SIZE,
}


@dataclass(slots=True)
class AttackerModelEstimate:
    coverage: CoverageKind = CoverageKind.MID_SIZED
    capability: Capability = Capability.SYNTACTIC_AND_SEMANTIC
    power: Power = Power.SIMPLE
    sensitivity_alpha: float = 0.0

    def __post_init__(self):
        if self.sensitivity_alpha < 0:
            raise ValueError("sensitivity_alpha must be >= 0")


@dataclass(slots=True)
class PrivacyLedger:
    cap: float
    levels: dict[int, float] = field(default_factory=dict)
    last_change: dict[int, float] = field(default_factory=dict)

    @classmethod
    def for_vehicles(cls, ids: Sequence[int], cap: float, initial: float) -> "PrivacyLedger":
        initial = min(max(0.0, initial), cap)
        return cls(cap=cap, levels={i: initial for i in ids},
                   last_change={i: 0.0 for i in ids})


def privacy_update(
    ledger: PrivacyLedger,
    events: Sequence[MixEvent],
    attacker: AttackerModelEstimate,
    dt: float,
) -> PrivacyLedger:
    """Linear decay by the sensitivity parameter, then event gains.

    Every changer in a mix event gains the entropy of the event's
    adversary-view assignment distribution, capped at log2(N).
    """
    alpha = attacker.sensitivity_alpha
    if alpha > 0:
        for vid in ledger.levels:
            ledger.levels[vid] = max(0.0, ledger.levels[vid] - alpha * dt)
    for event in events:
        gain = entropy(event.distribution)
        for vid in event.changers:
            ledger.levels[vid] = min(ledger.cap, ledger.levels[vid] + gain)
            ledger.last_change[vid] = event.time
    return ledger


def select_strategy(dominant_context: str, attacker: AttackerModelEstimate,
                    previous: StrategyId) -> StrategyId:
    """Decision table over (dominant context, linking capability)."""
    if dominant_context == "intersection":
        if attacker.capability is Capability.SYNTACTIC_AND_SEMANTIC:
            return StrategyId.UPCS
        return StrategyId.SOCIAL_SPOTS
    if dominant_context == "congestion":
        return StrategyId.TAPCS
    if dominant_context == "infrastructure":
        return StrategyId.PRIVANET
    return previous


def select_privacy_metric(power: Power) -> PrivacyMetric:
    """Set-size for a simple attacker, entropy once distinguishing
    probabilities stop being equal."""
    if power is Power.SIMPLE:
        return PrivacyMetric.SIZE
    return PrivacyMetric.ENTROPY


def compute_settings(
    selected: StrategyId,
    report: Optional[ContextReport],
    base: StrategySettings,
) -> StrategySettings:
    """Tune the configured settings with safety feedback: stale pairs cap the
    silence at the 2 s bound, any dangerous vehicle enables locking."""
    settings = base
    if report is not None:
        if report.dangerous_ids:
            settings = replace(settings, lock_enabled=True)
        if selected is StrategyId.TAPCS and report.stale_pairs > 0:
            settings = replace(settings, silence_duration=min(settings.silence_duration, 2.0))
    return settings


def safety_monitor(report: ContextReport, lock_span: float) -> tuple[LockDirective, ...]:
    """One lock per dangerous vehicle, span clamped to the 255 s maximum,
    priority 0."""
    span = min(lock_span, MAX_LOCK_S)
    return tuple(LockDirective(vid, span, 0) for vid in sorted(report.dangerous_ids))


def learning_update(attacker: AttackerModelEstimate, report: ContextReport,
                    alpha_scale: float) -> AttackerModelEstimate:
    """Re-estimate the attacker from the observed linkage ratio; absent
    feedback leaves the estimate alone."""
    rho = report.linkage_ratio
    if rho is None:
        return attacker
    if rho < LEARNING_SIMPLE_BELOW:
        power = Power.SIMPLE
    elif rho < LEARNING_MEDIUM_BELOW:
        power = Power.MEDIUM
    else:
        power = Power.ADVANCED
    capability = attacker.capability
    if report.silences_bridged > 0:
        capability = Capability.SYNTACTIC_AND_SEMANTIC
    return replace(attacker, power=power, capability=capability,
                   sensitivity_alpha=alpha_scale * rho)


def incentive_apply(
    selected: StrategyId,
    selfish_ids: Sequence[int],
    credits_per_event: float,
    credit_delta: float,
    cooperative_probs: dict[int, float],
) -> tuple[tuple[IncentiveGrant, ...], dict[int, float]]:
    """Grant credits to selfish vehicles and raise their cooperation
    probability; disabled entirely for UPCS and TAPCS."""
    if selected in (StrategyId.UPCS, StrategyId.TAPCS) or credits_per_event <= 0:
        return (), {}
    grants = []
    updates = {}
    for vid in sorted(set(selfish_ids)):
        grants.append(IncentiveGrant(vid, credits_per_event))
        prob = cooperative_probs.get(vid, 0.0)
        updates[vid] = min(1.0, prob + credit_delta * credits_per_event)
    return tuple(grants), updates


def pseudonym_rules_plan(
    base_policy: PseudonymPolicy,
    sybil_alerts: Sequence[int],
) -> tuple[PolicyUpdate, ...]:
    """Broadcast the planned pseudonym policy; a misbehaviour alert doubles
    the suspect's minimum usage duration."""
    updates = [PolicyUpdate(None, base_policy.min_usage_duration,
                            base_policy.max_parallel, base_policy.reuse_allowed)]
    for vid in sorted(set(sybil_alerts)):
        updates.append(PolicyUpdate(vid, base_policy.min_usage_duration * 2,
                                    base_policy.max_parallel, base_policy.reuse_allowed))
    return tuple(updates)


def sybil_exchange(
    changes: Sequence[ChangeRecord],
    out_path: Path,
    alerts_path: Path,
) -> tuple[int, list[int]]:
    """File exchange with the external misbehaviour-detection controller:
    append pseudonym-change summaries, read back suspect alerts if any."""
    written = 0
    with open(out_path, "a") as f:
        for rec in changes:
            f.write(json.dumps({"time": rec.time, "true_id": rec.true_id,
                                "old": rec.old_id, "new": rec.new_id,
                                "context": rec.context}) + "\n")
            written += 1
    alerts: list[int] = []
    if alerts_path.exists():
        try:
            with open(alerts_path) as f:
                for line in f:
                    line = line.strip()
                    if not line:
                        continue
                    alerts.append(int(json.loads(line)["true_id"]))
        except (OSError, ValueError, KeyError) as err:
            log.warning("unreadable sybil alert file %s: %s", alerts_path, err)
            return written, []
    return written, alerts


RULE_SETS = {
    StrategyId.UPCS: (("intersection", "silence"), ("intersection", "change")),
    StrategyId.SOCIAL_SPOTS: (("intersection", "change"),),
    StrategyId.TAPCS: (("congestion", "silence"), ("congestion", "change")),
    StrategyId.PRIVANET: (("infrastructure", "enter"), ("infrastructure", "change"),
                          ("infrastructure", "exit")),
}


@dataclass(slots=True)
class ControllerConfig:
    mode: str  # static | sdn
    strategy: StrategyId
    base_settings: StrategySettings
    static_metric: PrivacyMetric
    lock_span: float = 120.0
    epoch: float = 5.0
    alpha_scale: float = 0.3
    learning_enabled: bool = False
    credits_per_event: float = 1.0
    credit_delta: float = 0.2
    rule_validity: float = 1e9
    power_schedule: tuple[tuple[float, Power], ...] = ()
    pseudonym_policy: PseudonymPolicy = PseudonymPolicy()


class SdlpController:
    """Epoch-driven planner emitting ControlDirectives from ContextReports."""

    def __init__(self, config: ControllerConfig, attacker: AttackerModelEstimate,
                 out_dir: Optional[Path] = None):
        self.config = config
        self.attacker = attacker
        self.selected = config.strategy
        self.metric_history: list[PrivacyMetric] = []
        self.directives_emitted = 0
        self.out_dir = out_dir
        self._next_epoch = 0.0
        self._prob_updates: dict[int, float] = {}
        self._last_power: Optional[Power] = None

    def _rules(self, selected: StrategyId, now: float) -> tuple[StrategyRule, ...]:
        validity = self.config.rule_validity
        if self.config.mode == "sdn":
            validity = max(3 * self.config.epoch, 2 * self.config.epoch + 1.0)
        return tuple(StrategyRule(ctx, action, validity, now)
                     for ctx, action in RULE_SETS[selected])

    def _record_metric(self, metric: PrivacyMetric) -> None:
        # one entry per attacker-power phase, so "keep the metric" on an
        # escalation still shows up in the trace
        if self._last_power is not self.attacker.power or not self.metric_history:
            self.metric_history.append(metric)
            self._last_power = self.attacker.power

    def metric_trace(self) -> str:
        return "->".join(m.value for m in self.metric_history)

    def _apply_power_schedule(self, now: float) -> None:
        for t, power in self.config.power_schedule:
            if now >= t:
                self.attacker.power = power

    def maybe_directive(
        self,
        report: ContextReport,
        cooperative_probs: dict[int, float],
        sybil_alerts: Sequence[int] = (),
    ) -> Optional[ControlDirective]:
        """Static mode answers only the very first report; sdn mode re-plans
        at every epoch boundary."""
        now = report.time
        if self.config.mode == "static":
            if self.directives_emitted > 0:
                return None
            settings = self.config.base_settings
            metric = self.config.static_metric
            self._record_metric(metric)
            directive = ControlDirective(
                issued_at=now, selected=self.selected, settings=settings,
                rules=self._rules(self.selected, now), metric=metric,
            )
            self.directives_emitted += 1
            return directive

        if now + 1e-9 < self._next_epoch:
            return None
        self._next_epoch = now + self.config.epoch

        self._apply_power_schedule(now)
        if self.config.learning_enabled:
            self.attacker = learning_update(self.attacker, report, self.config.alpha_scale)
        self.selected = select_strategy(report.dominant_context(), self.attacker, self.selected)
        settings = compute_settings(self.selected, report, self.config.base_settings)
        metric = select_privacy_metric(self.attacker.power)
        self._record_metric(metric)
        locks = safety_monitor(report, self.config.lock_span)
        incentives, prob_updates = incentive_apply(
            self.selected, report.selfish_ids, self.config.credits_per_event,
            self.config.credit_delta, cooperative_probs)
        policy_updates = pseudonym_rules_plan(self.config.pseudonym_policy, sybil_alerts)
        directive = ControlDirective(
            issued_at=now, selected=self.selected, settings=settings,
            rules=self._rules(self.selected, now), metric=metric,
            locks=locks, incentives=incentives, policy_updates=policy_updates,
        )
        self.directives_emitted += 1
        self._prob_updates = prob_updates
        return directive

    def last_prob_updates(self) -> dict[int, float]:
        updates = self._prob_updates
        self._prob_updates = {}
        return updates
