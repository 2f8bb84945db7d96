import json
import math

import pytest

from sdlpsim.adversary import Capability, Power
from sdlpsim.controller import (
    AttackerModelEstimate,
    ControllerConfig,
    PrivacyLedger,
    SdlpController,
    compute_settings,
    incentive_apply,
    learning_update,
    privacy_update,
    pseudonym_rules_plan,
    safety_monitor,
    select_privacy_metric,
    select_strategy,
    sybil_exchange,
)
from sdlpsim.metrics import MixEvent, PrivacyMetric
from sdlpsim.protocol import ContextReport, VehicleReportRow
from sdlpsim.pseudonyms import ChangeRecord, PseudonymPolicy
from sdlpsim.strategies import StrategyId, StrategySettings


def report(time=0.0, contexts=(), dangerous=(), selfish=(), rho=None,
           stale=0, bridged=0, risk=0.0):
    rows = tuple(VehicleReportRow(i, ctx, 10.0, 1.0) for i, ctx in enumerate(contexts))
    return ContextReport(time=time, vehicles=rows, safety_risk=risk,
                         stale_pairs=stale, missing_vehicles=0, guest_entries=0,
                         dangerous_ids=tuple(dangerous), selfish_ids=tuple(selfish),
                         linkage_ratio=rho, silences_bridged=bridged)


def estimate(**kw):
    return AttackerModelEstimate(**kw)


class TestSelectStrategy:
    CASES = {
        ("intersection", Capability.SYNTACTIC_AND_SEMANTIC): StrategyId.UPCS,
        ("intersection", Capability.SYNTACTIC_ONLY): StrategyId.SOCIAL_SPOTS,
        ("congestion", Capability.SYNTACTIC_AND_SEMANTIC): StrategyId.TAPCS,
        ("congestion", Capability.SYNTACTIC_ONLY): StrategyId.TAPCS,
        ("infrastructure", Capability.SYNTACTIC_AND_SEMANTIC): StrategyId.PRIVANET,
        ("infrastructure", Capability.SYNTACTIC_ONLY): StrategyId.PRIVANET,
    }

    def test_decision_table_exhaustive(self):
        for (ctx, cap), expected in self.CASES.items():
            for prev in StrategyId:
                got = select_strategy(ctx, estimate(capability=cap), prev)
                assert got is expected, (ctx, cap, prev)

    def test_open_road_retains_previous(self):
        for cap in Capability:
            for prev in StrategyId:
                assert select_strategy("open", estimate(capability=cap), prev) is prev


class TestSelectPrivacyMetric:
    def test_ladder(self):
        assert select_privacy_metric(Power.SIMPLE) is PrivacyMetric.SIZE
        assert select_privacy_metric(Power.MEDIUM) is PrivacyMetric.ENTROPY
        assert select_privacy_metric(Power.ADVANCED) is PrivacyMetric.ENTROPY


class TestComputeSettings:
    def test_red_duration_passes_through(self):
        base = StrategySettings(red_light_duration=30.0)
        out = compute_settings(StrategyId.UPCS, report(), base)
        assert out.red_light_duration == 30.0

    def test_tapcs_silence_capped_on_stale_pairs(self):
        base = StrategySettings(silence_duration=5.0)
        out = compute_settings(StrategyId.TAPCS, report(stale=3), base)
        assert out.silence_duration <= 2.0
        out2 = compute_settings(StrategyId.TAPCS, report(stale=0), base)
        assert out2.silence_duration == 5.0

    def test_lock_enabled_with_dangerous_vehicles(self):
        base = StrategySettings(lock_enabled=False)
        out = compute_settings(StrategyId.UPCS, report(dangerous=(1, 2)), base)
        assert out.lock_enabled

    def test_privanet_fields_from_base(self):
        base = StrategySettings(privacy_threshold=3.0, ri_capacity=4)
        out = compute_settings(StrategyId.PRIVANET, report(), base)
        assert out.privacy_threshold == 3.0
        assert out.ri_capacity == 4


class TestPrivacyUpdate:
    def ledger(self, level=5.0, n=1, cap=10.0):
        return PrivacyLedger(cap=cap, levels={i: level for i in range(n)},
                             last_change={i: 0.0 for i in range(n)})

    def test_linear_decay(self):
        led = privacy_update(self.ledger(5.0), [], estimate(sensitivity_alpha=0.1), 10.0)
        assert led.levels[0] == pytest.approx(4.0, abs=1e-12)

    def test_clamped_at_zero(self):
        led = privacy_update(self.ledger(0.5), [], estimate(sensitivity_alpha=0.1), 10.0)
        assert led.levels[0] == pytest.approx(0.0, abs=1e-12)

    def test_alpha_zero_identity(self):
        led = privacy_update(self.ledger(3.0), [], estimate(sensitivity_alpha=0.0), 10.0)
        assert led.levels[0] == 3.0

    def test_uniform_four_event_gains_two_bits(self):
        event = MixEvent(time=1.0, context="intersection:i0",
                         participants=(0, 1, 2, 3), changers=(0, 1, 2, 3),
                         distribution=(0.25,) * 4)
        led = privacy_update(self.ledger(1.0, n=4), [event], estimate(), 0.0)
        for vid in range(4):
            assert led.levels[vid] == pytest.approx(3.0)
            assert led.last_change[vid] == 1.0

    def test_gain_capped(self):
        event = MixEvent(time=1.0, context="x", participants=(0,), changers=(0,),
                         distribution=(1.0,))
        led = self.ledger(9.9, cap=10.0)
        big = MixEvent(time=1.0, context="x", participants=(0, 1, 2, 3),
                       changers=(0,), distribution=(0.25,) * 4)
        privacy_update(led, [big], estimate(), 0.0)
        assert led.levels[0] == 10.0

    def test_monotone_in_alpha(self):
        events = [MixEvent(time=5.0, context="x", participants=(0, 1),
                           changers=(0, 1), distribution=(0.5, 0.5))]
        lows, highs = self.ledger(6.0, n=2), self.ledger(6.0, n=2)
        for _ in range(20):
            privacy_update(lows, events, estimate(sensitivity_alpha=0.1), 0.5)
            privacy_update(highs, events, estimate(sensitivity_alpha=0.3), 0.5)
            for vid in range(2):
                assert highs.levels[vid] <= lows.levels[vid] + 1e-12

    def test_levels_stay_in_bounds(self):
        led = PrivacyLedger.for_vehicles(range(8), cap=math.log2(8), initial=2.0)
        event = MixEvent(time=0.0, context="x", participants=tuple(range(8)),
                         changers=tuple(range(8)), distribution=(0.125,) * 8)
        for k in range(50):
            privacy_update(led, [event] if k % 7 == 0 else [],
                           estimate(sensitivity_alpha=0.2), 0.5)
            for level in led.levels.values():
                assert 0.0 <= level <= math.log2(8) + 1e-12


class TestSafetyMonitor:
    def test_lock_per_dangerous_vehicle(self):
        locks = safety_monitor(report(dangerous=range(10)), lock_span=120.0)
        assert len(locks) == 10
        assert all(l.priority == 0 and l.duration == 120.0 for l in locks)

    def test_no_dangerous_no_locks(self):
        assert safety_monitor(report(), lock_span=120.0) == ()

    def test_span_clamped_to_255(self):
        locks = safety_monitor(report(dangerous=(1,)), lock_span=300.0)
        assert locks[0].duration == 255.0


class TestLearningUpdate:
    def test_threshold_table(self):
        # oracle: direct comparison against the fixed thresholds
        for rho, expected in ((0.1, Power.SIMPLE), (0.45, Power.MEDIUM), (0.9, Power.ADVANCED)):
            out = learning_update(estimate(), report(rho=rho), alpha_scale=0.3)
            assert out.power is expected
            assert out.sensitivity_alpha == pytest.approx(0.3 * rho)

    def test_missing_rho_is_identity(self):
        est = estimate(power=Power.MEDIUM, sensitivity_alpha=0.2)
        assert learning_update(est, report(rho=None), 0.3) is est

    def test_bridged_silences_escalate_capability(self):
        est = estimate(capability=Capability.SYNTACTIC_ONLY)
        out = learning_update(est, report(rho=0.1, bridged=2), 0.3)
        assert out.capability is Capability.SYNTACTIC_AND_SEMANTIC


class TestIncentiveApply:
    def test_disabled_for_upcs_and_tapcs(self):
        for strat in (StrategyId.UPCS, StrategyId.TAPCS):
            grants, updates = incentive_apply(strat, [1, 2], 1.0, 0.2, {1: 0.5, 2: 0.5})
            assert grants == () and updates == {}

    def test_socialspots_credit_raises_probability(self):
        grants, updates = incentive_apply(StrategyId.SOCIAL_SPOTS, [7], 1.0, 0.2, {7: 0.5})
        assert len(grants) == 1
        assert grants[0].true_id == 7 and grants[0].credits == 1.0
        assert updates[7] == pytest.approx(0.7)

    def test_probability_capped_at_one(self):
        _, updates = incentive_apply(StrategyId.PRIVANET, [3], 5.0, 0.3, {3: 0.9})
        assert updates[3] == 1.0

    def test_zero_credits_no_op(self):
        grants, updates = incentive_apply(StrategyId.SOCIAL_SPOTS, [1], 0.0, 0.2, {1: 0.5})
        assert grants == () and updates == {}


class TestPseudonymRulesPlan:
    def test_alert_doubles_min_usage(self):
        base = PseudonymPolicy(min_usage_duration=60.0)
        updates = pseudonym_rules_plan(base, [4])
        per_vehicle = [u for u in updates if u.true_id == 4]
        assert per_vehicle and per_vehicle[0].min_usage_duration == 120.0

    def test_no_alerts_base_only(self):
        base = PseudonymPolicy()
        updates = pseudonym_rules_plan(base, [])
        assert len(updates) == 1 and updates[0].true_id is None

    def test_reuse_flag_propagates(self):
        base = PseudonymPolicy(reuse_allowed=False)
        for u in pseudonym_rules_plan(base, [1, 2]):
            assert u.reuse_allowed is False


class TestSybilExchange:
    def changes(self, n):
        return [ChangeRecord(float(i), i, 100 + i, 200 + i, "open") for i in range(n)]

    def test_outbound_records(self, tmp_path):
        out = tmp_path / "sybil_out.jsonl"
        written, alerts = sybil_exchange(self.changes(3), out, tmp_path / "alerts.jsonl")
        assert written == 3
        assert alerts == []
        assert len(out.read_text().splitlines()) == 3

    def test_inbound_alert_parsed(self, tmp_path):
        alerts_path = tmp_path / "sybil_alerts.jsonl"
        alerts_path.write_text(json.dumps({"true_id": 9, "reason": "sybil"}) + "\n")
        _, alerts = sybil_exchange([], tmp_path / "out.jsonl", alerts_path)
        assert alerts == [9]

    def test_unreadable_file_yields_empty(self, tmp_path, caplog):
        alerts_path = tmp_path / "sybil_alerts.jsonl"
        alerts_path.write_text("{not json\n")
        _, alerts = sybil_exchange([], tmp_path / "out.jsonl", alerts_path)
        assert alerts == []


class TestSdlpController:
    def make(self, mode="sdn", **kw):
        cfg = ControllerConfig(mode=mode, strategy=StrategyId.UPCS,
                               base_settings=StrategySettings(red_light_duration=30.0),
                               static_metric=PrivacyMetric.ENTROPY, epoch=5.0, **kw)
        return SdlpController(cfg, estimate())

    def test_static_emits_exactly_one_directive(self):
        ctl = self.make(mode="static")
        first = ctl.maybe_directive(report(time=0.0), {})
        assert first is not None
        assert first.locks == ()
        for t in (5.0, 10.0, 300.0):
            assert ctl.maybe_directive(report(time=t), {}) is None
        assert ctl.directives_emitted == 1

    def test_sdn_respects_epoch(self):
        ctl = self.make()
        assert ctl.maybe_directive(report(time=0.0, contexts=["intersection"]), {}) is not None
        assert ctl.maybe_directive(report(time=2.5, contexts=["intersection"]), {}) is None
        assert ctl.maybe_directive(report(time=5.0, contexts=["intersection"]), {}) is not None

    def test_power_schedule_drives_metric_trace(self):
        # one trace entry per attacker phase: select, change, then keep
        ctl = self.make(power_schedule=((0.0, Power.SIMPLE), (200.0, Power.MEDIUM),
                                        (400.0, Power.ADVANCED)))
        for t in range(0, 600, 5):
            ctl.maybe_directive(report(time=float(t), contexts=["congestion"]), {})
        assert ctl.metric_history == [PrivacyMetric.SIZE, PrivacyMetric.ENTROPY,
                                      PrivacyMetric.ENTROPY]
        assert ctl.metric_trace() == "size->entropy->entropy"

    def test_locks_ride_on_directives(self):
        ctl = self.make(lock_span=300.0)
        d = ctl.maybe_directive(report(time=0.0, contexts=["intersection"],
                                       dangerous=(1, 2, 3)), {})
        assert len(d.locks) == 3
        assert all(l.duration == 255.0 and l.priority in (0, 1) for l in d.locks)
