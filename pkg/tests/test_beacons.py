from sdlpsim.beacons import (
    broadcast_round,
    ldm_anomalies,
    new_ldms,
    safety_risk,
    update_ldms,
)
from sdlpsim.world import Infrastructure, RoadMap, Segment, VehicleState, WorldState


def ring_map():
    return RoadMap([Segment("s0", 2000.0, 14.0)], [], [],
                   [Infrastructure("r0", 1500.0, 2, 20.0)])


def make_world(offsets, dangerous=(), time=0.0):
    vehicles = []
    for i, off in enumerate(offsets):
        vehicles.append(VehicleState(true_id=i, segment="s0", offset=off,
                                     speed=10.0, desired_speed=10.0,
                                     dangerous=i in dangerous))
    return WorldState(time=time, dt=0.5, vehicles=vehicles, map=ring_map(), rng_seed=0)


def actives(world, start=100):
    return {v.true_id: start + v.true_id for v in world.vehicles}


class TestBroadcastRound:
    def test_all_active_emit(self):
        w = make_world(range(0, 100, 10))
        cams = broadcast_round(w, set(), 0.5, actives(w))
        assert len(cams) == 10

    def test_silent_set_suppresses(self):
        w = make_world(range(0, 100, 10))
        cams = broadcast_round(w, {0, 1, 2, 3}, 0.5, actives(w))
        assert len(cams) == 6
        assert all(sender not in {0, 1, 2, 3} for sender, _ in cams)

    def test_parked_vehicle_emits_nothing(self):
        w = make_world([10.0, 20.0])
        w.vehicles[0].inside_infrastructure = ("r0", 30.0)
        cams = broadcast_round(w, set(), 0.5, actives(w))
        assert [sender for sender, _ in cams] == [1]

    def test_off_boundary_time_emits_nothing(self):
        w = make_world([10.0], time=0.3)
        assert broadcast_round(w, set(), 0.5, actives(w)) == []

    def test_cam_carries_current_pseudonym_and_time(self):
        w = make_world([10.0], time=4.5)
        ((sender, cam),) = broadcast_round(w, set(), 0.5, actives(w))
        assert sender == 0
        assert cam.pseudonym == 100
        assert cam.timestamp == 4.5


class TestUpdateLdms:
    def test_in_range_entry_created(self):
        w = make_world([0.0, 100.0])
        ldms = new_ldms(w)
        cams = broadcast_round(w, set(), 0.5, actives(w))
        update_ldms(ldms, cams, w, radio_range=300.0)
        assert 100 in ldms[1].entries
        assert 101 in ldms[0].entries

    def test_out_of_range_ignored(self):
        w = make_world([0.0, 400.0])
        ldms = new_ldms(w)
        cams = broadcast_round(w, set(), 0.5, actives(w))
        update_ldms(ldms, cams, w, radio_range=300.0)
        assert ldms[1].entries == {}

    def test_range_wraps_around_ring(self):
        w = make_world([10.0, 1950.0])  # 60 m apart across the wrap point
        ldms = new_ldms(w)
        cams = broadcast_round(w, set(), 0.5, actives(w))
        update_ldms(ldms, cams, w, radio_range=300.0)
        assert 101 in ldms[0].entries

    def test_guest_entry_after_change_without_silence(self):
        # the receiver keeps the old pseudonym until expiry next to the new one
        w = make_world([0.0, 100.0])
        ldms = new_ldms(w)
        update_ldms(ldms, broadcast_round(w, set(), 0.5, actives(w)), w)
        w.time = 0.5
        changed = dict(actives(w))
        changed[0] = 777
        update_ldms(ldms, broadcast_round(w, set(), 0.5, changed), w)
        assert 100 in ldms[1].entries and 777 in ldms[1].entries

    def test_expiry_evicts(self):
        w = make_world([0.0, 100.0])
        ldms = new_ldms(w, expiry=3.0)
        update_ldms(ldms, broadcast_round(w, set(), 0.5, actives(w)), w)
        w.time = 4.0
        update_ldms(ldms, [], w)
        assert ldms[1].entries == {}

    def test_no_future_last_seen(self):
        w = make_world([0.0, 50.0, 120.0], time=2.0)
        ldms = new_ldms(w)
        update_ldms(ldms, broadcast_round(w, set(), 0.5, actives(w)), w)
        for ldm in ldms.values():
            for e in ldm.entries.values():
                assert e.last_seen <= w.time


class TestSafetyRisk:
    def run_steps(self, silent_after=None, steps=10, dangerous=(0,)):
        """Drive a 3-vehicle fixture, optionally silencing vehicle 0."""
        w = make_world([0.0, 50.0, 100.0], dangerous=dangerous)
        ldms = new_ldms(w)
        act = actives(w)
        risks = []
        for k in range(steps):
            w.time = k * 0.5
            silent = set()
            if silent_after is not None and w.time >= silent_after:
                silent = {0}
            update_ldms(ldms, broadcast_round(w, silent, 0.5, act), w)
            risks.append(safety_risk(w, ldms, 2.0, act, awareness_range=150.0))
        return risks

    def test_zero_when_everyone_beacons(self):
        assert self.run_steps() == [0.0] * 10

    def test_one_when_dangerous_silent_past_bound(self):
        risks = self.run_steps(silent_after=1.0, steps=12)
        assert risks[-1] == 1.0

    def test_half_when_half_of_pairs_stale(self):
        # 2 dangerous x 2 neighbours each = 4 pairs; silencing vehicle 0
        # long enough staleness exactly its 2 pairs -> 0.5
        w = make_world([0.0, 50.0, 100.0], dangerous=(0, 1))
        ldms = new_ldms(w)
        act = actives(w)
        for k in range(12):
            w.time = k * 0.5
            silent = {0} if w.time >= 1.0 else set()
            update_ldms(ldms, broadcast_round(w, silent, 0.5, act), w)
        assert safety_risk(w, ldms, 2.0, act, awareness_range=150.0) == 0.5

    def test_monotone_in_silence_duration(self):
        w_short = self.run_steps(silent_after=4.0, steps=12)
        w_long = self.run_steps(silent_after=1.0, steps=12)
        assert sum(w_long) >= sum(w_short)

    def test_zero_pairs_defined_as_zero(self):
        w = make_world([0.0, 50.0])  # nobody dangerous
        assert safety_risk(w, new_ldms(w), 2.0, actives(w)) == 0.0

    def test_silence_within_bound_keeps_risk_zero(self):
        # silence of 1.5 s with 0.5 s beacons never exceeds the 2 s bound
        w = make_world([0.0, 50.0], dangerous=(0,))
        ldms = new_ldms(w)
        act = actives(w)
        risks = []
        for k in range(40):
            w.time = k * 0.5
            in_silence = (k % 8) in (1, 2, 3)  # 1.5 s silent every 4 s
            update_ldms(ldms, broadcast_round(w, {0} if in_silence else set(), 0.5, act), w)
            risks.append(safety_risk(w, ldms, 2.0, act))
        assert risks == [0.0] * 40


class TestLdmAnomalies:
    def setup_ldms(self, w, act, rounds=4):
        ldms = new_ldms(w)
        for k in range(rounds):
            w.time = k * 0.5
            update_ldms(ldms, broadcast_round(w, set(), 0.5, act), w)
        return ldms

    def test_quiet_traffic_has_no_anomalies(self):
        w = make_world([0.0, 50.0, 100.0])
        act = actives(w)
        owned = {i: {p} for i, p in act.items()}
        ldms = self.setup_ldms(w, act)
        assert ldm_anomalies(w, ldms, act, owned) == (0, 0)

    def test_mid_silence_vehicle_goes_missing(self):
        w = make_world([0.0, 50.0, 100.0])
        act = actives(w)
        owned = {i: {p} for i, p in act.items()}
        ldms = self.setup_ldms(w, act)
        for k in range(4, 14):  # 5 s of silence, beyond expiry
            w.time = k * 0.5
            update_ldms(ldms, broadcast_round(w, {0}, 0.5, act), w)
        missing, _ = ldm_anomalies(w, ldms, act, owned)
        assert missing >= 1

    def test_change_without_silence_leaves_guests(self):
        w = make_world([0.0, 50.0, 100.0])
        act = actives(w)
        ldms = self.setup_ldms(w, act)
        act2 = dict(act)
        act2[0] = 999
        owned = {i: {act[i], act2[i]} for i in act}
        w.time = 2.0
        update_ldms(ldms, broadcast_round(w, set(), 0.5, act2), w)
        missing, guests = ldm_anomalies(w, ldms, act2, owned)
        assert guests >= 1
        assert missing == 0
