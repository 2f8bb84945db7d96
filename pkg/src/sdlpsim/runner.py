"""Scenario runner: one deterministic stepped loop wiring the ground-truth
world, beacon plane, strategy engine, pseudonym pools, controller and
adversary together, plus run comparison and seeded batches.

Step order: directive ingestion, context detection, strategy ticks, action
application (changes, parking), mix-event accounting and privacy update, the
beacon round with LDM ingestion, per-step safety metrics, adversary linking,
epoch reporting, then the mobility step. Directives emitted at an epoch take
effect at the next step boundary.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

from . import adversary as adv
from . import beacons, metrics
from .config import ScenarioConfig, config_snapshot
from .controller import (
    AttackerModelEstimate,
    ControllerConfig,
    PrivacyLedger,
    SdlpController,
    privacy_update,
    sybil_exchange,
)
from .metrics import MixEvent, RunSummary
from .protocol import ContextReport, LockDirective, VehicleReportRow
from .pseudonyms import (
    ChangeRecord,
    LockState,
    PseudonymAuthority,
    apply_lock,
    assert_unique_actives,
    can_change,
    change_pseudonym,
)
from .strategies import (
    ChangePseudonym,
    EnterInfrastructure,
    EnterSilence,
    ExitInfrastructure,
    ExitSilence,
    Hold,
    StrategyEngine,
    inspector_ingest,
)
from .world import (
    SignalizedIntersection,
    context_kind,
    detect_context,
    populate_ring,
    step_world,
)

log = logging.getLogger(__name__)


def _context_label(ctx) -> str:
    kind = context_kind(ctx)
    ident = getattr(ctx, "id", None) or getattr(ctx, "zone_id", None)
    return f"{kind}:{ident}" if ident else kind


@dataclass(slots=True)
class RunArtifacts:
    out_dir: Path
    summary: RunSummary
    change_log: list[ChangeRecord]
    lock_grants: list[tuple[float, LockDirective]]
    events: list[MixEvent]
    metric_trace: str
    cam_rounds: list[tuple[float, tuple]] = field(default_factory=list, repr=False)
    controller: Optional[SdlpController] = field(default=None, repr=False)
    tracker: Optional[adv.Adversary] = field(default=None, repr=False)
    pools: dict = field(default_factory=dict, repr=False)


def _schedule_power(deployment: adv.SnifferDeployment,
                    schedule: Sequence[tuple[float, adv.Power]],
                    now: float) -> adv.SnifferDeployment:
    power = deployment.power
    for t, p in schedule:
        if now >= t:
            power = p
    if power is deployment.power:
        return deployment
    return replace(deployment, power=power)


def run_scenario(config: ScenarioConfig, out_dir: Path | str,
                 record_protocol: bool = False) -> RunArtifacts:
    """Execute one configured run and write its artifact directory."""
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    world = populate_ring(config.map, config.vehicle_count, config.seed,
                          config.dangerous_fraction, config.cooperative_prob)
    world.dt = config.dt_s
    ids = [v.true_id for v in world.vehicles]

    authority = PseudonymAuthority()
    pools = {vid: authority.new_pool(vid, config.pseudonym_policy) for vid in ids}
    locks = {vid: LockState() for vid in ids}
    ldms = beacons.new_ldms(world, config.ldm_expiry_s)
    cap = math.log2(config.vehicle_count)
    ledger = PrivacyLedger.for_vehicles(ids, cap, config.initial_privacy_bits)

    estimate = AttackerModelEstimate(
        coverage=config.attacker.coverage,
        capability=config.attacker.capability,
        power=config.attacker.power,
        sensitivity_alpha=config.alpha,
    )
    controller = SdlpController(ControllerConfig(
        mode=config.mode, strategy=config.strategy,
        base_settings=config.settings, static_metric=config.static_metric,
        lock_span=config.lock_span_s, epoch=config.reporting_epoch_s,
        alpha_scale=config.alpha_scale, learning_enabled=config.learning_enabled,
        credits_per_event=config.credits_per_event, credit_delta=config.credit_delta,
        rule_validity=config.duration_s + 1.0,
        power_schedule=config.attacker.power_schedule,
        pseudonym_policy=config.pseudonym_policy,
    ), estimate)

    engine = StrategyEngine(random.Random(f"{config.seed}-engine"))
    deployment = config.attacker.deployment()
    tracker = adv.Adversary(deployment, config.map, config.seed, config.beacon_interval_s)

    change_log: list[ChangeRecord] = []
    epoch_changes: list[ChangeRecord] = []
    action_rows: list[tuple] = []
    trace_rows: list[tuple] = []
    risk_trace: list[float] = []
    events: list[MixEvent] = []
    lock_grants: list[tuple[float, LockDirective]] = []
    cam_rounds: list[tuple[float, tuple]] = []
    last_broadcast = {vid: (world.linear_pos(world.vehicle(vid)),
                            world.vehicle(vid).speed, 0.0) for vid in ids}
    sybil_out = out_dir / "sybil_out.jsonl"
    sybil_alerts_path = out_dir / "sybil_alerts.jsonl"
    sybil_out.write_text("")
    alerts: list[int] = []

    protocol_f = open(out_dir / "protocol.jsonl", "w") if record_protocol else None

    def record_protocol_line(direction: str, payload: dict) -> None:
        if protocol_f is not None:
            protocol_f.write(json.dumps({"dir": direction, **payload}, sort_keys=True) + "\n")

    def build_report(t: float, contexts, risk: float, stale: int,
                     missing: int, guests: int, rho: Optional[float]) -> ContextReport:
        rows = tuple(VehicleReportRow(v.true_id, context_kind(contexts[v.true_id]),
                                      v.speed, ledger.levels[v.true_id])
                     for v in world.vehicles)
        dangerous = tuple(sorted(v.true_id for v in world.vehicles if v.dangerous))
        selfish = tuple(sorted(engine.selfish_this_step))
        return ContextReport(time=t, vehicles=rows, safety_risk=risk,
                             stale_pairs=stale, missing_vehicles=missing,
                             guest_entries=guests, dangerous_ids=dangerous,
                             selfish_ids=selfish, linkage_ratio=rho,
                             silences_bridged=tracker.bridged_links)

    def ingest(directive, t: float) -> None:
        inspector_ingest(engine.stores, directive)
        for lock in directive.locks:
            locks[lock.true_id] = apply_lock(locks[lock.true_id], t, lock.duration, lock.priority)
            lock_grants.append((t, lock))
        for vid, prob in controller.last_prob_updates().items():
            world.vehicle(vid).cooperative_prob = prob
        for update in directive.policy_updates:
            targets = [update.true_id] if update.true_id is not None else ids
            for vid in targets:
                pool = pools[vid]
                pool.policy = replace(pool.policy,
                                      min_usage_duration=update.min_usage_duration,
                                      max_parallel=update.max_parallel,
                                      reuse_allowed=update.reuse_allowed)

    pending_directive = None
    steps = int(round(config.duration_s / config.dt_s))
    epoch_steps = max(1, int(round(config.reporting_epoch_s / config.dt_s)))

    for k in range(steps):
        t = k * config.dt_s
        tracker.deployment = _schedule_power(tracker.deployment,
                                             config.attacker.power_schedule, t)

        if pending_directive is not None:
            ingest(pending_directive, t)
            pending_directive = None

        speed_threshold = config.settings.speed_threshold
        contexts = {v.true_id: detect_context(v, world,
                                              congestion_speed_threshold=speed_threshold)
                    for v in world.vehicles}

        if k == 0:
            report = build_report(0.0, contexts, 0.0, 0, 0, 0, None)
            record_protocol_line("up", {"type": "report", "payload": report.to_dict()})
            directive = controller.maybe_directive(report, {}, alerts)
            if directive is not None:
                record_protocol_line("down", {"type": "directive",
                                              "payload": directive.to_dict()})
                ingest(directive, t)

        selected = engine.stores.selected
        actives = {vid: pools[vid].active.id for vid in ids}
        actions = engine.tick_all(
            world, contexts, ledger.levels,
            {vid for vid in ids if locks[vid].locked(t)},
            lambda vid: can_change(pools[vid], locks[vid], t, 0.0) is None,
        )

        # occupancy snapshot before this step's exits, for mix accounting
        occupants_before = {}
        for v in world.vehicles:
            if v.parked:
                occupants_before.setdefault(v.inside_infrastructure[0], []).append(v.true_id)

        changers: dict[tuple[str, str], list[int]] = {}
        entries_wanted: list[tuple[int, str]] = []
        for vid in ids:
            v = world.vehicle(vid)
            ctx = contexts[vid]
            for action in actions[vid]:
                if isinstance(action, Hold):
                    continue
                if isinstance(action, EnterSilence):
                    action_rows.append((t, vid, selected.value, f"enter_silence:{action.duration:g}"))
                elif isinstance(action, ExitSilence):
                    action_rows.append((t, vid, selected.value, "exit_silence"))
                elif isinstance(action, ChangePseudonym):
                    reason = can_change(pools[vid], locks[vid], t, 0.0)
                    if reason is not None:
                        action_rows.append((t, vid, selected.value,
                                            f"change_refused:{reason.value}"))
                        continue
                    old = pools[vid].active.id
                    new = change_pseudonym(pools[vid], locks[vid], t, 0.0)
                    rec = ChangeRecord(t, vid, old, new, _context_label(ctx))
                    change_log.append(rec)
                    epoch_changes.append(rec)
                    action_rows.append((t, vid, selected.value, "change"))
                    key = (context_kind(ctx), getattr(ctx, "id", None)
                           or getattr(ctx, "zone_id", "") or "")
                    changers.setdefault(key, []).append(vid)
                elif isinstance(action, ExitInfrastructure):
                    v.inside_infrastructure = None
                    v.speed = 0.0
                    action_rows.append((t, vid, selected.value, "exit_infrastructure"))
                elif isinstance(action, EnterInfrastructure):
                    entries_wanted.append((vid, action.ri_id))
        for vid, ri_id in entries_wanted:  # entries granted after exits, id order
            ri = config.map.infrastructure_by_id(ri_id)
            if world.ri_occupancy(ri_id) < ri.capacity:
                v = world.vehicle(vid)
                v.inside_infrastructure = (ri_id, t + ri.service_time_s)
                v.segment, v.offset = config.map.from_linear(ri.position_m)
                v.speed = 0.0
                action_rows.append((t, vid, selected.value, f"enter_infrastructure:{ri_id}"))
            else:
                action_rows.append((t, vid, selected.value, "enter_refused:full"))

        step_events: list[MixEvent] = []
        ring = config.map.ring_length_m
        for (kind, ident), group in sorted(changers.items()):
            group = sorted(group)
            covered = adv.in_spans(last_broadcast[group[0]][0], tracker.spans)
            if kind == "infrastructure":
                occupants = sorted(set(occupants_before.get(ident, [])) | set(group))
                pre = [last_broadcast[m] for m in occupants]
                exit_lin = config.map.infrastructure_by_id(ident).position_m
                if covered:
                    dist = adv.occupant_exit_distribution(pre, exit_lin,
                                                          tracker.deployment, t, ring)
                else:
                    dist = [1.0 / len(occupants)] * len(occupants)
                participants = occupants
            else:
                if kind == "intersection":
                    participants = sorted(
                        v.true_id for v in world.vehicles
                        if isinstance(contexts[v.true_id], SignalizedIntersection)
                        and contexts[v.true_id].id == ident and v.speed == 0.0
                        and not v.parked)
                else:
                    participants = group
                pre = [last_broadcast[m] for m in group]
                post = [(world.linear_pos(world.vehicle(m)), world.vehicle(m).speed)
                        for m in group]
                if covered:
                    dist = adv.event_assignment_distribution(pre, post,
                                                             tracker.deployment, t, ring)
                else:
                    dist = [1.0 / len(group)] * len(group)
            step_events.append(MixEvent(
                time=t, context=f"{kind}:{ident}" if ident else kind,
                participants=tuple(participants), changers=tuple(group),
                distribution=tuple(dist)))
        events.extend(step_events)
        privacy_update(ledger, step_events, controller.attacker, config.dt_s)

        silent = engine.silent_ids()
        actives = {vid: pools[vid].active.id for vid in ids}
        cams = beacons.broadcast_round(world, silent, config.beacon_interval_s, actives)
        for sender, cam in cams:
            last_broadcast[sender] = (config.map.to_linear(cam.segment, cam.offset),
                                      cam.speed, t)
        beacons.update_ldms(ldms, cams, world, config.radio_range_m)
        risk_trace.append(beacons.safety_risk(world, ldms, config.t_safe_s, actives,
                                              config.awareness_range_m))
        if config.record_cams:
            cam_rounds.append((t, tuple(c for _, c in cams)))

        tracker.link_step([c for _, c in cams], t)

        alpha_now = controller.attacker.sensitivity_alpha
        for v in world.vehicles:
            vid = v.true_id
            trace_rows.append((t, vid, selected.value, ledger.levels[vid],
                               vid in silent, locks[vid].locked(t),
                               _context_label(contexts[vid]), actives[vid], alpha_now))

        if k > 0 and k % epoch_steps == 0:
            stale, total = beacons.stale_pair_counts(world, ldms, config.t_safe_s,
                                                     actives, config.awareness_range_m)
            # pseudonyms ever broadcast under: the active one plus retirees
            owned = {vid: {p.id for p in [pools[vid].active] + pools[vid].retired}
                     for vid in ids}
            missing, guests = beacons.ldm_anomalies(world, ldms, actives, owned,
                                                    config.awareness_range_m)
            rho = adv.tracking_success(tracker.tracks, change_log)
            report = build_report(t, contexts, risk_trace[-1], stale, missing,
                                  guests, rho)
            record_protocol_line("up", {"type": "report", "payload": report.to_dict()})
            if config.mode == "sdn":
                _, alerts = sybil_exchange(epoch_changes, sybil_out, sybil_alerts_path)
                epoch_changes = []
            directive = controller.maybe_directive(report,
                                                   {v.true_id: v.cooperative_prob
                                                    for v in world.vehicles}, alerts)
            if directive is not None:
                record_protocol_line("down", {"type": "directive",
                                              "payload": directive.to_dict()})
                pending_directive = directive

        assert_unique_actives(pools)
        step_world(world)

    if protocol_f is not None:
        protocol_f.close()

    tracking = adv.tracking_success(tracker.tracks, change_log)
    summary = metrics.summarize_run(
        scenario=config.scenario, mode=config.mode, seed=config.seed,
        trace_rows=trace_rows, risk_trace=risk_trace, events=events,
        tracking_success=tracking, changes=len(change_log),
        metric_selected=controller.metric_trace(), alpha=config.alpha,
        out_dir=out_dir,
    )

    with open(out_dir / "changes.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["time", "true_id", "old_id", "new_id", "context"])
        for rec in change_log:
            w.writerow([f"{rec.time:.2f}", rec.true_id, rec.old_id, rec.new_id, rec.context])
    with open(out_dir / "actions.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["time", "true_id", "strategy", "action"])
        for t_, vid, strat, act in action_rows:
            w.writerow([f"{t_:.2f}", vid, strat, act])
    if config.record_cams:
        with open(out_dir / "cams.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["time", "pseudonym", "segment", "offset", "speed"])
            for t_, round_cams in cam_rounds:
                for c in round_cams:
                    w.writerow([f"{t_:.2f}", c.pseudonym, c.segment,
                                f"{c.offset:.3f}", f"{c.speed:.3f}"])
    tracker.dump_tracks_csv(out_dir / "tracks.csv")
    (out_dir / "config.json").write_text(config_snapshot(config))

    return RunArtifacts(
        out_dir=out_dir, summary=summary, change_log=change_log,
        lock_grants=lock_grants, events=events,
        metric_trace=controller.metric_trace(), cam_rounds=cam_rounds,
        controller=controller, tracker=tracker, pools=pools,
    )


def replay_adversary(
    cam_rounds: Sequence[tuple[float, tuple]],
    deployment: adv.SnifferDeployment,
    road_map,
    seed: int,
    change_log: Sequence[ChangeRecord],
    power_schedule: Sequence[tuple[float, adv.Power]] = (),
    beacon_interval: float = 0.5,
) -> float:
    """Run a fresh adversary over a recorded CAM trace and score it."""
    tracker = adv.Adversary(deployment, road_map, seed, beacon_interval)
    for t, cams in cam_rounds:
        tracker.deployment = _schedule_power(tracker.deployment, power_schedule, t)
        tracker.link_step(list(cams), t)
    return adv.tracking_success(tracker.tracks, change_log)


# -- comparison and batches ------------------------------------------------------

class CompareError(ValueError):
    pass


def read_summary(run_dir: Path | str) -> dict:
    path = Path(run_dir) / "summary.csv"
    if not path.exists():
        raise CompareError(f"{run_dir} has no summary.csv")
    with open(path) as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise CompareError(f"{path} is empty")
    row = rows[0]
    for key in ("avg_privacy", "avg_safety_risk", "tracking_success", "alpha"):
        row[key] = float(row[key])
    row["scenario"] = int(row["scenario"])
    row["changes"] = int(row["changes"])
    return row


def compare_runs(run_dirs: Sequence[Path | str],
                 out_csv: Optional[Path | str] = None) -> tuple[str, list[str]]:
    """Side-by-side comparison of runs of the same scenario: a text table and
    ordering verdicts on the headline metrics."""
    if len(run_dirs) < 2:
        raise CompareError("need at least two run directories")
    summaries = [read_summary(d) for d in run_dirs]
    scenarios = {s["scenario"] for s in summaries}
    if len(scenarios) != 1:
        raise CompareError(f"mismatched scenarios: {sorted(scenarios)}")

    labels = [f"{s['mode']}/seed{s['seed']}/a{s['alpha']:g}" for s in summaries]
    metrics_shown = ["avg_privacy", "avg_safety_risk", "tracking_success", "changes"]
    lines = [" ".join(f"{'metric':<18}" for _ in range(1))
             + " ".join(f"{l:>22}" for l in labels)]
    for m in metrics_shown:
        cells = "".join(f"{s[m]:>23.6f}" if isinstance(s[m], float) else f"{s[m]:>23}"
                        for s in summaries)
        lines.append(f"{m:<18}{cells}")

    verdicts = []
    base = summaries[0]
    for other, label in zip(summaries[1:], labels[1:]):
        for m in ("avg_privacy", "avg_safety_risk", "tracking_success"):
            op = "<" if other[m] < base[m] else (">" if other[m] > base[m] else "=")
            verdicts.append(f"{m}: {label} {op} {labels[0]}")
    table = "\n".join(lines)

    if out_csv is not None:
        with open(out_csv, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["metric"] + labels)
            for m in metrics_shown:
                w.writerow([m] + [s[m] for s in summaries])
    return table, verdicts


def _run_to_dir(args) -> dict:
    config, out_dir = args
    return read_summary(run_scenario(config, out_dir).out_dir)


def batch_run(config: ScenarioConfig, seeds: int, out_dir: Path | str,
              workers: Optional[int] = None) -> dict[str, float]:
    """Run the scenario's study comparison over several seeds and report the
    pass fraction of each expected ordering.

    Scenarios 1 and 2 compare static against sdn per seed; scenario 3 also
    sweeps the sensitivity parameter over 0.1/0.2/0.3 in sdn mode.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs: list[tuple[ScenarioConfig, Path]] = []
    for s in range(seeds):
        seed = config.seed + s
        for mode in ("static", "sdn"):
            cfg = replace_config(config, mode=mode, seed=seed)
            jobs.append((cfg, out_dir / f"seed{seed}_{mode}"))
        if config.scenario == 3:
            for alpha in (0.1, 0.2, 0.3):
                cfg = replace_config(config, mode="sdn", seed=seed, alpha=alpha)
                jobs.append((cfg, out_dir / f"seed{seed}_alpha{alpha:g}"))

    if workers is None:
        workers = min(len(jobs), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_to_dir, jobs))
    else:
        results = [_run_to_dir(j) for j in jobs]
    by_key = {str(path.name): res for (cfg, path), res in zip(jobs, results)}

    counts: dict[str, int] = {}
    for s in range(seeds):
        seed = config.seed + s
        stat = by_key[f"seed{seed}_static"]
        sdn = by_key[f"seed{seed}_sdn"]
        counts["sdn_risk_below_static"] = counts.get("sdn_risk_below_static", 0) + (
            sdn["avg_safety_risk"] < stat["avg_safety_risk"])
        counts["static_privacy_at_least_sdn"] = counts.get("static_privacy_at_least_sdn", 0) + (
            stat["avg_privacy"] >= sdn["avg_privacy"])
        if config.scenario == 3:
            a1 = by_key[f"seed{seed}_alpha0.1"]["avg_privacy"]
            a2 = by_key[f"seed{seed}_alpha0.2"]["avg_privacy"]
            a3 = by_key[f"seed{seed}_alpha0.3"]["avg_privacy"]
            counts["privacy_drops_with_alpha"] = counts.get("privacy_drops_with_alpha", 0) + (
                a1 > a2 > a3)

    fractions = {name: n / seeds for name, n in sorted(counts.items())}
    with open(out_dir / "batch_verdicts.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["ordering", "pass_fraction", "seeds"])
        for name, frac in fractions.items():
            w.writerow([name, f"{frac:.3f}", seeds])
    return fractions


def replace_config(config: ScenarioConfig, **changes) -> ScenarioConfig:
    """Copy a config with a few fields swapped (configs are plain dataclasses
    but hold nested objects we can share)."""
    import copy
    cfg = copy.copy(config)
    for key, value in changes.items():
        setattr(cfg, key, value)
    if cfg.scenario == 3 and cfg.mode == "static":
        cfg.alpha = 0.3
    return cfg
