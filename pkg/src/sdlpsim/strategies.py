"""Data-plane strategy machinery: local rule/settings stores fed by controller
directives, and the per-step execution of the selected pseudonym-changing
strategy.

Each strategy is a small per-vehicle state machine producing actions:

* UPCS: silence while stopped at a red light, swap at the green onset when
  enough silent vehicles are co-stopped.
* SocialSpots: synchronized swap at the green onset, never any silence.
* TAPCS: a short silence in congestion, swap at silence end; triggering waits
  for a quorum of eligible slow vehicles so the mix set has a floor.
* PRIVANET: park inside a roadside infrastructure when the privacy level runs
  low, swap on the way out.

A locked vehicle never silences and never changes; an active silence or stay
is wound down without a swap.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Optional, Union

from .beacons import T_SAFE_S
from .world import (
    CongestedSegment,
    RoadsideInfrastructure,
    SignalizedIntersection,
    TopologyContext,
    WorldState,
    context_kind,
    light_phase,
)

if TYPE_CHECKING:
    from .protocol import ControlDirective

log = logging.getLogger(__name__)

MAX_SILENCE_S = 120.0


class StrategyId(Enum):
    UPCS = "UPCS"
    SOCIAL_SPOTS = "SocialSpots"
    TAPCS = "TAPCS"
    PRIVANET = "PRIVANET"


@dataclass(frozen=True, slots=True)
class StrategySettings:
    silence_duration: float = 2.0
    red_light_duration: float = 30.0
    speed_threshold: float = 5.0
    min_group_size: int = 3
    ri_capacity: int = 0
    privacy_threshold: float = 3.0
    lock_enabled: bool = False

    def validate(self) -> None:
        if self.silence_duration < 0:
            raise ValueError("silence_duration must be >= 0")
        if self.speed_threshold <= 0:
            raise ValueError("speed_threshold must be > 0")
        if self.privacy_threshold < 0:
            raise ValueError("privacy_threshold must be >= 0")
        if self.min_group_size < 1:
            raise ValueError("min_group_size must be >= 1")


@dataclass(frozen=True, slots=True)
class StrategyRule:
    context: str      # intersection | congestion | infrastructure | any
    action: str       # silence | change | enter | exit
    validity: float   # seconds from issued_at
    issued_at: float = 0.0

    def expired(self, now: float) -> bool:
        return now > self.issued_at + self.validity


# -- actions -------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class EnterSilence:
    duration: float


@dataclass(frozen=True, slots=True)
class ExitSilence:
    pass


@dataclass(frozen=True, slots=True)
class ChangePseudonym:
    pass


@dataclass(frozen=True, slots=True)
class Hold:
    pass


@dataclass(frozen=True, slots=True)
class EnterInfrastructure:
    ri_id: str


@dataclass(frozen=True, slots=True)
class ExitInfrastructure:
    pass


PcsAction = Union[EnterSilence, ExitSilence, ChangePseudonym, Hold,
                  EnterInfrastructure, ExitInfrastructure]

HOLD = Hold()


class EngineNotConfigured(RuntimeError):
    pass


class LocalStores:
    """The vehicle-side rule and settings databases. The engine only ever
    reads these; the controller writes them through inspector_ingest."""

    def __init__(self) -> None:
        self.selected: Optional[StrategyId] = None
        self.settings: dict[StrategyId, StrategySettings] = {}
        self.rules: list[StrategyRule] = []

    def settings_for(self, strategy: StrategyId) -> StrategySettings:
        try:
            return self.settings[strategy]
        except KeyError:
            raise EngineNotConfigured(f"no settings for {strategy.value}") from None

    def rule_allows(self, context: str, action: str, now: float) -> bool:
        self.rules = [r for r in self.rules if not r.expired(now)]
        return any(r.action == action and r.context in (context, "any")
                   for r in self.rules)


def inspector_ingest(store: LocalStores, directive: "ControlDirective") -> LocalStores:
    """Write a directive's rules and settings into the local stores.

    Later directives override earlier ones per key; a malformed directive is
    rejected whole and the stores stay untouched.
    """
    try:
        directive.settings.validate()
        for rule in directive.rules:
            if rule.validity <= 0:
                raise ValueError("rule validity must be positive")
    except ValueError as err:
        log.warning("rejected malformed directive: %s", err)
        return store
    store.selected = directive.selected
    store.settings[directive.selected] = directive.settings
    store.rules = [r for r in store.rules if not r.expired(directive.issued_at)]
    store.rules.extend(directive.rules)
    return store


# -- per-vehicle execution state ------------------------------------------------

@dataclass(slots=True)
class VehicleStrategyState:
    in_silence: bool = False
    silence_until: float = 0.0
    tapcs_armed: bool = True
    prev_speed: float = float("inf")           # speed at the previous tick
    red_episode_draw: Optional[bool] = None    # cooperative draw for this red phase
    ri_episode_draw: Optional[bool] = None     # cooperative draw for this approach
    tapcs_episode_draw: Optional[bool] = None  # cooperative draw for this congestion pass


@dataclass(frozen=True, slots=True)
class TickView:
    """Everything one strategy tick may look at for one vehicle."""
    context: TopologyContext
    speed: float
    stopped: bool
    announced_stop: bool       # stopped now and already stopped one beacon ago
    light_turned_green: bool
    red_remaining: float
    co_stopped: int            # stopped vehicles sharing the intersection
    co_stopped_silent: int     # the silent subset, self included
    quorum_member: bool        # TAPCS synchronized-trigger membership
    at_ri_entrance: bool
    free_slots: int
    privacy_level: float
    cooperative: bool
    parked: bool
    exit_due: bool
    now: float


def upcs_tick(view: TickView, settings: StrategySettings,
              state: VehicleStrategyState) -> list[PcsAction]:
    ctx = view.context
    if state.in_silence:
        if isinstance(ctx, SignalizedIntersection) and view.light_turned_green:
            if view.co_stopped_silent >= settings.min_group_size:
                return [ChangePseudonym(), ExitSilence()]
            return [ExitSilence()]
        if not isinstance(ctx, SignalizedIntersection):
            return [ExitSilence()]  # drifted out of the zone: fail safe
        return [HOLD]
    # silence starts one beacon after the stop, so neighbours (and trackers)
    # have seen the vehicle standing before it goes dark
    if (isinstance(ctx, SignalizedIntersection) and ctx.light.value == "red"
            and view.announced_stop and view.cooperative):
        return [EnterSilence(min(view.red_remaining, MAX_SILENCE_S))]
    return [HOLD]


def socialspots_tick(view: TickView, settings: StrategySettings,
                     state: VehicleStrategyState) -> list[PcsAction]:
    ctx = view.context
    if (isinstance(ctx, SignalizedIntersection) and view.light_turned_green
            and view.stopped):
        if not view.cooperative:
            return [HOLD]
        return [ChangePseudonym()]
    return [HOLD]


def tapcs_tick(view: TickView, settings: StrategySettings,
               state: VehicleStrategyState) -> list[PcsAction]:
    if state.in_silence:
        if view.now >= state.silence_until:
            return [ChangePseudonym(), ExitSilence()]
        return [HOLD]
    if not isinstance(view.context, CongestedSegment):
        state.tapcs_armed = True
        return [HOLD]
    if (state.tapcs_armed and view.speed < settings.speed_threshold
            and view.quorum_member and view.cooperative):
        duration = settings.silence_duration
        if settings.lock_enabled:
            duration = min(duration, T_SAFE_S)
        return [EnterSilence(duration)]
    return [HOLD]


def privanet_tick(view: TickView, settings: StrategySettings,
                  state: VehicleStrategyState) -> list[PcsAction]:
    if view.parked:
        if view.exit_due:
            return [ChangePseudonym(), ExitInfrastructure()]
        return [HOLD]
    ctx = view.context
    if (isinstance(ctx, RoadsideInfrastructure) and view.at_ri_entrance
            and view.privacy_level < settings.privacy_threshold):
        if ctx.free_slots <= 0:
            return [HOLD]  # full, retry on a later pass
        if not view.cooperative:
            return [HOLD]
        return [EnterInfrastructure(ctx.id)]
    return [HOLD]


_TICKS = {
    StrategyId.UPCS: upcs_tick,
    StrategyId.SOCIAL_SPOTS: socialspots_tick,
    StrategyId.TAPCS: tapcs_tick,
    StrategyId.PRIVANET: privanet_tick,
}


_RULE_ACTION = {
    EnterSilence: "silence",
    ChangePseudonym: "change",
    EnterInfrastructure: "enter",
}


def engine_dispatch(
    selected: StrategyId,
    store: LocalStores,
    view: TickView,
    state: VehicleStrategyState,
    locked: bool,
) -> list[PcsAction]:
    """Run the selected strategy's tick with the lock override on top: a
    locked vehicle only ever winds down silence or an infrastructure stay.

    Every initiating action needs an unexpired rule for the current context
    in the local store; wind-down actions (exits) always pass.
    """
    settings = store.settings_for(selected)
    if locked:
        if state.in_silence:
            return [ExitSilence()]
        if view.parked and view.exit_due:
            return [ExitInfrastructure()]
        return [HOLD]
    acts = _TICKS[selected](view, settings, state)
    kind = context_kind(view.context)
    for a in acts:
        rule_action = _RULE_ACTION.get(type(a))
        if rule_action and not store.rule_allows(kind, rule_action, view.now):
            log.debug("no rule for %s at %s; holding", rule_action, kind)
            return [HOLD]
    return acts


class StrategyEngine:
    """Per-step executor: builds tick views (group sizes, transitions,
    quorums, cooperative draws) and dispatches every vehicle."""

    def __init__(self, rng, ring_entry_window: float = 8.0):
        self.stores = LocalStores()
        self.states: dict[int, VehicleStrategyState] = {}
        self.rng = rng
        self.entry_window = ring_entry_window
        self._last_lights: dict[str, str] = {}
        self.selfish_this_step: set[int] = set()

    def state_of(self, vid: int) -> VehicleStrategyState:
        if vid not in self.states:
            self.states[vid] = VehicleStrategyState()
        return self.states[vid]

    def silent_ids(self) -> set[int]:
        return {vid for vid, s in self.states.items() if s.in_silence}

    def _light_transitions(self, world: WorldState) -> set[str]:
        turned = set()
        for x in world.map.intersections:
            light, _ = light_phase(world.map, x.id, world.time)
            prev = self._last_lights.get(x.id)
            if prev == "red" and light.value == "green":
                turned.add(x.id)
            self._last_lights[x.id] = light.value
        return turned

    def _draw(self, vehicle) -> bool:
        return self.rng.random() < vehicle.cooperative_prob

    def tick_all(
        self,
        world: WorldState,
        contexts: dict[int, TopologyContext],
        privacy_levels: dict[int, float],
        locked_ids: set[int],
        eligible_to_change,
    ) -> dict[int, list[PcsAction]]:
        """Compute one action list per vehicle for this step.

        eligible_to_change(vid) tells whether the pool would allow a mix-event
        change right now; it keeps refused vehicles out of group counts.
        """
        if self.stores.selected is None:
            raise EngineNotConfigured("no strategy selected yet")
        selected = self.stores.selected
        settings = self.stores.settings_for(selected)
        now = world.time
        self.selfish_this_step = set()
        turned_green = self._light_transitions(world)

        stopped_at: dict[str, list[int]] = {}
        silent_at: dict[str, list[int]] = {}
        for v in world.vehicles:
            ctx = contexts[v.true_id]
            if isinstance(ctx, SignalizedIntersection) and not v.parked and v.speed == 0.0:
                stopped_at.setdefault(ctx.id, []).append(v.true_id)
                if self.state_of(v.true_id).in_silence:
                    silent_at.setdefault(ctx.id, []).append(v.true_id)

        # TAPCS quorum: all eligible slow vehicles of a zone trigger together
        # once the group reaches the floor, so mix sets stay meaningful.
        quorum: set[int] = set()
        if selected is StrategyId.TAPCS:
            per_zone: dict[str, list[int]] = {}
            for v in world.vehicles:
                ctx = contexts[v.true_id]
                state = self.state_of(v.true_id)
                if (isinstance(ctx, CongestedSegment) and not v.parked
                        and not state.in_silence and state.tapcs_armed
                        and v.speed < settings.speed_threshold
                        and v.true_id not in locked_ids
                        and eligible_to_change(v.true_id)):
                    per_zone.setdefault(ctx.zone_id, []).append(v.true_id)
            for members in per_zone.values():
                if len(members) >= settings.min_group_size:
                    quorum.update(members)

        actions: dict[int, list[PcsAction]] = {}
        for v in sorted(world.vehicles, key=lambda v: v.true_id):
            vid = v.true_id
            ctx = contexts[vid]
            state = self.state_of(vid)
            cooperative = self._cooperative_for(v, ctx, state, selected, turned_green)

            red_remaining = 0.0
            onset = False
            if isinstance(ctx, SignalizedIntersection):
                onset = ctx.id in turned_green
                if ctx.light.value == "red":
                    x = world.map.intersection_by_id(ctx.id)
                    red_remaining = x.red_s - ctx.time_in_phase

            at_entrance = False
            if isinstance(ctx, RoadsideInfrastructure) and not v.parked:
                ri = world.map.infrastructure_by_id(ctx.id)
                dist = world.map.ahead_distance(world.linear_pos(v), ri.position_m)
                at_entrance = dist <= max(self.entry_window, v.speed * world.dt)

            exit_due = v.parked and now >= v.inside_infrastructure[1]

            view = TickView(
                context=ctx,
                speed=v.speed,
                stopped=(v.speed == 0.0 and not v.parked),
                announced_stop=(v.speed == 0.0 and state.prev_speed == 0.0
                                and not v.parked),
                light_turned_green=onset,
                red_remaining=red_remaining,
                co_stopped=len(stopped_at.get(getattr(ctx, "id", ""), [])),
                co_stopped_silent=len(silent_at.get(getattr(ctx, "id", ""), [])),
                quorum_member=vid in quorum,
                at_ri_entrance=at_entrance,
                free_slots=getattr(ctx, "free_slots", 0),
                privacy_level=privacy_levels.get(vid, 0.0),
                cooperative=cooperative,
                parked=v.parked,
                exit_due=exit_due,
                now=now,
            )
            acts = engine_dispatch(selected, self.stores, view, state, vid in locked_ids)
            for a in acts:
                if isinstance(a, EnterSilence):
                    if a.duration > MAX_SILENCE_S:
                        raise ValueError(f"silence {a.duration}s exceeds the configured max")
                    state.in_silence = True
                    state.silence_until = now + a.duration
                    if selected is StrategyId.TAPCS:
                        state.tapcs_armed = False
                elif isinstance(a, ExitSilence):
                    state.in_silence = False
            state.prev_speed = v.speed
            actions[vid] = acts
        return actions

    def _episode_draw(self, vehicle, state: VehicleStrategyState, attr: str) -> bool:
        drawn = getattr(state, attr)
        if drawn is None:
            drawn = self._draw(vehicle)
            setattr(state, attr, drawn)
            if not drawn:
                self.selfish_this_step.add(vehicle.true_id)
        return drawn

    def _cooperative_for(self, vehicle, ctx, state: VehicleStrategyState,
                         selected: StrategyId, turned_green: set[str]) -> bool:
        """One cooperative draw per mix episode; refusals are reported."""
        if not isinstance(ctx, SignalizedIntersection):
            state.red_episode_draw = None
        if not isinstance(ctx, RoadsideInfrastructure):
            state.ri_episode_draw = None
        if not isinstance(ctx, CongestedSegment):
            state.tapcs_episode_draw = None

        if selected is StrategyId.UPCS and isinstance(ctx, SignalizedIntersection):
            if vehicle.speed == 0.0 and ctx.light.value == "red":
                return self._episode_draw(vehicle, state, "red_episode_draw")
            return state.red_episode_draw if state.red_episode_draw is not None else True
        if selected is StrategyId.SOCIAL_SPOTS and isinstance(ctx, SignalizedIntersection):
            if ctx.id in turned_green and vehicle.speed == 0.0:
                drawn = self._draw(vehicle)
                if not drawn:
                    self.selfish_this_step.add(vehicle.true_id)
                return drawn
            return True
        if (selected is StrategyId.PRIVANET and isinstance(ctx, RoadsideInfrastructure)
                and not vehicle.parked):
            return self._episode_draw(vehicle, state, "ri_episode_draw")
        if (selected is StrategyId.TAPCS and isinstance(ctx, CongestedSegment)
                and state.tapcs_armed):
            return self._episode_draw(vehicle, state, "tapcs_episode_draw")
        return True
