"""Non-learning controllers: a rule-based deconflictor and a random policy.

The rule-based controller spaces arrivals at the next shared bottleneck
by an ETA buffer, holds short of the bottleneck while anyone visible is
due there sooner, and keeps station behind a close same-path leader
rather than accelerating into it. When several rules apply at once the
most conservative command wins.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import (FleetConfig, ScenarioSpec, next_bottleneck,
                       project_to_route)
from .simcore import Action, AircraftState, Status, WorldState

# Default cruise as a fraction of the fleet's v_max. Flying below the
# ceiling leaves acceleration authority in hand for recovering from
# queues, and paces a full two-fleet episode at roughly ten to twelve
# simulated minutes.
_CRUISE_FRAC = 0.56

# ETAs used for rule arbitration rate every aircraft at no less than
# this fraction of its cruise speed. A braked aircraft's literal ETA
# balloons, which would simultaneously blind it to crossing traffic and
# hide it from everyone else's spacing rule; rating it at a speed it
# can quickly recover keeps a queued aircraft in the arrival order
# instead of parking it behind all comers forever.
_RULE_ETA_FLOOR_FRAC = 0.5

# An aircraft whose projection onto the ownship's polyline lies within
# this lateral distance is treated as sharing the ownship's path.
_CORRIDOR_LATERAL_M = 1.0


@dataclass(frozen=True)
class RuleParams:
    eta_buffer: float = 15.0     # required arrival spacing at the bottleneck (s)
    follow_gap: float = 600.0    # station-keeping distance behind a leader (m)
    safety_bubble: float = 250.0  # hard braking radius around any aircraft (m)
    hold_short: float = 300.0    # standoff ring radius around the bottleneck (m)
    cruise_speed: float | None = None   # None: 0.75 x v_max for the fleet

    @classmethod
    def from_scenario(cls, spec: ScenarioSpec) -> "RuleParams":
        rp = spec.rule_params
        return cls(eta_buffer=rp.get("eta_buffer", 15.0),
                   follow_gap=rp.get("follow_gap", 600.0),
                   safety_bubble=rp.get("safety_bubble", 250.0),
                   hold_short=rp.get("hold_short", 300.0),
                   cruise_speed=rp.get("cruise_speed"))


def resolve_cruise(params: RuleParams, fleet: FleetConfig) -> float:
    if params.cruise_speed is not None:
        return params.cruise_speed
    return _CRUISE_FRAC * fleet.v_max


def _rule_eta(spec: ScenarioSpec, params: RuleParams, a: AircraftState,
              togo: float) -> float:
    floor = _RULE_ETA_FLOOR_FRAC * resolve_cruise(params,
                                                  spec.fleets[a.fleet_id])
    return togo / max(a.speed, floor)


def _behind_on_path(spec: ScenarioSpec, own: AircraftState,
                    other: AircraftState) -> bool:
    """True when the other aircraft sits on the ownship's path at or
    behind the ownship's own arc position. Traffic behind in the same
    lane is the follower's problem, never a bottleneck conflict."""
    proj_arc, lateral = project_to_route(spec.routes[own.route_id],
                                         other.x, other.y)
    return lateral <= _CORRIDOR_LATERAL_M and proj_arc <= own.arc


def _conflict_ahead(world: WorldState, spec: ScenarioSpec,
                    own: AircraftState, own_nb: tuple[str, float],
                    own_feta: float, params: RuleParams) -> bool:
    """True when someone visible is due at the shared bottleneck inside
    the eta_buffer window just before the ownship. An exact ETA tie is
    resolved by creation order so two mirror-symmetric aircraft cannot
    both ignore each other. Aircraft far earlier than the window are
    gone before the ownship arrives and need no reaction."""
    sensing = spec.fleets[own.fleet_id].sensing_range
    for other in world.aircraft:
        if other.status != Status.ACTIVE or other.agent_id == own.agent_id:
            continue
        if math.hypot(other.x - own.x, other.y - own.y) > sensing:
            continue
        other_nb = next_bottleneck(spec.routes[other.route_id], other.arc)
        if other_nb is None or other_nb[0] != own_nb[0]:
            continue
        if _behind_on_path(spec, own, other):
            continue
        other_feta = _rule_eta(spec, params, other, other_nb[1] - other.arc)
        earlier = (other_feta, other.idx) < (own_feta, own.idx)
        if earlier and own_feta - other_feta < params.eta_buffer:
            return True
    return False


def _must_hold_short(world: WorldState, spec: ScenarioSpec,
                     own: AircraftState, own_nb: tuple[str, float],
                     own_feta: float, params: RuleParams) -> bool:
    """True when someone the ownship can see is due at the shared
    bottleneck sooner.

    Called only inside the standoff ring. ETA spacing alone lets a slow
    aircraft loiter right next to the bottleneck (its own arrival looks
    comfortably late), so inside the ring the later aircraft waits and
    the sooner one is let through.
    """
    sensing = spec.fleets[own.fleet_id].sensing_range
    for other in world.aircraft:
        if other.status != Status.ACTIVE or other.agent_id == own.agent_id:
            continue
        if math.hypot(other.x - own.x, other.y - own.y) > sensing:
            continue
        other_nb = next_bottleneck(spec.routes[other.route_id], other.arc)
        if other_nb is None or other_nb[0] != own_nb[0]:
            continue
        if _behind_on_path(spec, own, other):
            continue
        other_feta = _rule_eta(spec, params, other, other_nb[1] - other.arc)
        if (other_feta, other.idx) < (own_feta, own.idx):
            return True
    return False


def _close_leader(world: WorldState, spec: ScenarioSpec, own: AircraftState,
                  follow_gap: float) -> tuple[AircraftState, float] | None:
    """Nearest aircraft strictly ahead on the ownship's path within
    follow_gap, with its along-path gap.

    Routes that merge share their downstream corridor while keeping
    distinct route ids, so candidates are found by projecting onto the
    ownship's own polyline instead of comparing route ids.
    """
    route = spec.routes[own.route_id]
    best = None
    best_gap = follow_gap
    for other in world.aircraft:
        if other.status != Status.ACTIVE or other.agent_id == own.agent_id:
            continue
        if math.hypot(other.x - own.x, other.y - own.y) >= best_gap:
            continue
        proj_arc, lateral = project_to_route(route, other.x, other.y)
        gap = proj_arc - own.arc
        if lateral <= _CORRIDOR_LATERAL_M and 0.0 < gap < best_gap:
            best, best_gap = other, gap
    if best is None:
        return None
    return best, best_gap


def _must_yield_in_bubble(world: WorldState, spec: ScenarioSpec,
                          own: AircraftState, bubble: float) -> bool:
    """True when another aircraft inside the braking radius has priority.

    Priority goes to the aircraft with less distance left to fly; an
    exact tie falls back to creation order. ETA buffers degrade into
    short physical gaps at low speed, so this radius is the last line
    of defence in slow, compressed queues.
    """
    own_remaining = spec.routes[own.route_id].length - own.arc
    for other in world.aircraft:
        if other.status != Status.ACTIVE or other.agent_id == own.agent_id:
            continue
        if math.hypot(other.x - own.x, other.y - own.y) >= bubble:
            continue
        other_remaining = spec.routes[other.route_id].length - other.arc
        if (other_remaining, other.idx) < (own_remaining, own.idx):
            return True
    return False


def rule_based_action(world: WorldState, spec: ScenarioSpec,
                      own: AircraftState, params: RuleParams) -> Action:
    """Deterministic speed command for one aircraft.

    (a) bottleneck spacing: DECEL while anyone bound for the ownship's
        next bottleneck is due there inside the eta_buffer window just
        ahead of the ownship;
    (b) hold short: inside the standoff ring around the next bottleneck,
        DECEL while anyone sharing that bottleneck is due there sooner;
    (c) station keeping: behind a same-path leader, DECEL while faster
        than it, HOLD while inside half the follow gap; in the outer
        half of the gap a slower follower is free to speed back up;
    (d) safety bubble: DECEL while an aircraft with priority (less
        distance left to fly) is inside the braking radius;
    the most conservative triggered command wins; with none triggered,
    ACCEL back toward cruise, or HOLD once there.
    """
    fleet = spec.fleets[own.fleet_id]
    cruise = resolve_cruise(params, fleet)
    commands: list[Action] = []
    own_nb = next_bottleneck(spec.routes[own.route_id], own.arc)
    if own_nb is not None:
        own_togo = own_nb[1] - own.arc
        own_feta = _rule_eta(spec, params, own, own_togo)
        if _conflict_ahead(world, spec, own, own_nb, own_feta, params):
            # Below the rating floor more braking cannot widen the rated
            # ETA gap, it just digs a hole to climb out of, so hold there.
            commands.append(Action.DECEL
                            if own.speed > _RULE_ETA_FLOOR_FRAC * cruise
                            else Action.HOLD)
        if (own_togo < params.hold_short
                and _must_hold_short(world, spec, own, own_nb, own_feta,
                                     params)):
            commands.append(Action.DECEL)
    found = _close_leader(world, spec, own, params.follow_gap)
    if found is not None:
        leader, gap = found
        if own.speed > leader.speed:
            commands.append(Action.DECEL)
        elif gap < 0.5 * params.follow_gap:
            commands.append(Action.HOLD)
    if _must_yield_in_bubble(world, spec, own, params.safety_bubble):
        commands.append(Action.DECEL)
    if commands:
        return min(commands)
    if own.speed < cruise:
        return Action.ACCEL
    return Action.HOLD


def random_action(rng: np.random.Generator) -> Action:
    """Uniform draw over the three speed commands."""
    return Action(int(rng.integers(0, 3)))
