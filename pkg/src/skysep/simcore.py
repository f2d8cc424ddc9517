"""Deterministic route-following simulator core.

Aircraft move along fixed route polylines in discrete dt steps; the only
control is a speed change (DECEL / HOLD / ACCEL). Conflict detection runs
on the straight-line relative motion within each step, so fast crossing
pairs cannot tunnel through the protected zone between samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .scenario import (FleetConfig, Route, ScenarioSpec, next_bottleneck,
                       position_on_route)

HARD_STEP_CAP = 500

# A pending agent is released only once every active aircraft on its route
# has moved at least this far from the origin. Scheduled spawn times may
# coincide on one route; releasing two aircraft into the same point would
# create an unresolvable conflict at time zero, so departures queue briefly
# instead (spawn_time itself is not changed). The margin covers a released
# aircraft's worst case: braking from spawn speed behind a slow leader on a
# low-acceleration profile still leaves more than the near-miss radius.
ACTIVATION_CLEARANCE_M = 250.0


class Action(IntEnum):
    DECEL = 0
    HOLD = 1
    ACCEL = 2


class Status(IntEnum):
    PENDING = 0
    ACTIVE = 1
    DONE_SUCCESS = 2
    DONE_NMAC = 3
    DONE_TIMEOUT = 4


TERMINAL_STATUS = {
    Status.DONE_SUCCESS: "success",
    Status.DONE_NMAC: "nmac",
    Status.DONE_TIMEOUT: "timeout",
}


@dataclass
class AircraftState:
    agent_id: str
    idx: int
    fleet_id: str
    route_id: str
    spawn_time: float
    status: Status = Status.PENDING
    arc: float = 0.0
    prev_arc: float = 0.0
    speed: float = 0.0
    prev_action: Action = Action.HOLD
    last_speed_delta: float = 0.0
    x: float = 0.0
    y: float = 0.0
    prev_x: float = 0.0
    prev_y: float = 0.0
    activated_step: int = -1
    end_time: float | None = None
    reward_sum: float = 0.0


@dataclass
class ConflictEvent:
    kind: str                      # "NMAC" | "GOAL" | "TIMEOUT"
    sim_time: float
    agents: tuple[str, ...]
    fleets: tuple[str, ...]
    midpoint: tuple[float, float] | None = None
    next_bottlenecks: tuple[str | None, ...] = ()


@dataclass
class WorldState:
    sim_time: float = 0.0
    step_index: int = 0
    aircraft: list[AircraftState] = field(default_factory=list)
    events: list[ConflictEvent] = field(default_factory=list)

    def active(self) -> list[AircraftState]:
        return [a for a in self.aircraft if a.status == Status.ACTIVE]

    def pending(self) -> list[AircraftState]:
        return [a for a in self.aircraft if a.status == Status.PENDING]


def new_world(spec: ScenarioSpec, spawn_times: list[float]) -> WorldState:
    """Create a world with every agent pending at its route origin."""
    from .scenario import agent_roster

    roster = agent_roster(spec)
    if len(spawn_times) != len(roster):
        raise ValueError(
            f"expected {len(roster)} spawn times, got {len(spawn_times)}")
    world = WorldState()
    for (agent_id, route_id, fleet_id), t in zip(roster, spawn_times):
        route = spec.routes[route_id]
        a = AircraftState(agent_id=agent_id, idx=len(world.aircraft),
                          fleet_id=fleet_id, route_id=route_id, spawn_time=t)
        a.x, a.y = route.points[0]
        a.prev_x, a.prev_y = a.x, a.y
        world.aircraft.append(a)
    return world


def apply_action(aircraft: AircraftState, action: Action, fleet: FleetConfig,
                 dt: float) -> float:
    """Update commanded speed; returns the realized speed change.

    The speed change is clamped to the fleet envelope, so the realized
    delta can be smaller in magnitude than accel_mag * dt.
    """
    old = aircraft.speed
    target = old + (int(action) - 1) * fleet.accel_mag * dt
    aircraft.speed = min(max(target, fleet.v_min), fleet.v_max)
    aircraft.last_speed_delta = aircraft.speed - old
    aircraft.prev_action = action
    return aircraft.last_speed_delta


def advance_kinematics(world: WorldState, spec: ScenarioSpec) -> list[AircraftState]:
    """Move active aircraft, advance the clock, release due departures.

    Returns the aircraft activated during this step. Aircraft reaching the
    end of their route polyline are held at the final waypoint (the goal
    check in detect_events removes them in the same step).
    """
    for a in world.aircraft:
        if a.status != Status.ACTIVE:
            continue
        route = spec.routes[a.route_id]
        a.prev_arc = a.arc
        a.prev_x, a.prev_y = a.x, a.y
        a.arc = min(a.arc + a.speed * spec.dt, route.length)
        a.x, a.y = position_on_route(route, a.arc)

    world.sim_time += spec.dt
    world.step_index += 1

    activated: list[AircraftState] = []
    due = [a for a in world.aircraft
           if a.status == Status.PENDING and a.spawn_time <= world.sim_time]
    due.sort(key=lambda a: (a.spawn_time, a.idx))
    for a in due:
        blocked = any(
            b.status == Status.ACTIVE and b.route_id == a.route_id
            and b.arc < ACTIVATION_CLEARANCE_M
            for b in world.aircraft)
        if blocked:
            continue
        route = spec.routes[a.route_id]
        fleet = spec.fleets[a.fleet_id]
        a.status = Status.ACTIVE
        a.arc = 0.0
        a.prev_arc = 0.0
        a.speed = fleet.spawn_speed
        a.x, a.y = route.points[0]
        a.prev_x, a.prev_y = a.x, a.y
        a.activated_step = world.step_index
        activated.append(a)
    return activated


def step_separations(world: WorldState) -> tuple[list[AircraftState], np.ndarray]:
    """Minimum pairwise distances over the straight-line motion of one step.

    Returns (active aircraft list, symmetric matrix of per-pair minima).
    Each aircraft's motion is approximated by the chord from its previous
    to its current position; the pair minimum is the closest point of
    approach of the relative motion, so within-step crossings register.
    An aircraft released this step only exists at the step's endpoint,
    so pairs involving it are measured there rather than along a chord
    the newcomer was never airborne for.
    """
    actives = world.active()
    n = len(actives)
    if n == 0:
        return actives, np.zeros((0, 0))
    p0 = np.array([[a.prev_x, a.prev_y] for a in actives])
    p1 = np.array([[a.x, a.y] for a in actives])
    rel0 = p0[:, None, :] - p0[None, :, :]
    reld = (p1 - p0)[:, None, :] - (p1 - p0)[None, :, :]
    dd = np.einsum("ijk,ijk->ij", reld, reld)
    t = np.zeros_like(dd)
    np.divide(-np.einsum("ijk,ijk->ij", rel0, reld), dd, out=t, where=dd > 0.0)
    fresh = np.array([float(a.activated_step == world.step_index)
                      for a in actives])
    np.clip(t, np.maximum(fresh[:, None], fresh[None, :]), 1.0, out=t)
    closest = rel0 + t[:, :, None] * reld
    dmin = np.sqrt(np.einsum("ijk,ijk->ij", closest, closest))
    np.fill_diagonal(dmin, np.inf)
    return actives, dmin


def _cpa_point(a: AircraftState, b: AircraftState,
               step_index: int) -> tuple[float, float]:
    """Midpoint between two aircraft at their time of closest approach."""
    lo = 1.0 if step_index in (a.activated_step, b.activated_step) else 0.0
    p0a = np.array([a.prev_x, a.prev_y]); p1a = np.array([a.x, a.y])
    p0b = np.array([b.prev_x, b.prev_y]); p1b = np.array([b.x, b.y])
    rel0 = p0a - p0b
    reld = (p1a - p0a) - (p1b - p0b)
    dd = float(reld @ reld)
    t = min(max(-float(rel0 @ reld) / dd, lo), 1.0) if dd > 0.0 else lo
    pa = p0a + t * (p1a - p0a)
    pb = p0b + t * (p1b - p0b)
    mid = 0.5 * (pa + pb)
    return float(mid[0]), float(mid[1])


def detect_events(world: WorldState, spec: ScenarioSpec,
                  separations: tuple[list[AircraftState], np.ndarray] | None = None,
                  ) -> list[ConflictEvent]:
    """Detect NMAC, goal and timeout events; mark and remove those agents.

    Precedence per agent is NMAC > GOAL > TIMEOUT: an aircraft that loses
    separation on the same step it would have reached its destination is
    still scored as an NMAC.
    """
    actives, dmin = separations if separations is not None else step_separations(world)
    events: list[ConflictEvent] = []

    n = len(actives)
    for i in range(n):
        for j in range(i + 1, n):
            if dmin[i, j] < spec.d_nmac:
                a, b = actives[i], actives[j]
                nb_a = next_bottleneck(spec.routes[a.route_id], a.arc)
                nb_b = next_bottleneck(spec.routes[b.route_id], b.arc)
                events.append(ConflictEvent(
                    kind="NMAC", sim_time=world.sim_time,
                    agents=(a.agent_id, b.agent_id),
                    fleets=(a.fleet_id, b.fleet_id),
                    midpoint=_cpa_point(a, b, world.step_index),
                    next_bottlenecks=(nb_a[0] if nb_a else None,
                                      nb_b[0] if nb_b else None)))
    crashed = {aid for ev in events for aid in ev.agents}
    for a in actives:
        if a.agent_id in crashed and a.status == Status.ACTIVE:
            a.status = Status.DONE_NMAC
            a.end_time = world.sim_time

    for a in actives:
        if a.status != Status.ACTIVE:
            continue
        route = spec.routes[a.route_id]
        goal_dist = math.hypot(a.x - route.points[-1][0], a.y - route.points[-1][1])
        if goal_dist < spec.goal_tolerance:
            a.status = Status.DONE_SUCCESS
            a.end_time = world.sim_time
            events.append(ConflictEvent(
                kind="GOAL", sim_time=world.sim_time,
                agents=(a.agent_id,), fleets=(a.fleet_id,)))

    for a in actives:
        if a.status != Status.ACTIVE:
            continue
        if world.sim_time - a.spawn_time >= spec.mission_horizon:
            a.status = Status.DONE_TIMEOUT
            a.end_time = world.sim_time
            events.append(ConflictEvent(
                kind="TIMEOUT", sim_time=world.sim_time,
                agents=(a.agent_id,), fleets=(a.fleet_id,)))

    world.events.extend(events)
    return events


def is_episode_done(world: WorldState, spec: ScenarioSpec,
                    step_cap: int = HARD_STEP_CAP) -> bool:
    """True when no agent is pending or active.

    At the hard step cap any remaining agents are force-marked as
    timeouts so a stuck world still terminates.
    """
    remaining = [a for a in world.aircraft
                 if a.status in (Status.PENDING, Status.ACTIVE)]
    if not remaining:
        return True
    if world.step_index >= step_cap:
        for a in remaining:
            a.status = Status.DONE_TIMEOUT
            a.end_time = world.sim_time
            world.events.append(ConflictEvent(
                kind="TIMEOUT", sim_time=world.sim_time,
                agents=(a.agent_id,), fleets=(a.fleet_id,)))
        return True
    return False
