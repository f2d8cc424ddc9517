"""Ownship and intruder feature vectors for the learned policy.

An intruder is worth attending to only if it is inside sensing range,
headed for the same next bottleneck, and will arrive there strictly
earlier than the ownship. All features are normalized by ownship-fleet
quantities so both fleets see dimensionless inputs on a common scale;
cross-fleet intruder speeds may normalize above 1.
"""
from __future__ import annotations

import math

import numpy as np

from .scenario import (ScenarioSpec, dist_to_next_waypoint, heading_on_route,
                       next_bottleneck)
from .simcore import AircraftState, Status, WorldState

TWO_PI = 2.0 * math.pi

# Below this speed an arrival estimate is meaningless; treat it as never.
ETA_SPEED_FLOOR = 0.1

OBS_DIM = 4


def eta_to_bottleneck(aircraft: AircraftState, spec: ScenarioSpec) -> float:
    """Seconds until the aircraft reaches its next merge/intersection.

    Infinite when the aircraft is effectively stopped or has passed its
    last bottleneck.
    """
    nb = next_bottleneck(spec.routes[aircraft.route_id], aircraft.arc)
    if nb is None or aircraft.speed < ETA_SPEED_FLOOR:
        return math.inf
    return (nb[1] - aircraft.arc) / aircraft.speed


def sense_intruders(world: WorldState, spec: ScenarioSpec,
                    own: AircraftState) -> list[AircraftState]:
    """Front intruders visible to `own`, nearest first.

    Front means: within ownship sensing range, sharing the ownship's next
    bottleneck, and arriving there strictly earlier. Ties in distance are
    broken by agent id so the ordering is total.
    """
    own_nb = next_bottleneck(spec.routes[own.route_id], own.arc)
    if own_nb is None:
        return []
    own_eta = eta_to_bottleneck(own, spec)
    sensing = spec.fleets[own.fleet_id].sensing_range
    found: list[tuple[float, str, AircraftState]] = []
    for other in world.aircraft:
        if other.status != Status.ACTIVE or other.agent_id == own.agent_id:
            continue
        dist = math.hypot(other.x - own.x, other.y - own.y)
        if dist > sensing:
            continue
        other_nb = next_bottleneck(spec.routes[other.route_id], other.arc)
        if other_nb is None or other_nb[0] != own_nb[0]:
            continue
        if not (eta_to_bottleneck(other, spec) < own_eta):
            continue
        found.append((dist, other.agent_id, other))
    found.sort(key=lambda item: (item[0], item[1]))
    return [item[2] for item in found]


def build_observation(world: WorldState, spec: ScenarioSpec,
                      own: AircraftState) -> tuple[np.ndarray, np.ndarray]:
    """(ownship vector [4], intruder matrix [m, 4]) as float32.

    Ownship: [dist to next waypoint / route length, speed / v_max,
    heading / 2pi, last speed delta / (accel_mag * dt)].
    Intruders: [distance / sensing range, speed / v_max, heading / 2pi,
    last speed delta / (accel_mag * dt)], normalizers from the ownship
    fleet, rows ordered nearest first.
    """
    route = spec.routes[own.route_id]
    fleet = spec.fleets[own.fleet_id]
    accel_step = fleet.accel_mag * spec.dt
    own_vec = np.array([
        dist_to_next_waypoint(route, own.arc) / route.length,
        own.speed / fleet.v_max,
        heading_on_route(route, own.arc) / TWO_PI,
        own.last_speed_delta / accel_step,
    ], dtype=np.float32)

    intruders = sense_intruders(world, spec, own)
    mat = np.zeros((len(intruders), OBS_DIM), dtype=np.float32)
    for i, other in enumerate(intruders):
        dist = math.hypot(other.x - own.x, other.y - own.y)
        mat[i, 0] = dist / fleet.sensing_range
        mat[i, 1] = other.speed / fleet.v_max
        mat[i, 2] = heading_on_route(spec.routes[other.route_id], other.arc) / TWO_PI
        mat[i, 3] = other.last_speed_delta / accel_step
    return own_vec, mat
