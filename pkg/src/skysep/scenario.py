"""Scenario definition: waypoints, routes, fleet configs, and route geometry.

A scenario file is a flat key-value tree with [params], [waypoints],
[routes], [config <name>], [fleets] and optional [rules] sections. The
reference scenario ships with the package; its coordinate table is the
normative geometry for the test suite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

WAYPOINT_KINDS = ("origin", "merge", "intersection", "destination")
BOTTLENECK_KINDS = ("merge", "intersection")

# Defaults applied when a [params] field is omitted (reference values).
PARAM_DEFAULTS = {
    "dt": 3.0,
    "mission_horizon": 1080.0,
    "d_nmac": 100.0,
    "d_lowc": 500.0,
    "goal_tolerance": 50.0,
    "agents_per_route": 5,
    "spawn_base": 35.0,
    "spawn_step": 5.0,
    "spawn_k_max": 10,
}

RULE_DEFAULTS = {"eta_buffer": 15.0, "follow_gap": 600.0, "cruise_speed": None}


class ScenarioError(ValueError):
    """Raised on parse or validation failures, with file line context."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class Waypoint:
    wp_id: str
    kind: str
    x: float
    y: float

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True, eq=False)
class Route:
    route_id: str
    fleet_id: str
    waypoint_ids: tuple[str, ...]
    points: np.ndarray      # (n, 2) vertex coordinates
    cum_arc: np.ndarray     # (n,) cumulative arc length, cum_arc[0] == 0
    bottleneck_ids: tuple[str, ...]
    bottleneck_arcs: tuple[float, ...]

    @property
    def length(self) -> float:
        return float(self.cum_arc[-1])

    @property
    def destination(self) -> np.ndarray:
        return self.points[-1]


@dataclass(frozen=True)
class FleetConfig:
    fleet_id: str
    profile: str
    v_min: float
    v_max: float
    accel_mag: float
    sensing_range: float
    spawn_speed: float


@dataclass(frozen=True)
class ScenarioSpec:
    waypoints: dict[str, Waypoint]
    routes: dict[str, Route]
    fleets: dict[str, FleetConfig]
    profiles: dict[str, dict[str, float]]
    dt: float
    mission_horizon: float
    d_nmac: float
    d_lowc: float
    goal_tolerance: float
    agents_per_route: int
    spawn_base: float
    spawn_step: float
    spawn_k_max: int
    rule_params: dict = field(default_factory=dict)

    @property
    def n_agents(self) -> int:
        return self.agents_per_route * len(self.routes)

    def fleet_for_route(self, route_id: str) -> FleetConfig:
        return self.fleets[self.routes[route_id].fleet_id]

    def rebind_fleet(self, fleet_id: str, profile: str) -> "ScenarioSpec":
        """Return a copy with the given fleet bound to another config profile."""
        if profile not in self.profiles:
            raise ScenarioError(f"unknown config profile {profile!r}")
        fleets = dict(self.fleets)
        fleets[fleet_id] = _build_fleet(fleet_id, profile, self.profiles[profile])
        spec = ScenarioSpec(
            waypoints=self.waypoints, routes=self.routes, fleets=fleets,
            profiles=self.profiles, dt=self.dt,
            mission_horizon=self.mission_horizon, d_nmac=self.d_nmac,
            d_lowc=self.d_lowc, goal_tolerance=self.goal_tolerance,
            agents_per_route=self.agents_per_route, spawn_base=self.spawn_base,
            spawn_step=self.spawn_step, spawn_k_max=self.spawn_k_max,
            rule_params=self.rule_params)
        _validate(spec)
        return spec


def _parse_lines(text: str):
    """Yield (line_no, section, key, tokens) entries from config text."""
    section = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not section:
                raise ScenarioError("empty section header", line_no)
            yield line_no, section, None, None
            continue
        if section is None:
            raise ScenarioError(f"entry {line!r} outside any section", line_no)
        if "=" not in line:
            raise ScenarioError(f"expected 'key = value', got {line!r}", line_no)
        key, value = line.split("=", 1)
        yield line_no, section, key.strip(), value.split()


def _to_float(tok: str, line: int, what: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ScenarioError(f"{what}: {tok!r} is not a number", line) from None


def _to_int(tok: str, line: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ScenarioError(f"{what}: {tok!r} is not an integer", line) from None


def _build_route(route_id: str, fleet_id: str, wp_ids: tuple[str, ...],
                 waypoints: dict[str, Waypoint], line: int) -> Route:
    for wp in wp_ids:
        if wp not in waypoints:
            raise ScenarioError(f"route {route_id}: unknown waypoint {wp!r}", line)
    if len(wp_ids) < 2:
        raise ScenarioError(f"route {route_id}: needs at least 2 waypoints", line)
    pts = np.array([[waypoints[w].x, waypoints[w].y] for w in wp_ids], dtype=np.float64)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    if np.any(seg <= 0.0):
        raise ScenarioError(f"route {route_id}: zero-length segment", line)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    bn_ids, bn_arcs = [], []
    for i, w in enumerate(wp_ids):
        if waypoints[w].kind in BOTTLENECK_KINDS:
            bn_ids.append(w)
            bn_arcs.append(float(cum[i]))
    return Route(route_id=route_id, fleet_id=fleet_id, waypoint_ids=wp_ids,
                 points=pts, cum_arc=cum, bottleneck_ids=tuple(bn_ids),
                 bottleneck_arcs=tuple(bn_arcs))


def _build_fleet(fleet_id: str, profile: str, cfg: dict[str, float]) -> FleetConfig:
    required = ("v_min", "v_max", "accel_mag", "sensing_range", "spawn_speed")
    for k in required:
        if k not in cfg:
            raise ScenarioError(f"config {profile!r} missing field {k!r}")
    return FleetConfig(fleet_id=fleet_id, profile=profile,
                       v_min=cfg["v_min"], v_max=cfg["v_max"],
                       accel_mag=cfg["accel_mag"],
                       sensing_range=cfg["sensing_range"],
                       spawn_speed=cfg["spawn_speed"])


def _validate(spec: ScenarioSpec) -> None:
    if spec.dt <= 0:
        raise ScenarioError("dt must be positive")
    if spec.d_nmac >= spec.d_lowc:
        raise ScenarioError(
            f"d_nmac ({spec.d_nmac}) must be smaller than d_lowc ({spec.d_lowc})")
    if spec.goal_tolerance <= 0:
        raise ScenarioError("goal_tolerance must be positive")
    if spec.agents_per_route < 1:
        raise ScenarioError("agents_per_route must be at least 1")
    if spec.spawn_step < 0 or spec.spawn_k_max < 0:
        raise ScenarioError("spawn_step and spawn_k_max must be non-negative")
    for fc in spec.fleets.values():
        if not (fc.v_min < fc.v_max):
            raise ScenarioError(f"fleet {fc.fleet_id}: v_min must be below v_max")
        if fc.accel_mag <= 0:
            raise ScenarioError(f"fleet {fc.fleet_id}: accel_mag must be positive")
        if fc.sensing_range <= spec.d_lowc:
            raise ScenarioError(
                f"fleet {fc.fleet_id}: sensing_range ({fc.sensing_range}) "
                f"must exceed d_lowc ({spec.d_lowc})")
        if not (fc.v_min <= fc.spawn_speed <= fc.v_max):
            raise ScenarioError(f"fleet {fc.fleet_id}: spawn_speed outside speed range")
    for route in spec.routes.values():
        if route.fleet_id not in spec.fleets:
            raise ScenarioError(
                f"route {route.route_id}: unknown fleet {route.fleet_id!r}")
        kinds = [spec.waypoints[w].kind for w in route.waypoint_ids]
        if kinds[0] != "origin":
            raise ScenarioError(f"route {route.route_id}: must start at an origin")
        if kinds[-1] != "destination":
            raise ScenarioError(f"route {route.route_id}: must end at a destination")
        if kinds.count("merge") != 1 or kinds.count("intersection") != 1:
            raise ScenarioError(
                f"route {route.route_id}: must visit exactly one merge "
                "and one intersection")
        if kinds.index("merge") > kinds.index("intersection"):
            raise ScenarioError(
                f"route {route.route_id}: merge must precede the intersection")
    shared = {}
    for route in spec.routes.values():
        for b in route.bottleneck_ids:
            shared[b] = shared.get(b, 0) + 1
    for wp_id, count in shared.items():
        if count < 2:
            raise ScenarioError(
                f"bottleneck {wp_id} is visited by only one route")


def load_scenario(path: str | Path) -> ScenarioSpec:
    """Parse and validate a scenario file."""
    text = Path(path).read_text()
    return parse_scenario(text)


def parse_scenario(text: str) -> ScenarioSpec:
    params = dict(PARAM_DEFAULTS)
    rules = dict(RULE_DEFAULTS)
    waypoints: dict[str, Waypoint] = {}
    route_rows: list[tuple[int, str, str, tuple[str, ...]]] = []
    profiles: dict[str, dict[str, float]] = {}
    fleet_bindings: dict[str, str] = {}

    for line_no, section, key, toks in _parse_lines(text):
        if key is None:
            if section.startswith("config"):
                parts = section.split()
                if len(parts) != 2:
                    raise ScenarioError(
                        "config section must be named, e.g. [config X]", line_no)
                profiles.setdefault(parts[1], {})
            continue
        if section == "params":
            if key not in PARAM_DEFAULTS:
                raise ScenarioError(f"unknown param {key!r}", line_no)
            if key in ("agents_per_route", "spawn_k_max"):
                params[key] = _to_int(toks[0], line_no, key)
            else:
                params[key] = _to_float(toks[0], line_no, key)
        elif section == "waypoints":
            if len(toks) != 3:
                raise ScenarioError(
                    f"waypoint {key}: expected 'kind x y'", line_no)
            kind = toks[0]
            if kind not in WAYPOINT_KINDS:
                raise ScenarioError(
                    f"waypoint {key}: unknown kind {kind!r}", line_no)
            waypoints[key] = Waypoint(
                wp_id=key, kind=kind,
                x=_to_float(toks[1], line_no, f"waypoint {key} x"),
                y=_to_float(toks[2], line_no, f"waypoint {key} y"))
        elif section == "routes":
            if len(toks) < 3:
                raise ScenarioError(
                    f"route {key}: expected 'fleet wp wp ...'", line_no)
            route_rows.append((line_no, key, toks[0], tuple(toks[1:])))
        elif section.startswith("config "):
            profile = section.split()[1]
            profiles.setdefault(profile, {})[key] = _to_float(
                toks[0], line_no, f"config {profile} {key}")
        elif section == "fleets":
            fleet_bindings[key] = toks[0]
        elif section == "rules":
            if key not in RULE_DEFAULTS:
                raise ScenarioError(f"unknown rule param {key!r}", line_no)
            rules[key] = _to_float(toks[0], line_no, key)
        else:
            raise ScenarioError(f"unknown section {section!r}", line_no)

    if not waypoints:
        raise ScenarioError("no [waypoints] section")
    if not route_rows:
        raise ScenarioError("no [routes] section")
    if not fleet_bindings:
        raise ScenarioError("no [fleets] section")

    routes = {}
    for line_no, route_id, fleet_id, wp_ids in route_rows:
        routes[route_id] = _build_route(route_id, fleet_id, wp_ids, waypoints, line_no)

    fleets = {}
    for fleet_id, profile in fleet_bindings.items():
        if profile not in profiles:
            raise ScenarioError(
                f"fleet {fleet_id}: unknown config profile {profile!r}")
        fleets[fleet_id] = _build_fleet(fleet_id, profile, profiles[profile])

    spec = ScenarioSpec(
        waypoints=waypoints, routes=routes, fleets=fleets, profiles=profiles,
        dt=params["dt"], mission_horizon=params["mission_horizon"],
        d_nmac=params["d_nmac"], d_lowc=params["d_lowc"],
        goal_tolerance=params["goal_tolerance"],
        agents_per_route=params["agents_per_route"],
        spawn_base=params["spawn_base"], spawn_step=params["spawn_step"],
        spawn_k_max=params["spawn_k_max"], rule_params=rules)
    _validate(spec)
    return spec


def load_reference_scenario() -> ScenarioSpec:
    """Load the packaged reference scenario."""
    text = resources.files("skysep.scenarios").joinpath("reference.cfg").read_text()
    return parse_scenario(text)


def position_on_route(route: Route, arc: float) -> np.ndarray:
    """Coordinates of the point `arc` meters along the route polyline."""
    if arc < 0.0 or arc > route.length:
        raise ValueError(
            f"arc {arc} outside [0, {route.length}] for route {route.route_id}")
    i = int(np.searchsorted(route.cum_arc, arc, side="right")) - 1
    i = min(i, len(route.cum_arc) - 2)
    seg_len = route.cum_arc[i + 1] - route.cum_arc[i]
    t = (arc - route.cum_arc[i]) / seg_len
    return route.points[i] + t * (route.points[i + 1] - route.points[i])


def heading_on_route(route: Route, arc: float) -> float:
    """Bearing (radians, [0, 2pi)) of the segment under `arc`.

    Exactly at a vertex the heading of the outgoing segment is used.
    """
    if arc < 0.0 or arc > route.length:
        raise ValueError(
            f"arc {arc} outside [0, {route.length}] for route {route.route_id}")
    i = int(np.searchsorted(route.cum_arc, arc, side="right")) - 1
    i = min(max(i, 0), len(route.cum_arc) - 2)
    d = route.points[i + 1] - route.points[i]
    return math.atan2(d[1], d[0]) % (2.0 * math.pi)


def project_to_route(route: Route, x: float, y: float) -> tuple[float, float]:
    """(arc, lateral distance) of the polyline point nearest to (x, y).

    Ties between segments resolve to the smaller arc. Routes that share
    a corridor overlap exactly, so a lateral distance near zero means
    the point sits on this route's path.
    """
    best_arc, best_d2 = 0.0, math.inf
    p = np.array([x, y])
    for i in range(len(route.points) - 1):
        a, b = route.points[i], route.points[i + 1]
        d = b - a
        seg_len2 = float(d @ d)
        t = float((p - a) @ d) / seg_len2 if seg_len2 > 0.0 else 0.0
        t = min(max(t, 0.0), 1.0)
        off = p - (a + t * d)
        d2 = float(off @ off)
        if d2 < best_d2 - 1e-12:
            best_d2 = d2
            best_arc = float(route.cum_arc[i]) + t * math.sqrt(seg_len2)
    return best_arc, math.sqrt(best_d2)


def dist_to_next_waypoint(route: Route, arc: float) -> float:
    """Arc distance to the next route vertex strictly ahead (0 at the end)."""
    j = int(np.searchsorted(route.cum_arc, arc, side="right"))
    if j >= len(route.cum_arc):
        return 0.0
    return float(route.cum_arc[j] - arc)


def next_bottleneck(route: Route, arc: float) -> tuple[str, float] | None:
    """(waypoint id, arc) of the first merge/intersection strictly ahead."""
    for wp_id, b_arc in zip(route.bottleneck_ids, route.bottleneck_arcs):
        if b_arc > arc:
            return wp_id, b_arc
    return None


def agent_roster(spec: ScenarioSpec) -> list[tuple[str, str, str]]:
    """(agent_id, route_id, fleet_id) triples in creation order.

    Creation order is routes in file order, agents_per_route slots each;
    agent ids are built so lexicographic order matches creation order.
    """
    roster = []
    for route_id, route in spec.routes.items():
        for slot in range(spec.agents_per_route):
            roster.append((f"{route_id}-{slot:02d}", route_id, route.fleet_id))
    return roster


def sample_spawn_times(spec: ScenarioSpec, rng: np.random.Generator) -> list[float]:
    """Spawn times for every agent in creation order.

    Each agent independently draws k uniform from {0, ..., spawn_k_max} and
    spawns at spawn_base + spawn_step * k.
    """
    n = spec.n_agents
    ks = rng.integers(0, spec.spawn_k_max + 1, size=n)
    return [float(spec.spawn_base + spec.spawn_step * int(k)) for k in ks]
