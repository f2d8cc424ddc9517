"""Geometry and scenario-file loading."""
import math

import numpy as np
import pytest

from skysep.scenario import (ScenarioError, agent_roster, dist_to_next_waypoint,
                             heading_on_route, load_reference_scenario,
                             next_bottleneck, parse_scenario, position_on_route,
                             project_to_route, sample_spawn_times)


@pytest.fixture(scope="module")
def spec():
    return load_reference_scenario()


def test_reference_scenario_shape(spec):
    assert set(spec.routes) == {"I", "II", "III", "IV"}
    assert len(spec.waypoints) == 9
    assert set(spec.fleets) == {"A", "B"}
    assert spec.dt == 3.0
    assert spec.d_nmac == 100.0
    assert spec.d_lowc == 500.0
    assert spec.mission_horizon == 1080.0
    assert spec.agents_per_route == 5
    assert spec.n_agents == 20


def test_all_route_lengths_agree(spec):
    lengths = [r.length for r in spec.routes.values()]
    for length in lengths:
        assert abs(length - 10330.0) <= 1.0


def test_each_route_has_merge_then_intersection(spec):
    for route in spec.routes.values():
        assert len(route.bottleneck_ids) == 2
        merge, inter = route.bottleneck_ids
        assert spec.waypoints[merge].kind == "merge"
        assert spec.waypoints[inter].kind == "intersection"
        assert route.bottleneck_arcs[0] < route.bottleneck_arcs[1]


def test_position_on_route_endpoints(spec):
    for route in spec.routes.values():
        start = position_on_route(route, 0.0)
        end = position_on_route(route, route.length)
        assert np.allclose(start, route.points[0])
        assert np.allclose(end, route.points[-1])


def test_position_on_route_midpoint_of_first_leg(spec):
    route = spec.routes["I"]
    half = float(route.cum_arc[1]) / 2.0
    expect = (route.points[0] + route.points[1]) / 2.0
    assert np.allclose(position_on_route(route, half), expect)


def test_position_rejects_out_of_range(spec):
    route = spec.routes["I"]
    with pytest.raises(ValueError):
        position_on_route(route, -1.0)
    with pytest.raises(ValueError):
        position_on_route(route, route.length + 1.0)


def test_heading_matches_segment_direction(spec):
    route = spec.routes["I"]
    d = route.points[1] - route.points[0]
    expect = math.atan2(d[1], d[0]) % (2 * math.pi)
    assert heading_on_route(route, 1.0) == pytest.approx(expect)
    assert 0.0 <= heading_on_route(route, 1.0) < 2 * math.pi


def test_next_bottleneck_sequence(spec):
    route = spec.routes["I"]
    m_arc = route.bottleneck_arcs[0]
    i_arc = route.bottleneck_arcs[1]
    assert next_bottleneck(route, 0.0) == (route.bottleneck_ids[0], m_arc)
    assert next_bottleneck(route, m_arc) == (route.bottleneck_ids[1], i_arc)
    assert next_bottleneck(route, i_arc) is None


def test_next_bottleneck_monotone(spec):
    rng = np.random.default_rng(3)
    for route in spec.routes.values():
        arcs = np.sort(rng.uniform(0.0, route.length, size=200))
        seen = []
        for arc in arcs:
            nb = next_bottleneck(route, float(arc))
            seen.append(math.inf if nb is None else nb[1])
        assert all(later >= earlier
                   for later, earlier in zip(seen[1:], seen[:-1]))


def test_dist_to_next_waypoint(spec):
    route = spec.routes["I"]
    leg = float(route.cum_arc[1])
    assert dist_to_next_waypoint(route, 0.0) == pytest.approx(leg)
    assert dist_to_next_waypoint(route, leg - 10.0) == pytest.approx(10.0)
    assert dist_to_next_waypoint(route, route.length) == 0.0


def test_project_to_route_on_path_points(spec):
    rng = np.random.default_rng(5)
    route = spec.routes["III"]
    for _ in range(100):
        arc = float(rng.uniform(0.0, route.length))
        x, y = position_on_route(route, arc)
        proj_arc, lateral = project_to_route(route, x, y)
        assert lateral < 1e-6
        assert proj_arc == pytest.approx(arc, abs=1e-6)


def test_project_to_route_lateral_offset(spec):
    route = spec.routes["I"]
    # a point 50 m perpendicular off the middle of the first leg
    arc = float(route.cum_arc[1]) / 2.0
    x, y = position_on_route(route, arc)
    d = route.points[1] - route.points[0]
    n = np.array([-d[1], d[0]]) / np.linalg.norm(d)
    proj_arc, lateral = project_to_route(route, x + 50.0 * n[0],
                                         y + 50.0 * n[1])
    assert lateral == pytest.approx(50.0, abs=1e-6)
    assert proj_arc == pytest.approx(arc, abs=1e-6)


def test_agent_roster_order(spec):
    roster = agent_roster(spec)
    assert len(roster) == 20
    assert roster[0] == ("I-00", "I", "A")
    assert roster[5][0] == "II-00"
    ids = [r[0] for r in roster]
    assert ids == sorted(ids)


def test_spawn_times_law(spec):
    rng = np.random.default_rng(0)
    for _ in range(50):
        times = sample_spawn_times(spec, rng)
        assert len(times) == 20
        for t in times:
            assert 35.0 <= t <= 85.0
            k = (t - 35.0) / 5.0
            assert k == pytest.approx(round(k))


def test_spawn_times_cover_full_range(spec):
    rng = np.random.default_rng(1)
    seen = set()
    for _ in range(200):
        seen.update(sample_spawn_times(spec, rng))
    assert min(seen) == 35.0
    assert max(seen) == 85.0
    assert len(seen) == 11


def test_rebind_fleet_swaps_profile(spec):
    swapped = spec.rebind_fleet("B", "X")
    assert swapped.fleets["B"].v_max == spec.fleets["A"].v_max
    assert swapped.fleets["B"].profile == "X"
    # original untouched
    assert spec.fleets["B"].profile == "Y"
    with pytest.raises(ScenarioError):
        spec.rebind_fleet("B", "Q")


def test_parse_rejects_bad_input():
    with pytest.raises(ScenarioError):
        parse_scenario("junk without a section")
    with pytest.raises(ScenarioError):
        parse_scenario("[waypoints]\nWP1 = not numbers\n")


def test_profile_values(spec):
    a, b = spec.fleets["A"], spec.fleets["B"]
    assert (a.v_max, a.accel_mag, a.sensing_range) == (44.88, 1.71, 1000.0)
    assert (b.v_max, b.accel_mag, b.sensing_range) == (30.12, 1.02, 750.0)
    assert a.spawn_speed == b.spawn_speed == 20.0
