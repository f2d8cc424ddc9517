"""Hand-computed oracles for every reward component."""
import math

import numpy as np
import pytest

from skysep.reward import (RewardWeights, r_action, r_los, r_mission, r_time,
                           r_velocity, total_reward)
from skysep.scenario import FleetConfig
from skysep.simcore import Action

W = RewardWeights()
X = FleetConfig(fleet_id="A", profile="X", v_min=0.0, v_max=44.88,
                accel_mag=1.71, sensing_range=1000.0, spawn_speed=20.0)


def test_los_inside_protected_zone():
    assert r_los(50.0, 100.0, 500.0, 0.1) == -1.0


def test_los_band_values():
    assert r_los(300.0, 100.0, 500.0, 0.1) == pytest.approx(-0.05, abs=1e-9)
    assert r_los(500.0, 100.0, 500.0, 0.1) == pytest.approx(0.0, abs=1e-9)
    assert r_los(100.0, 100.0, 500.0, 0.1) == pytest.approx(-0.1, abs=1e-9)


def test_los_outside_band():
    assert r_los(500.0000001, 100.0, 500.0, 0.1) == 0.0
    assert r_los(math.inf, 100.0, 500.0, 0.1) == 0.0


def test_los_jump_at_nmac_radius_is_one_minus_alpha():
    left = r_los(100.0 - 1e-12, 100.0, 500.0, 0.1)
    right = r_los(100.0, 100.0, 500.0, 0.1)
    assert left == -1.0
    assert abs(right - left) == pytest.approx(0.9, abs=1e-9)


def test_los_continuous_at_lowc():
    inside = r_los(500.0 - 1e-9, 100.0, 500.0, 0.1)
    outside = r_los(500.0 + 1e-9, 100.0, 500.0, 0.1)
    assert abs(inside - outside) < 1e-9


def test_los_monotone_in_distance():
    rng = np.random.default_rng(7)
    for _ in range(500):
        a, b = sorted(rng.uniform(0.0, 700.0, size=2))
        assert r_los(a, 100.0, 500.0, 0.1) <= r_los(b, 100.0, 500.0, 0.1)


def test_velocity_low_band():
    assert r_velocity(3.0, X, W) == pytest.approx(-0.001, abs=1e-9)


def test_velocity_high_band():
    assert r_velocity(44.0, X, W) == pytest.approx(-0.0001, abs=1e-9)


def test_velocity_mid_range_free():
    assert r_velocity(20.0, X, W) == 0.0


def test_velocity_boundaries_are_strict():
    # exactly at v_min + eta1 and v_max - eta2: no penalty
    assert r_velocity(5.14, X, W) == 0.0
    assert r_velocity(44.88 - 2.57, X, W) == 0.0


def test_velocity_bands_can_overlap():
    narrow = FleetConfig(fleet_id="A", profile="Z", v_min=20.0, v_max=25.0,
                         accel_mag=1.0, sensing_range=1000.0,
                         spawn_speed=22.0)
    assert r_velocity(23.0, narrow, W) == pytest.approx(-0.0011, abs=1e-9)


def test_action_penalties():
    assert r_action(Action.HOLD, Action.HOLD, W) == 0.0
    assert r_action(Action.ACCEL, Action.ACCEL, W) == pytest.approx(
        -0.0001, abs=1e-9)
    assert r_action(Action.DECEL, Action.ACCEL, W) == pytest.approx(
        -0.00011, abs=1e-9)
    # switching back to HOLD costs only the switch
    assert r_action(Action.HOLD, Action.ACCEL, W) == pytest.approx(
        -0.00001, abs=1e-9)


def test_mission_bonus():
    assert r_mission(30.0, W) == pytest.approx(0.1, abs=1e-9)
    assert r_mission(50.0, W) == 0.0      # strict inequality at the boundary
    assert r_mission(5000.0, W) == 0.0


def test_time_penalty():
    assert r_time(100.0, 1080.0, W) == pytest.approx(-0.0001, abs=1e-9)
    assert r_time(0.0, 1080.0, W) == pytest.approx(-0.0001, abs=1e-9)
    assert r_time(1080.0, 1080.0, W) == -1.0
    assert r_time(2000.0, 1080.0, W) == -1.0


def test_total_safe_cruise_is_time_penalty_only():
    r = total_reward(d_min=math.inf, speed=20.0, action=Action.HOLD,
                     prev_action=Action.HOLD, dist_final=5000.0,
                     airborne_time=100.0, fleet=X, d_nmac=100.0,
                     d_lowc=500.0, horizon=1080.0, w=W)
    assert r == pytest.approx(-0.0001, abs=1e-9)


def test_total_goal_step():
    r = total_reward(d_min=math.inf, speed=20.0, action=Action.HOLD,
                     prev_action=Action.HOLD, dist_final=30.0,
                     airborne_time=300.0, fleet=X, d_nmac=100.0,
                     d_lowc=500.0, horizon=1080.0, w=W)
    assert r == pytest.approx(0.0999, abs=1e-9)


def test_total_nmac_step_includes_full_separation_penalty():
    r = total_reward(d_min=80.0, speed=20.0, action=Action.HOLD,
                     prev_action=Action.HOLD, dist_final=5000.0,
                     airborne_time=100.0, fleet=X, d_nmac=100.0,
                     d_lowc=500.0, horizon=1080.0, w=W)
    assert r == pytest.approx(-1.0001, abs=1e-9)


def test_total_reward_bounds_random_sweep():
    rng = np.random.default_rng(11)
    lo = -1.0 - W.psi1_v - W.psi2_v - W.psi1_a - W.psi2_a - 1.0
    hi = W.psi_m
    for _ in range(1000):
        r = total_reward(
            d_min=float(rng.uniform(0.0, 1200.0)),
            speed=float(rng.uniform(0.0, 44.88)),
            action=Action(int(rng.integers(0, 3))),
            prev_action=Action(int(rng.integers(0, 3))),
            dist_final=float(rng.uniform(0.0, 10330.0)),
            airborne_time=float(rng.uniform(0.0, 2000.0)),
            fleet=X, d_nmac=100.0, d_lowc=500.0, horizon=1080.0, w=W)
        assert lo <= r <= hi
