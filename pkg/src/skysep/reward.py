"""Per-step reward: separation, speed-envelope, action, mission, time terms.

All components are pure functions of their inputs so they can be checked
against hand-computed values to tight tolerances.
"""
from __future__ import annotations

from dataclasses import dataclass

from .scenario import FleetConfig
from .simcore import Action


@dataclass(frozen=True)
class RewardWeights:
    alpha: float = 0.1          # loss-of-separation band scale
    psi_t: float = 1e-4         # per-step time penalty
    psi_m: float = 0.1          # mission completion bonus
    eta_m: float = 50.0         # completion distance (m)
    psi1_v: float = 1e-3        # low-speed penalty
    psi2_v: float = 1e-4        # high-speed penalty
    eta1_v: float = 5.14        # low-speed margin (m/s)
    eta2_v: float = 2.57        # high-speed margin (m/s)
    psi1_a: float = 1e-5        # action-switch penalty
    psi2_a: float = 1e-4        # non-hold penalty


def r_los(d_min: float, d_nmac: float, d_lowc: float, alpha: float) -> float:
    """Separation penalty for the nearest sensed aircraft at distance d_min.

    -1 inside the protected zone; a linear band scaled by alpha between
    d_nmac and d_lowc (inclusive); 0 outside. The jump at d_nmac is
    exactly 1 - alpha.
    """
    if d_min < d_nmac:
        return -1.0
    if d_min <= d_lowc:
        return alpha * (-1.0 + (d_min - d_nmac) / (d_lowc - d_nmac))
    return 0.0


def r_velocity(speed: float, fleet: FleetConfig, w: RewardWeights) -> float:
    """Penalty for flying near the envelope edges (strict inequalities)."""
    r = 0.0
    if speed < fleet.v_min + w.eta1_v:
        r -= w.psi1_v
    if speed > fleet.v_max - w.eta2_v:
        r -= w.psi2_v
    return r


def r_action(action: Action, prev_action: Action, w: RewardWeights) -> float:
    """Penalty for switching actions and for any non-HOLD command."""
    r = 0.0
    if action != prev_action:
        r -= w.psi1_a
    if action != Action.HOLD:
        r -= w.psi2_a
    return r


def r_mission(dist_final: float, w: RewardWeights) -> float:
    """Completion bonus once strictly inside eta_m of the destination."""
    return w.psi_m if dist_final < w.eta_m else 0.0


def r_time(airborne_time: float, horizon: float, w: RewardWeights) -> float:
    """Small per-step cost while airborne; -1 on reaching the horizon."""
    return -1.0 if airborne_time >= horizon else -w.psi_t


def total_reward(*, d_min: float, speed: float, action: Action,
                 prev_action: Action, dist_final: float, airborne_time: float,
                 fleet: FleetConfig, d_nmac: float, d_lowc: float,
                 horizon: float, w: RewardWeights) -> float:
    """Sum of the five reward components for one agent step."""
    return (r_los(d_min, d_nmac, d_lowc, w.alpha)
            + r_velocity(speed, fleet, w)
            + r_action(action, prev_action, w)
            + r_mission(dist_final, w)
            + r_time(airborne_time, horizon, w))
