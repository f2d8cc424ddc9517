"""Episode scoring and multi-episode aggregation.

NMAC events are broken down by fleet pairing (AA/AB/BB) and by the
bottleneck they are attributable to; mission times cover successful
agents only and feed the fairness index between the two fleets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .scenario import ScenarioSpec
from .simcore import ConflictEvent, Status, WorldState

PAIR_CATEGORIES = ("AA", "AB", "BB")
SCHEMA_VERSION = 1


def bottleneck_labels(spec: ScenarioSpec) -> dict[str, str]:
    """Waypoint id -> category label: merges (id order) M1, M2, ...; the
    intersection IN."""
    merges = sorted(wp.wp_id for wp in spec.waypoints.values()
                    if wp.kind == "merge")
    labels = {wp_id: f"M{i + 1}" for i, wp_id in enumerate(merges)}
    for wp in spec.waypoints.values():
        if wp.kind == "intersection":
            labels[wp.wp_id] = "IN"
    return labels


def classify_nmac(event: ConflictEvent, spec: ScenarioSpec) -> tuple[str, str]:
    """(pair category, bottleneck category) for one NMAC event.

    The bottleneck is the pair's shared next bottleneck when they have
    one, otherwise the bottleneck waypoint nearest the conflict midpoint.
    """
    if event.kind != "NMAC":
        raise ValueError(f"cannot classify event of kind {event.kind!r}")
    pair = "".join(sorted(event.fleets))
    labels = bottleneck_labels(spec)
    nb_a, nb_b = event.next_bottlenecks
    if nb_a is not None and nb_a == nb_b:
        return pair, labels[nb_a]
    mx, my = event.midpoint
    best, best_d = None, math.inf
    for wp_id in sorted(labels):
        wp = spec.waypoints[wp_id]
        d = math.hypot(wp.x - mx, wp.y - my)
        if d < best_d:
            best, best_d = wp_id, d
    return pair, labels[best]


@dataclass
class EpisodeMetrics:
    n_success: int
    nmac_pair: dict[str, int]
    nmac_bottleneck: dict[str, int]
    nmac_total: int
    fleet_reward: dict[str, float]
    mission_minutes: dict[str, list[float]]
    steps: int


def episode_metrics(world: WorldState, spec: ScenarioSpec,
                    fleet_reward: dict[str, float] | None = None,
                    ) -> EpisodeMetrics:
    """Score one finished episode."""
    labels = bottleneck_labels(spec)
    pair_counts = {c: 0 for c in PAIR_CATEGORIES}
    bneck_counts = {lab: 0 for lab in sorted(set(labels.values()))}
    total = 0
    for ev in world.events:
        if ev.kind != "NMAC":
            continue
        pair, bneck = classify_nmac(ev, spec)
        pair_counts[pair] = pair_counts.get(pair, 0) + 1
        bneck_counts[bneck] = bneck_counts.get(bneck, 0) + 1
        total += 1
    fleets = sorted(spec.fleets)
    missions: dict[str, list[float]] = {f: [] for f in fleets}
    n_success = 0
    rewards = {f: 0.0 for f in fleets}
    for a in world.aircraft:
        rewards[a.fleet_id] = rewards.get(a.fleet_id, 0.0) + a.reward_sum
        if a.status == Status.DONE_SUCCESS:
            n_success += 1
            missions[a.fleet_id].append((a.end_time - a.spawn_time) / 60.0)
    if fleet_reward is not None:
        rewards = dict(fleet_reward)
    return EpisodeMetrics(n_success=n_success, nmac_pair=pair_counts,
                          nmac_bottleneck=bneck_counts, nmac_total=total,
                          fleet_reward=rewards, mission_minutes=missions,
                          steps=world.step_index)


def fairness(t1: float, t2: float) -> float:
    """Transit-time fairness percentage between two mean mission times."""
    if t1 <= 0.0 or t2 <= 0.0:
        raise ValueError(f"mission times must be positive, got {t1}, {t2}")
    return (1.0 - abs(t1 - t2) / max(t1, t2)) * 100.0


def _mean_std(xs: list[float]) -> tuple[float, float]:
    arr = np.asarray(xs, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, std


@dataclass
class EvalReport:
    schema_version: int
    n_episodes: int
    n_success_mean: float
    n_success_std: float
    nmac_pair_mean: dict[str, float]
    nmac_pair_std: dict[str, float]
    nmac_bottleneck_mean: dict[str, float]
    nmac_bottleneck_std: dict[str, float]
    nmac_total_mean: float
    nmac_total_std: float
    reward_mean: float
    reward_std: float
    fleet_reward_mean: dict[str, float]
    mission_minutes_mean: dict[str, float | None]
    mission_minutes_std: dict[str, float | None]
    fairness_pct: float | None
    steps_mean: float
    fleets: dict[str, str] = field(default_factory=dict)   # fleet -> "policy:profile"

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "n_episodes": self.n_episodes,
            "fleets": self.fleets,
            "n_success": {"mean": self.n_success_mean, "std": self.n_success_std},
            "nmac_pair": {k: {"mean": self.nmac_pair_mean[k],
                              "std": self.nmac_pair_std[k]}
                          for k in sorted(self.nmac_pair_mean)},
            "nmac_bottleneck": {k: {"mean": self.nmac_bottleneck_mean[k],
                                    "std": self.nmac_bottleneck_std[k]}
                                for k in sorted(self.nmac_bottleneck_mean)},
            "nmac_total": {"mean": self.nmac_total_mean, "std": self.nmac_total_std},
            "reward": {"mean": self.reward_mean, "std": self.reward_std},
            "fleet_reward_mean": self.fleet_reward_mean,
            "mission_minutes": {
                f: {"mean": self.mission_minutes_mean[f],
                    "std": self.mission_minutes_std[f]}
                for f in sorted(self.mission_minutes_mean)},
            "fairness_pct": self.fairness_pct,
            "steps_mean": self.steps_mean,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(
                f"unsupported report schema {d.get('schema_version')!r}, "
                f"expected {SCHEMA_VERSION}")
        mm = d["mission_minutes"]
        return cls(
            schema_version=d["schema_version"],
            n_episodes=d["n_episodes"],
            n_success_mean=d["n_success"]["mean"],
            n_success_std=d["n_success"]["std"],
            nmac_pair_mean={k: v["mean"] for k, v in d["nmac_pair"].items()},
            nmac_pair_std={k: v["std"] for k, v in d["nmac_pair"].items()},
            nmac_bottleneck_mean={k: v["mean"]
                                  for k, v in d["nmac_bottleneck"].items()},
            nmac_bottleneck_std={k: v["std"]
                                 for k, v in d["nmac_bottleneck"].items()},
            nmac_total_mean=d["nmac_total"]["mean"],
            nmac_total_std=d["nmac_total"]["std"],
            reward_mean=d["reward"]["mean"],
            reward_std=d["reward"]["std"],
            fleet_reward_mean=d["fleet_reward_mean"],
            mission_minutes_mean={f: mm[f]["mean"] for f in mm},
            mission_minutes_std={f: mm[f]["std"] for f in mm},
            fairness_pct=d["fairness_pct"],
            steps_mean=d["steps_mean"],
            fleets=d.get("fleets", {}))


def aggregate(episodes: list[EpisodeMetrics],
              fleets: dict[str, str] | None = None) -> EvalReport:
    """Aggregate per-episode metrics into a report.

    Mission times pool every successful agent across episodes; a fleet
    with no successful agent leaves its mean (and the fairness index)
    undefined rather than inventing a number.
    """
    if not episodes:
        raise ValueError("cannot aggregate an empty episode list")
    fleet_ids = sorted(episodes[0].fleet_reward)
    ns_mean, ns_std = _mean_std([e.n_success for e in episodes])
    pair_mean, pair_std = {}, {}
    for cat in PAIR_CATEGORIES:
        m, s = _mean_std([e.nmac_pair.get(cat, 0) for e in episodes])
        pair_mean[cat], pair_std[cat] = m, s
    bneck_cats = sorted(episodes[0].nmac_bottleneck)
    bneck_mean, bneck_std = {}, {}
    for cat in bneck_cats:
        m, s = _mean_std([e.nmac_bottleneck.get(cat, 0) for e in episodes])
        bneck_mean[cat], bneck_std[cat] = m, s
    tot_mean, tot_std = _mean_std([e.nmac_total for e in episodes])
    rew_mean, rew_std = _mean_std(
        [sum(e.fleet_reward.values()) for e in episodes])
    fleet_rew = {f: float(np.mean([e.fleet_reward.get(f, 0.0) for e in episodes]))
                 for f in fleet_ids}
    t_mean: dict[str, float | None] = {}
    t_std: dict[str, float | None] = {}
    for f in fleet_ids:
        pooled = [t for e in episodes for t in e.mission_minutes.get(f, [])]
        if pooled:
            m, s = _mean_std(pooled)
            t_mean[f], t_std[f] = m, s
        else:
            t_mean[f], t_std[f] = None, None
    fair = None
    if len(fleet_ids) == 2:
        ta, tb = t_mean[fleet_ids[0]], t_mean[fleet_ids[1]]
        if ta is not None and tb is not None:
            fair = fairness(ta, tb)
    steps_mean = float(np.mean([e.steps for e in episodes]))
    return EvalReport(
        schema_version=SCHEMA_VERSION, n_episodes=len(episodes),
        n_success_mean=ns_mean, n_success_std=ns_std,
        nmac_pair_mean=pair_mean, nmac_pair_std=pair_std,
        nmac_bottleneck_mean=bneck_mean, nmac_bottleneck_std=bneck_std,
        nmac_total_mean=tot_mean, nmac_total_std=tot_std,
        reward_mean=rew_mean, reward_std=rew_std,
        fleet_reward_mean=fleet_rew,
        mission_minutes_mean=t_mean, mission_minutes_std=t_std,
        fairness_pct=fair, steps_mean=steps_mean,
        fleets=fleets or {})


REPORT_ROWS = ("AA", "AB", "BB", "M1", "M2", "IN", "Total",
               "N_s", "R_bar", "T_A_min", "T_B_min", "F_t_pct")


def report_rows(report: EvalReport) -> dict[str, str]:
    """Row label -> formatted cell for the comparison table."""
    def fmt(x, nd=3):
        return "NA" if x is None else f"{x:.{nd}f}"

    fleet_ids = sorted(report.mission_minutes_mean) or ["A", "B"]
    rows = {}
    for cat in PAIR_CATEGORIES:
        rows[cat] = fmt(report.nmac_pair_mean.get(cat))
    for cat in ("M1", "M2", "IN"):
        rows[cat] = fmt(report.nmac_bottleneck_mean.get(cat))
    rows["Total"] = fmt(report.nmac_total_mean)
    rows["N_s"] = (f"{report.n_success_mean:.2f}"
                   f"±{report.n_success_std:.2f}")
    rows["R_bar"] = fmt(report.reward_mean, 2)
    rows["T_A_min"] = fmt(report.mission_minutes_mean.get(fleet_ids[0]), 2)
    rows["T_B_min"] = fmt(report.mission_minutes_mean.get(fleet_ids[-1]), 2)
    rows["F_t_pct"] = fmt(report.fairness_pct, 1)
    return rows
