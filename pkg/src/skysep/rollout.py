"""Episode engine: wires policies, simulator, rewards and buffers together.

One step is: observe, choose per-fleet actions, apply them, advance
kinematics (including departure releases), detect conflicts, then score
every agent that acted. The separation used for the reward is the same
within-step closest-approach distance that drives NMAC detection, so a
-1 separation reward lands exactly on the step the conflict fires.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .baselines import RuleParams, rule_based_action
from .neuralnet import PolicyNetwork, greedy_actions, sample_actions
from .observation import build_observation
from .ppo import FleetBuffer
from .reward import RewardWeights, total_reward
from .scenario import ScenarioSpec, sample_spawn_times
from .simcore import (HARD_STEP_CAP, Action, Status, WorldState,
                      advance_kinematics, apply_action, detect_events,
                      is_episode_done, new_world, step_separations)


@dataclass
class Decision:
    action: Action
    log_prob: float = 0.0
    value: float = 0.0
    own_obs: np.ndarray | None = None
    intr_obs: np.ndarray | None = None


class RandomPolicy:
    kind = "random"
    trainable = False

    def __init__(self):
        self.rng: np.random.Generator | None = None

    def begin_episode(self, rng: np.random.Generator | None) -> None:
        self.rng = rng

    def act(self, world, spec, agents, greedy: bool) -> list[Decision]:
        draws = self.rng.integers(0, 3, size=len(agents))
        return [Decision(action=Action(int(d))) for d in draws]


class RuleBasedPolicy:
    kind = "rulebased"
    trainable = False

    def __init__(self, params: RuleParams):
        self.params = params

    def begin_episode(self, rng: np.random.Generator | None) -> None:
        pass

    def act(self, world, spec, agents, greedy: bool) -> list[Decision]:
        return [Decision(action=rule_based_action(world, spec, a, self.params))
                for a in agents]


class NeuralPolicy:
    kind = "ppoa2c"

    def __init__(self, net: PolicyNetwork, trainable: bool = False):
        self.net = net
        self.trainable = trainable
        self.rng: np.random.Generator | None = None

    def begin_episode(self, rng: np.random.Generator | None) -> None:
        self.rng = rng

    def act(self, world, spec, agents, greedy: bool) -> list[Decision]:
        obs = [build_observation(world, spec, a) for a in agents]
        own = np.stack([o[0] for o in obs])
        counts = [o[1].shape[0] for o in obs]
        intr = (np.concatenate([o[1] for o in obs], axis=0) if sum(counts)
                else np.zeros((0, own.shape[1]), dtype=np.float32))
        owner = np.repeat(np.arange(len(agents), dtype=np.intp), counts)
        probs, values = self.net.forward(own, intr, owner)
        if greedy:
            acts = greedy_actions(probs)
            logp = np.log(np.maximum(probs[np.arange(len(agents)), acts], 1e-45))
        else:
            acts, logp = sample_actions(probs, self.rng)
        return [Decision(action=Action(int(acts[i])), log_prob=float(logp[i]),
                         value=float(values[i]), own_obs=obs[i][0],
                         intr_obs=obs[i][1])
                for i in range(len(agents))]


@dataclass
class EpisodeResult:
    world: WorldState
    steps: int
    fleet_reward: dict[str, float] = field(default_factory=dict)


def run_episode(spec: ScenarioSpec, policies: dict[str, object],
                spawn_rng: np.random.Generator,
                action_rngs: dict[str, np.random.Generator] | None = None,
                buffers: dict[str, FleetBuffer] | None = None,
                greedy: bool = False,
                weights: RewardWeights = RewardWeights(),
                traj_rows: list | None = None,
                step_cap: int = HARD_STEP_CAP) -> EpisodeResult:
    """Run one complete episode; returns the finished world and rewards.

    policies maps fleet id to a policy object; buffers, when given for a
    trainable fleet, receive one transition per agent step. When
    traj_rows is a list it collects (step, agent_id, fleet, arc, speed,
    action, x, y) tuples for every active aircraft at every step.
    """
    action_rngs = action_rngs or {}
    spawn_times = sample_spawn_times(spec, spawn_rng)
    world = new_world(spec, spawn_times)
    fleet_ids = sorted(policies)
    for fid in fleet_ids:
        policies[fid].begin_episode(action_rngs.get(fid))
    fleet_reward = {fid: 0.0 for fid in fleet_ids}

    while True:
        actives = world.active()
        acted: list[tuple] = []
        for fid in fleet_ids:
            agents = [a for a in actives if a.fleet_id == fid]
            if not agents:
                continue
            decisions = policies[fid].act(world, spec, agents, greedy)
            fleet = spec.fleets[fid]
            for a, dec in zip(agents, decisions):
                prev = a.prev_action
                apply_action(a, dec.action, fleet, spec.dt)
                acted.append((a, dec, prev))

        advance_kinematics(world, spec)
        seps = step_separations(world)
        detect_events(world, spec, seps)

        sep_agents, dmin = seps
        row_of = {a.agent_id: i for i, a in enumerate(sep_agents)}
        for a, dec, prev in acted:
            i = row_of[a.agent_id]
            fleet = spec.fleets[a.fleet_id]
            if dmin.shape[0] > 1:
                dists = dmin[i]
                sensed = dists[dists <= fleet.sensing_range]
                d_min = float(sensed.min()) if sensed.size else math.inf
            else:
                d_min = math.inf
            route = spec.routes[a.route_id]
            dist_final = math.hypot(a.x - route.points[-1][0],
                                    a.y - route.points[-1][1])
            r = total_reward(
                d_min=d_min, speed=a.speed, action=dec.action,
                prev_action=prev, dist_final=dist_final,
                airborne_time=world.sim_time - a.spawn_time, fleet=fleet,
                d_nmac=spec.d_nmac, d_lowc=spec.d_lowc,
                horizon=spec.mission_horizon, w=weights)
            a.reward_sum += r
            fleet_reward[a.fleet_id] += r
            if buffers is not None and a.fleet_id in buffers \
                    and getattr(policies[a.fleet_id], "trainable", False):
                buffers[a.fleet_id].add(
                    a.idx, dec.own_obs, dec.intr_obs, int(dec.action),
                    dec.log_prob, dec.value, r, a.status != Status.ACTIVE)

        if traj_rows is not None:
            for a in sep_agents:
                traj_rows.append((world.step_index, a.agent_id, a.fleet_id,
                                  round(a.arc, 3), round(a.speed, 4),
                                  int(a.prev_action), round(a.x, 3),
                                  round(a.y, 3)))

        if is_episode_done(world, spec, step_cap):
            if buffers is not None:
                for buf in buffers.values():
                    buf.seal()
            break

    return EpisodeResult(world=world, steps=world.step_index,
                         fleet_reward=fleet_reward)
