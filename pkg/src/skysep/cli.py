"""Command line interface.

Three subcommands cover the workbench lifecycle:

  train      run training episodes, write train_log.csv and one binary
             checkpoint per learning fleet
  evaluate   roll out frozen policies, write report.json / report.csv
             and optionally a per-step trajectory log
  report     merge evaluation reports from several run directories into
             one comparison CSV and render figures next to it
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .baselines import RuleParams
from .checkpoint import CheckpointError, apply_checkpoint, load_checkpoint, \
    save_checkpoint
from .metrics import REPORT_ROWS, EvalReport, aggregate, episode_metrics, \
    report_rows
from .neuralnet import PolicyNetwork
from .ppo import FleetBuffer, PPOTrainer, TrainConfig
from .rollout import NeuralPolicy, RandomPolicy, RuleBasedPolicy, run_episode
from .scenario import ScenarioError, load_reference_scenario, load_scenario
from .seeding import STREAM_ACTION, STREAM_INIT, STREAM_SHUFFLE, \
    STREAM_SPAWN, rng_for

POLICY_KINDS = ("ppoa2c", "rulebased", "random")
TRAIN_LOG_FIELDS = ("episode", "fleet", "mean_reward", "policy_loss",
                    "value_loss", "entropy", "nmac_count", "success_count")
TRAJECTORY_FIELDS = ("step", "agent_id", "fleet", "arc", "speed", "action",
                     "x", "y")


def fleet_arg(value: str) -> tuple[str, str]:
    """Parse a POLICY:PROFILE fleet binding."""
    parts = value.split(":")
    if len(parts) != 2 or not all(parts):
        raise argparse.ArgumentTypeError(
            f"expected POLICY:PROFILE, got {value!r}")
    policy, profile = parts
    if policy not in POLICY_KINDS:
        raise argparse.ArgumentTypeError(
            f"unknown policy {policy!r}, choose from {', '.join(POLICY_KINDS)}")
    return policy, profile


def _load_spec(args):
    spec = (load_scenario(args.scenario) if args.scenario
            else load_reference_scenario())
    if set(spec.fleets) != {"A", "B"}:
        raise ScenarioError(
            f"scenario must define fleets A and B, found {sorted(spec.fleets)}")
    bindings = {"A": args.fleet_a, "B": args.fleet_b}
    for fid, (_, profile) in bindings.items():
        spec = spec.rebind_fleet(fid, profile)
    return spec, bindings


def _fleet_sizes(spec) -> dict[str, int]:
    sizes = {fid: 0 for fid in spec.fleets}
    for route in spec.routes.values():
        sizes[route.fleet_id] += spec.agents_per_route
    return sizes


def _fmt(x: float) -> str:
    return f"{x:.8g}"


def cmd_train(args) -> int:
    spec, bindings = _load_spec(args)
    cfg = TrainConfig() if args.grad_clip is None \
        else TrainConfig(max_grad_norm=args.grad_clip)
    policies: dict[str, object] = {}
    trainers: dict[str, PPOTrainer] = {}
    for fid in sorted(spec.fleets):
        kind, _ = bindings[fid]
        if kind == "ppoa2c":
            net = PolicyNetwork()
            net.init_params(np.random.SeedSequence([args.seed,
                                                    STREAM_INIT[fid]]))
            policies[fid] = NeuralPolicy(net, trainable=True)
            trainers[fid] = PPOTrainer(net, cfg)
        elif kind == "rulebased":
            policies[fid] = RuleBasedPolicy(RuleParams.from_scenario(spec))
        else:
            policies[fid] = RandomPolicy()
    if not trainers:
        print("train: at least one fleet must use the ppoa2c policy",
              file=sys.stderr)
        return 2

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    buffers = {fid: FleetBuffer() for fid in trainers}
    sizes = _fleet_sizes(spec)
    log_rows: list[dict] = []
    for ep in range(args.episodes):
        spawn_rng = rng_for(args.seed, STREAM_SPAWN, ep)
        action_rngs = {fid: rng_for(args.seed, STREAM_ACTION[fid], ep)
                       for fid in policies}
        result = run_episode(spec, policies, spawn_rng, action_rngs,
                             buffers=buffers, greedy=False)
        em = episode_metrics(result.world, spec, result.fleet_reward)
        for fid in sorted(trainers):
            stats = trainers[fid].train_episode(
                buffers[fid], rng_for(args.seed, STREAM_SHUFFLE[fid], ep))
            nmacs = sum(1 for ev in result.world.events
                        if ev.kind == "NMAC" and fid in ev.fleets)
            log_rows.append({
                "episode": ep,
                "fleet": fid,
                "mean_reward": _fmt(result.fleet_reward[fid] / sizes[fid]),
                "policy_loss": _fmt(stats.policy_loss if stats else 0.0),
                "value_loss": _fmt(stats.value_loss if stats else 0.0),
                "entropy": _fmt(stats.entropy if stats else 0.0),
                "nmac_count": nmacs,
                "success_count": len(em.mission_minutes[fid]),
            })
        if (ep + 1) % 25 == 0 or ep + 1 == args.episodes:
            parts = ", ".join(
                f"{fid} reward {result.fleet_reward[fid] / sizes[fid]:.2f}"
                for fid in sorted(trainers))
            print(f"[train] episode {ep + 1}/{args.episodes}: "
                  f"{parts}, N_s {em.n_success}, NMAC {em.nmac_total}",
                  file=sys.stderr)

    log_path = out / "train_log.csv"
    with log_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRAIN_LOG_FIELDS,
                                lineterminator="\n")
        writer.writeheader()
        writer.writerows(log_rows)
    for fid in sorted(trainers):
        path = out / f"checkpoint_{fid}.bin"
        save_checkpoint(path, trainers[fid].net, fid, args.seed,
                        args.episodes)
        print(f"wrote {path}")
    print(f"wrote {log_path}")
    return 0


def _eval_policies(spec, bindings, args) -> dict[str, object]:
    ckpt_paths = {"A": args.checkpoint_a, "B": args.checkpoint_b}
    policies: dict[str, object] = {}
    for fid in sorted(spec.fleets):
        kind, _ = bindings[fid]
        if kind == "ppoa2c":
            if not ckpt_paths[fid]:
                raise CheckpointError(
                    f"fleet {fid} uses ppoa2c: "
                    f"--checkpoint-{fid.lower()} is required")
            net = PolicyNetwork()
            apply_checkpoint(net, load_checkpoint(ckpt_paths[fid]))
            policies[fid] = NeuralPolicy(net, trainable=False)
        elif kind == "rulebased":
            policies[fid] = RuleBasedPolicy(RuleParams.from_scenario(spec))
        else:
            policies[fid] = RandomPolicy()
    return policies


def cmd_evaluate(args) -> int:
    spec, bindings = _load_spec(args)
    policies = _eval_policies(spec, bindings, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    episodes = []
    traj_rows: list | None = [] if args.trajectories else None
    for ep in range(args.episodes):
        spawn_rng = rng_for(args.seed, STREAM_SPAWN, ep)
        action_rngs = {fid: rng_for(args.seed, STREAM_ACTION[fid], ep)
                       for fid in policies}
        rows = traj_rows if (traj_rows is not None and ep == 0) else None
        result = run_episode(spec, policies, spawn_rng, action_rngs,
                             greedy=not args.sample, traj_rows=rows)
        episodes.append(episode_metrics(result.world, spec,
                                        result.fleet_reward))

    fleets_desc = {fid: f"{bindings[fid][0]}:{bindings[fid][1]}"
                   for fid in sorted(spec.fleets)}
    report = aggregate(episodes, fleets_desc)
    json_path = out / "report.json"
    json_path.write_text(json.dumps(report.to_dict(), indent=2,
                                    sort_keys=True) + "\n")
    csv_path = out / "report.csv"
    rows = report_rows(report)
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "value"])
        for name in REPORT_ROWS:
            writer.writerow([name, rows[name]])
    if traj_rows is not None:
        traj_path = out / "trajectories.csv"
        with traj_path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRAJECTORY_FIELDS)
            writer.writerows(traj_rows)
        print(f"wrote {traj_path} (first episode)")
    print(f"episodes: {report.n_episodes}")
    print(f"N_s: {report.n_success_mean:.2f}±{report.n_success_std:.2f}")
    print(f"NMAC total: {report.nmac_total_mean:.3f}")
    print(f"wrote {json_path}")
    print(f"wrote {csv_path}")
    return 0


def cmd_report(args) -> int:
    from . import plotting

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports: dict[str, EvalReport] = {}
    n_errors = 0
    for d in args.run_dirs:
        run_dir = Path(d)
        label = run_dir.name or str(run_dir)
        if label in reports:
            label = str(run_dir)
        try:
            data = json.loads((run_dir / "report.json").read_text())
            reports[label] = EvalReport.from_dict(data)
        except FileNotFoundError:
            print(f"report: skipping {d}: no report.json", file=sys.stderr)
            n_errors += 1
        except (ValueError, KeyError) as exc:
            print(f"report: skipping {d}: {exc}", file=sys.stderr)
            n_errors += 1
    if not reports:
        print("report: no readable reports, nothing to merge",
              file=sys.stderr)
        return 1

    combined = out / "report_combined.csv"
    per_label = {label: report_rows(rep) for label, rep in reports.items()}
    with combined.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", *per_label])
        for name in REPORT_ROWS:
            writer.writerow([name, *(per_label[m][name] for m in per_label)])
    print(f"wrote {combined}")

    dicts = {label: rep.to_dict() for label, rep in reports.items()}
    for path in (plotting.save_nmac_breakdown(dicts, out / "nmac_breakdown.png"),
                 plotting.save_outcome_summary(dicts,
                                               out / "outcome_summary.png")):
        print(f"wrote {path}")
    for d in args.run_dirs:
        run_dir = Path(d)
        log_path = run_dir / "train_log.csv"
        if not log_path.exists():
            continue
        label = run_dir.name or str(run_dir)
        with log_path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        if rows:
            fig = plotting.save_training_curves(
                rows, label, out / f"training_curves_{label}.png")
            print(f"wrote {fig}")
    return 1 if n_errors else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skysep",
        description="Two-fleet merging-corridor separation workbench: "
                    "train, evaluate and compare deconfliction policies.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp, default_episodes: int):
        sp.add_argument("--scenario", metavar="FILE",
                        help="scenario config file "
                             "(default: packaged reference scenario)")
        sp.add_argument("--fleet-a", type=fleet_arg, default=("ppoa2c", "X"),
                        metavar="POLICY:PROFILE",
                        help="fleet A binding, e.g. ppoa2c:X or rulebased:Y "
                             "(default ppoa2c:X)")
        sp.add_argument("--fleet-b", type=fleet_arg, default=("ppoa2c", "X"),
                        metavar="POLICY:PROFILE",
                        help="fleet B binding (default ppoa2c:X)")
        sp.add_argument("--episodes", type=int, default=default_episodes,
                        help=f"number of episodes (default {default_episodes})")
        sp.add_argument("--seed", type=int, default=0,
                        help="master seed (default 0)")
        sp.add_argument("--out", required=True, metavar="DIR",
                        help="output directory")

    tr = sub.add_parser("train", help="train ppoa2c fleets")
    add_common(tr, 400)
    tr.add_argument("--grad-clip", type=float, default=None, metavar="NORM",
                    help="optional global gradient norm clip (off by default)")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("evaluate", help="evaluate frozen policies")
    add_common(ev, 100)
    ev.add_argument("--checkpoint-a", metavar="FILE",
                    help="checkpoint for fleet A when it uses ppoa2c")
    ev.add_argument("--checkpoint-b", metavar="FILE",
                    help="checkpoint for fleet B when it uses ppoa2c")
    ev.add_argument("--sample", action="store_true",
                    help="sample actions from the policy distribution "
                         "instead of the default greedy argmax")
    ev.add_argument("--trajectories", action="store_true",
                    help="write trajectories.csv with per-step states "
                         "of the first episode")
    ev.set_defaults(func=cmd_evaluate)

    rp = sub.add_parser("report",
                        help="merge evaluation reports and render figures")
    rp.add_argument("run_dirs", nargs="+", metavar="RUN_DIR",
                    help="directories containing report.json "
                         "(and optionally train_log.csv)")
    rp.add_argument("--out", default=".", metavar="DIR",
                    help="where to write the merged CSV and figures "
                         "(default: current directory)")
    rp.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, CheckpointError, OSError) as exc:
        print(f"skysep: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
