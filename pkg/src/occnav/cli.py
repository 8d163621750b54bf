"""Command-line entry point.

Subcommands: precompute (offline classification into the cache), train
(single map or curriculum), eval (greedy episodes -> report, optional step
trace), benchmark (several configs against the test-map suite), inspect
(primitive-bank dump and occupancy values for a posed scene), map-list.

Exit codes: 0 success, 2 configuration/map errors, 3 usage errors,
1 anything else; errors print as ``error:<category>: message`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys

import numpy as np

from . import bench, config as cfg_mod, ppo, world_sim
from .env import EpisodeDoneError, LAYOUTS
from .kinematics import save_bank_text
from .occupancy_eval import evaluate_all
from .voxel_grid import OccupancyArray, update_occupancy
from .world_sim import MapConfigError, RobotState, raycast_scan, scan_to_points


def _load_config(args) -> cfg_mod.RunConfig:
    cfg = (cfg_mod.load_config(args.config) if args.config
           else cfg_mod.RunConfig())
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "layout", None):
        cfg.layout = args.layout
    if getattr(args, "map", None):
        cfg.map = args.map
        cfg.curriculum = None
    return cfg


def cmd_precompute(args) -> int:
    cfg = _load_config(args)
    bank = cfg_mod.build_bank(cfg)
    cache_dir = os.path.join(args.out, "cache")
    before = set(os.listdir(cache_dir)) if os.path.isdir(cache_dir) else set()
    cgrid = cfg_mod.build_classified_grid(cfg, bank, cache_dir)
    after = set(os.listdir(cache_dir))
    hit = before == after
    sizes = np.array([len(b) for b in cgrid.bands])
    n_pri = np.array([int((b.c == 1).sum()) for b in cgrid.bands])
    print(f"cache {'hit' if hit else 'write'}: key {cgrid.cache_key} in "
          f"{cache_dir}")
    print(f"trajectories: {len(bank)}  grid voxels: {cgrid.spec.n_voxels}")
    print(f"priority voxels: total {n_pri.sum()}  per-trajectory "
          f"min/mean/max {n_pri.min()}/{n_pri.mean():.1f}/{n_pri.max()}")
    print(f"support voxels:  total {(sizes - n_pri).sum()}  per-trajectory "
          f"min/mean/max {(sizes - n_pri).min()}/"
          f"{(sizes - n_pri).mean():.1f}/{(sizes - n_pri).max()}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    bench.train_run(cfg, args.out, resume=args.resume, log=print)
    print(f"artifacts in {args.out}: checkpoint.npz curve.csv config.yaml")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    net, _ = ppo.load_net(args.checkpoint)
    map_name = args.map or cfg.map or "M1"
    cache_dir = os.path.join(args.out, "cache") if args.out else None
    wmap = world_sim.get_map(map_name)
    env = cfg_mod.build_env(cfg, wmap, seed=args.seed, cache_dir=cache_dir)
    if args.trace:
        _trace_episode(env, net, args.seed, args.trace, args.trace_frames)
    report = bench.evaluate(cfg, net, map_name, args.episodes, args.seed,
                            env=env)
    print(",".join(bench.EvalReport.header()))
    print(",".join(str(x) for x in report.row()))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        bench.write_reports_csv(os.path.join(args.out, "eval.csv"),
                                [(cfg.method_name, report)])
    return 0


def _trace_episode(env, net, seed: int, path: str, with_frames: bool) -> None:
    obs = env.reset(seed=seed)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        head = ["t", "x", "y", "theta", "v", "w", "action", "reward", "outcome"]
        if with_frames:
            head += [f"H{j}" for j in range(env.frame_len)]
        writer.writerow(head)
        done = False
        while not done:
            action = ppo.greedy_action(net, obs)
            res = env.step(action)
            st = env.state
            row = [env.t, repr(st.x), repr(st.y), repr(st.theta), repr(st.v),
                   repr(st.w), action, repr(res.reward), res.outcome]
            if with_frames:
                row += [repr(float(h)) for h in env.last_frame]
            writer.writerow(row)
            done = res.done
            obs = res.observation


def cmd_benchmark(args) -> int:
    if len(args.configs) < 2:
        print("error:usage: benchmark needs at least two configs",
              file=sys.stderr)
        return 3
    configs = []
    labels: dict[str, int] = {}
    for path in args.configs:
        cfg = cfg_mod.load_config(path)
        if args.seed is not None:
            cfg.seed = args.seed
        label = cfg.method_name
        if label in labels:
            labels[label] += 1
            label = f"{label}_{labels[label]}"
        else:
            labels[label] = 0
        configs.append((label, cfg))
    rows = bench.run_benchmark(configs, args.out, args.episodes,
                               seed=1000 if args.seed is None else args.seed)
    print(f"wrote {os.path.join(args.out, 'benchmark.csv')}")
    for method, mean_succ in bench.summarize(rows):
        print(f"{method}: mean success {mean_succ:.3f}")
    return 0


def cmd_inspect(args) -> int:
    cfg = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    bank = cfg_mod.build_bank(cfg)
    bank_path = os.path.join(args.out, "bank.txt")
    save_bank_text(bank, bank_path)
    print(f"wrote {bank_path} ({len(bank)} trajectories, "
          f"{bank.n_samples} points each)")
    if args.map:
        wmap = world_sim.get_map(args.map)
        cgrid = cfg_mod.build_classified_grid(cfg, bank,
                                              os.path.join(args.out, "cache"))
        state = RobotState(args.x, args.y, args.theta)
        spec = cfg_mod.lidar_spec(cfg)
        agent_pos = world_sim.agent_positions(wmap, np.zeros(len(wmap.agents)))
        ranges = raycast_scan(state, wmap, spec, agent_pos)
        occ = OccupancyArray.zeros(cgrid.spec, cfg.grid.sigma_max)
        update_occupancy(occ, scan_to_points(ranges, spec), cgrid.spec)
        values = evaluate_all(cgrid, occ)
        csv_path = os.path.join(args.out, "occupancy.csv")
        with open(csv_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["trajectory", "v", "w", "H"])
            for act, h in zip(bank.actions, values):
                writer.writerow([act.index, repr(act.v), repr(act.w), repr(float(h))])
        print(f"wrote {csv_path} (pose x={args.x} y={args.y} "
              f"theta={args.theta} on {args.map})")
    return 0


def cmd_map_list(args) -> int:
    print("name,area_m2,bounds,static_shapes,agents,start_region,goal_region")
    for name, m in sorted(world_sim.builtin_maps().items()):
        n_static = len(m.boxes) + len(m.circles)
        print(f"{m.name},{m.area:g},{list(m.bounds)},{n_static},"
              f"{len(m.agents)},{list(m.start_region)},{list(m.goal_region)}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="occnav",
                                description="trajectory-occupancy navigation "
                                "training and benchmark harness")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, out_required=True):
        sp.add_argument("--config", help="run config YAML (defaults used if "
                        "omitted)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", required=out_required, help="output directory")

    sp = sub.add_parser("precompute", help="build and cache the classified grid")
    add_common(sp)
    sp.set_defaults(func=cmd_precompute)

    sp = sub.add_parser("train", help="train per the config's map/curriculum")
    add_common(sp)
    sp.add_argument("--layout", choices=LAYOUTS)
    sp.add_argument("--map", help="override: train on this single map")
    sp.add_argument("--resume", action="store_true",
                    help="continue from the checkpoint in --out")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on a map")
    add_common(sp, out_required=False)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--map", help="bundled map name")
    sp.add_argument("--episodes", type=int, default=10)
    sp.add_argument("--layout", choices=LAYOUTS)
    sp.add_argument("--trace", help="write a per-step CSV trace of one episode")
    sp.add_argument("--trace-frames", action="store_true",
                    help="include the occupancy/laser frame in the trace")
    sp.set_defaults(func=cmd_eval, seed=0)

    sp = sub.add_parser("benchmark", help="train/evaluate several configs on "
                        "the test-map suite")
    sp.add_argument("--configs", nargs="+", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--episodes", type=int, default=10)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_benchmark)

    sp = sub.add_parser("inspect", help="dump the primitive bank and, with "
                        "--map, occupancy values for a posed scene")
    add_common(sp)
    sp.add_argument("--map")
    sp.add_argument("--x", type=float, default=1.0)
    sp.add_argument("--y", type=float, default=1.0)
    sp.add_argument("--theta", type=float, default=0.0)
    sp.set_defaults(func=cmd_inspect)

    sp = sub.add_parser("map-list", help="list the bundled maps")
    sp.set_defaults(func=cmd_map_list)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (cfg_mod.ConfigError, MapConfigError) as exc:
        print(f"error:config: {exc}", file=sys.stderr)
        return 2
    except EpisodeDoneError as exc:
        print(f"error:usage: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"error:io: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - last-resort reporting
        print(f"error:internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
