"""Policy evaluation and the representation benchmark.

Evaluation runs greedy (argmax) episodes with per-episode reset seeds, so
two policies evaluated with the same seed face the identical scenario
sequence. The benchmark trains or loads each configured method and reports
its success/collision/timeout rates on the whole test-map suite.
"""

from __future__ import annotations

import csv
import math
import os
import zlib
from dataclasses import dataclass

import numpy as np

from . import config as cfg_mod
from . import ppo, world_sim
from .nets import PolicyValueNet


@dataclass(frozen=True)
class EvalReport:
    map: str
    success_rate: float
    mean_time_to_goal: float  # seconds over successful episodes; nan if none
    collision_rate: float
    timeout_rate: float
    episodes: int

    @staticmethod
    def header() -> list[str]:
        return ["map", "success_rate", "mean_time_to_goal", "collision_rate",
                "timeout_rate", "episodes"]

    def row(self) -> list:
        return [self.map, repr(self.success_rate),
                repr(self.mean_time_to_goal), repr(self.collision_rate),
                repr(self.timeout_rate), self.episodes]


def report_from_outcomes(map_name: str, outcomes: list[tuple[str, int]],
                         dt: float) -> EvalReport:
    n = len(outcomes)
    succ = [steps for out, steps in outcomes if out == "goal"]
    coll = sum(1 for out, _ in outcomes if out == "collision")
    tout = sum(1 for out, _ in outcomes if out == "timeout")
    mean_ttg = float(np.mean(succ) * dt) if succ else math.nan
    return EvalReport(map_name, len(succ) / n, mean_ttg, coll / n, tout / n, n)


def evaluate(cfg: cfg_mod.RunConfig, net: PolicyValueNet, map_name: str,
             n_episodes: int = 10, seed: int = 0,
             cache_dir: str | None = None,
             env=None) -> EvalReport:
    """Greedy evaluation of a policy on one bundled map."""
    if env is None:
        wmap = world_sim.get_map(map_name)
        env = cfg_mod.build_env(cfg, wmap, seed=seed, cache_dir=cache_dir)
    outcomes = ppo.run_episodes(env, net, n_episodes, seed, greedy=True)
    return report_from_outcomes(map_name, outcomes, cfg.sim.dt)


def write_reports_csv(path: str, rows: list[tuple[str, EvalReport]]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["method"] + EvalReport.header())
        for method, rep in rows:
            writer.writerow([method] + rep.row())


TEST_MAPS = ("M1", "M2", "M3", "M4", "M5")


def run_benchmark(configs: list[tuple[str, cfg_mod.RunConfig]], out_dir: str,
                  n_episodes: int = 10, seed: int = 1000,
                  maps: tuple[str, ...] = TEST_MAPS,
                  log=print) -> list[tuple[str, EvalReport]]:
    """Train (or reuse) every config, evaluate each on the test suite.

    Each method gets its own subdirectory of ``out_dir`` with the verbatim
    config, checkpoint, and learning curve. Returns (method, report) rows in
    method-major order.
    """
    rows: list[tuple[str, EvalReport]] = []
    cache_dir = os.path.join(out_dir, "cache")
    for label, cfg in configs:
        run_dir = os.path.join(out_dir, label)
        os.makedirs(run_dir, exist_ok=True)
        ckpt = os.path.join(run_dir, "checkpoint.npz")
        cfg_mod.save_config(cfg, os.path.join(run_dir, "config.yaml"))
        if os.path.exists(ckpt):
            log(f"[{label}] reusing existing checkpoint")
            net, _ = ppo.load_net(ckpt)
        else:
            log(f"[{label}] training ({cfg.stages()})")
            net = train_run(cfg, run_dir, cache_dir=cache_dir, log=log)
        for map_name in maps:
            rep = evaluate(cfg, net, map_name, n_episodes, seed,
                           cache_dir=cache_dir)
            rows.append((label, rep))
            log(f"[{label}] {map_name}: success {rep.success_rate:.2f} "
                f"collision {rep.collision_rate:.2f} timeout "
                f"{rep.timeout_rate:.2f}")
    write_reports_csv(os.path.join(out_dir, "benchmark.csv"), rows)
    summary = summarize(rows)
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["method", "mean_success_rate"])
        writer.writerows([[m, repr(s)] for m, s in summary])
    return rows


def summarize(rows: list[tuple[str, EvalReport]]) -> list[tuple[str, float]]:
    """Methods ranked by mean success rate across maps, best first."""
    by_method: dict[str, list[float]] = {}
    for method, rep in rows:
        by_method.setdefault(method, []).append(rep.success_rate)
    ranked = sorted(((m, float(np.mean(v))) for m, v in by_method.items()),
                    key=lambda t: -t[1])
    return ranked


def train_run(cfg: cfg_mod.RunConfig, out_dir: str,
              cache_dir: str | None = None, resume: bool = False,
              log=print) -> PolicyValueNet:
    """Run the config's curriculum, writing checkpoint/curve/config to out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    cache_dir = cache_dir or os.path.join(out_dir, "cache")
    cfg_mod.save_config(cfg, os.path.join(out_dir, "config.yaml"))
    bank = cfg_mod.build_bank(cfg)
    cgrid = (cfg_mod.build_classified_grid(cfg, bank, cache_dir)
             if cfg.uses_occupancy else None)
    maps = world_sim.builtin_maps()
    stages = cfg.stages()

    def env_builder(wmap):
        name_key = zlib.crc32(wmap.name.encode())
        seed_val = int(np.random.SeedSequence(
            [cfg.seed, 0xE17, name_key]).generate_state(1)[0])
        return cfg_mod.build_env(cfg, wmap, bank, cgrid, seed=seed_val)

    ckpt = os.path.join(out_dir, "checkpoint.npz")
    if resume and os.path.exists(ckpt):
        trainer = ppo.restore_trainer(ckpt, env_builder, log=log)
        log(f"resumed from {ckpt} at step {trainer.global_step}, "
            f"stage {trainer.stage_index}")
    else:
        net = cfg_mod.build_net(cfg)
        trainer = ppo.PpoTrainer(net, cfg.ppo, env_builder, seed=cfg.seed,
                                 checkpoint_path=ckpt, log=log)
    done_before = trainer.global_step
    for idx, (map_name, n_steps) in enumerate(stages):
        if map_name not in maps:
            raise world_sim.MapConfigError(f"unknown map {map_name!r} in stage"
                                           f" {idx}")
    consumed = 0
    for idx, (map_name, n_steps) in enumerate(stages):
        # progress is tracked by global step against the cumulative plan, so
        # a resumed run picks up exactly where the checkpoint left off
        consumed += n_steps
        remaining = consumed - trainer.global_step
        if remaining <= 0:
            continue
        if log:
            log(f"stage {idx}: {map_name} for {remaining} steps")
        trainer.stage_index = idx
        trainer.train_stage(maps[map_name], remaining)
    if trainer.global_step > done_before or not os.path.exists(ckpt):
        ppo.save_checkpoint(ckpt, trainer)
    curve_path = os.path.join(out_dir, "curve.csv")
    if resume and os.path.exists(curve_path) and done_before > 0:
        append_curve(curve_path, trainer)
    else:
        trainer.write_curve(curve_path)
    return trainer.net


def append_curve(path: str, trainer: ppo.PpoTrainer) -> None:
    with open(path, "a", newline="") as f:
        writer = csv.writer(f)
        for row in trainer.curve:
            writer.writerow(row.row())
