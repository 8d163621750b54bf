"""Run configuration: one YAML file fully determines a run.

Every tunable of the pipeline (action grid, primitive horizon, voxel grid,
thresholds and weights, lidar, reward, observation stacking, network, PPO)
lives here with its default. Configs are validated eagerly with
field-path error messages and are copied verbatim into every output
directory, so a run can always be reproduced from its artifacts.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from . import env as env_mod
from . import nets, ppo, world_sim
from .kinematics import (DEFAULT_HORIZON, DEFAULT_N_SAMPLES, ActionSpace,
                         PrimitiveBank, build_primitive_bank)
from .voxel_grid import (DEFAULT_BETA_PRIORITY, DEFAULT_BETA_SUPPORT,
                         DEFAULT_SIGMA_MAX, DEFAULT_TAU_PRIORITY,
                         DEFAULT_TAU_SUPPORT, ClassifiedGrid, GridSpec,
                         classification_cache_key, classify_bank,
                         load_classified_grid, save_classified_grid)


class ConfigError(ValueError):
    """Invalid run configuration; the message starts with the field path."""


@dataclass(frozen=True)
class BankConfig:
    horizon: float = DEFAULT_HORIZON
    n_samples: int = DEFAULT_N_SAMPLES


@dataclass(frozen=True)
class GridConfig:
    resolution: float = 0.1
    extent: tuple = (-0.5, 3.0, -3.0, 3.0, 0.0, 0.1)
    tau_priority: float = DEFAULT_TAU_PRIORITY
    tau_support: float = DEFAULT_TAU_SUPPORT
    beta_priority: float = DEFAULT_BETA_PRIORITY
    beta_support: float = DEFAULT_BETA_SUPPORT
    sigma_max: float = DEFAULT_SIGMA_MAX

    def __post_init__(self) -> None:
        if not 0 < self.tau_priority < self.tau_support:
            raise ValueError("need 0 < tau_priority < tau_support")
        if self.beta_priority <= 0 or self.beta_support <= 0:
            raise ValueError("voxel weights must be > 0")
        if self.sigma_max <= 0:
            raise ValueError("sigma_max must be > 0")


@dataclass(frozen=True)
class LidarConfig:
    n_beams: int = 360
    fov_deg: float = 360.0
    max_range: float = 5.0
    mount_offset: tuple = (0.0, 0.0)
    z_sensor: float = 0.05
    jitter: float = 0.0


@dataclass(frozen=True)
class ObsConfig:
    n_stack: int = env_mod.DEFAULT_N_STACK
    n_skip: int = env_mod.DEFAULT_N_SKIP
    n_laser: int = env_mod.DEFAULT_N_LASER
    normalize_target: bool = False


@dataclass(frozen=True)
class NetConfig:
    fc_widths: tuple = (512, 256)
    conv_channels: tuple = (32, 32, 32)
    conv_kernels: tuple = (5, 3, 3)
    conv_strides: tuple = (2, 2, 1)


@dataclass(frozen=True)
class SimConfig:
    dt: float = world_sim.DEFAULT_DT
    robot_radius: float = world_sim.DEFAULT_ROBOT_RADIUS

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.robot_radius <= 0:
            raise ValueError("robot_radius must be > 0")


DEFAULT_CURRICULUM = [("T0S", 100_000), ("T1S", 100_000), ("T0D", 100_000),
                      ("T1D", 100_000), ("T2D", 100_000)]


@dataclass
class RunConfig:
    """Everything needed to reproduce a run."""

    seed: int = 0
    layout: str = env_mod.OCC_1D
    map: str | None = "T0S"
    curriculum: list[tuple[str, int]] | None = None
    action_space: ActionSpace = field(default_factory=ActionSpace)
    bank: BankConfig = field(default_factory=BankConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    lidar: LidarConfig = field(default_factory=LidarConfig)
    reward: env_mod.RewardConfig = field(default_factory=env_mod.RewardConfig)
    obs: ObsConfig = field(default_factory=ObsConfig)
    net: NetConfig = field(default_factory=NetConfig)
    ppo: ppo.PpoConfig = field(default_factory=ppo.PpoConfig)
    sim: SimConfig = field(default_factory=SimConfig)

    def stages(self) -> list[tuple[str, int]]:
        if self.curriculum:
            return list(self.curriculum)
        return [(self.map, self.ppo.total_steps)]

    @property
    def variant(self) -> str:
        return {env_mod.OCC_1D: nets.FC, env_mod.LASER_1D: nets.FC,
                env_mod.OCC_CH: nets.CONV1D, env_mod.LASER_CH: nets.CONV1D,
                env_mod.OCC_2D: nets.CONV2D}[self.layout]

    @property
    def uses_occupancy(self) -> bool:
        return self.layout in (env_mod.OCC_1D, env_mod.OCC_CH, env_mod.OCC_2D)

    @property
    def method_name(self) -> str:
        rep = "occ" if self.uses_occupancy else "laser"
        return f"{rep}_{self.variant.upper()}"


_SECTIONS = {
    "action_space": ActionSpace,
    "bank": BankConfig,
    "grid": GridConfig,
    "lidar": LidarConfig,
    "reward": env_mod.RewardConfig,
    "obs": ObsConfig,
    "net": NetConfig,
    "ppo": ppo.PpoConfig,
    "sim": SimConfig,
}

_TUPLE_FIELDS = {"extent", "mount_offset", "fc_widths", "conv_channels",
                 "conv_kernels", "conv_strides"}


def _build_section(name: str, cls, data: dict):
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, val in data.items():
        if key not in known:
            raise ConfigError(f"{name}.{key}: unknown field")
        kwargs[key] = tuple(val) if key in _TUPLE_FIELDS else val
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level: expected a mapping")
    cfg = RunConfig()
    top_known = {"seed", "layout", "map", "curriculum"} | set(_SECTIONS)
    for key in data:
        if key not in top_known:
            raise ConfigError(f"{key}: unknown field")
    cfg.seed = int(data.get("seed", 0))
    cfg.layout = data.get("layout", env_mod.OCC_1D)
    if cfg.layout not in env_mod.LAYOUTS:
        raise ConfigError(f"layout: {cfg.layout!r} not one of {env_mod.LAYOUTS}")
    cfg.map = data.get("map", "T0S" if "curriculum" not in data else None)
    if "curriculum" in data and data["curriculum"]:
        stages = []
        for i, st in enumerate(data["curriculum"]):
            if not isinstance(st, dict) or "map" not in st or "steps" not in st:
                raise ConfigError(f"curriculum[{i}]: expected {{map, steps}}")
            if int(st["steps"]) < 1:
                raise ConfigError(f"curriculum[{i}].steps: must be >= 1")
            stages.append((str(st["map"]), int(st["steps"])))
        cfg.curriculum = stages
    elif cfg.map is None:
        raise ConfigError("map: either a map or a curriculum is required")
    for name, cls in _SECTIONS.items():
        if name in data:
            if not isinstance(data[name], dict):
                raise ConfigError(f"{name}: expected a mapping")
            setattr(cfg, name, _build_section(name, cls, data[name]))
    # reward.tau_fail rides on the robot radius unless set explicitly
    if "tau_fail" not in data.get("reward", {}):
        cfg.reward = env_mod.RewardConfig(**{**asdict(cfg.reward),
                                             "tau_fail": cfg.sim.robot_radius + 0.05})
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return config_from_dict(data)


def config_to_dict(cfg: RunConfig) -> dict:
    out = {"seed": cfg.seed, "layout": cfg.layout}
    if cfg.curriculum:
        out["curriculum"] = [{"map": m, "steps": n} for m, n in cfg.curriculum]
    else:
        out["map"] = cfg.map
    for name in _SECTIONS:
        out[name] = {k: (list(v) if isinstance(v, tuple) else v)
                     for k, v in asdict(getattr(cfg, name)).items()}
    return out


def save_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(config_to_dict(cfg), f, sort_keys=False)


# ---------------------------------------------------------------------------
# Builders

def build_bank(cfg: RunConfig) -> PrimitiveBank:
    return build_primitive_bank(cfg.action_space, cfg.bank.horizon,
                                cfg.bank.n_samples)


def grid_spec(cfg: RunConfig) -> GridSpec:
    return GridSpec(cfg.grid.resolution, tuple(cfg.grid.extent))


def build_classified_grid(cfg: RunConfig, bank: PrimitiveBank | None = None,
                          cache_dir: str | None = None) -> ClassifiedGrid:
    """Build (or load from the cache) the offline classification."""
    bank = bank or build_bank(cfg)
    spec = grid_spec(cfg)
    key = classification_cache_key(
        asdict(cfg.action_space), cfg.bank.horizon, cfg.bank.n_samples, spec,
        cfg.grid.tau_priority, cfg.grid.tau_support, cfg.grid.beta_priority,
        cfg.grid.beta_support)
    if cache_dir:
        path = os.path.join(cache_dir, f"cgrid_{key}.npz")
        if os.path.exists(path):
            return load_classified_grid(path)
    cgrid = classify_bank(spec, bank.points, bank.n_samples,
                          cfg.grid.tau_priority, cfg.grid.tau_support,
                          cfg.grid.beta_priority, cfg.grid.beta_support,
                          cache_key=key)
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        save_classified_grid(cgrid, os.path.join(cache_dir, f"cgrid_{key}.npz"))
    return cgrid


def lidar_spec(cfg: RunConfig) -> world_sim.LidarSpec:
    lc = cfg.lidar
    try:
        return world_sim.LidarSpec(lc.n_beams, math.radians(lc.fov_deg),
                                   lc.max_range, tuple(lc.mount_offset),
                                   lc.z_sensor, lc.jitter)
    except ValueError as exc:
        raise ConfigError(f"lidar: {exc}") from exc


def build_env(cfg: RunConfig, wmap: world_sim.WorldMap,
              bank: PrimitiveBank | None = None,
              cgrid: ClassifiedGrid | None = None,
              seed: int | None = None,
              cache_dir: str | None = None) -> env_mod.NavEnv:
    bank = bank or build_bank(cfg)
    if cgrid is None and cfg.uses_occupancy:
        cgrid = build_classified_grid(cfg, bank, cache_dir)
    return env_mod.NavEnv(
        wmap, bank, cgrid, lidar_spec(cfg), cfg.reward, cfg.layout,
        cfg.obs.n_stack, cfg.obs.n_skip, cfg.obs.n_laser, cfg.sim.dt,
        cfg.sim.robot_radius, cfg.obs.normalize_target, cfg.grid.sigma_max,
        seed=cfg.seed if seed is None else seed)


def network_spec(cfg: RunConfig) -> nets.NetworkSpec:
    frame_len = (cfg.action_space.n_actions if cfg.uses_occupancy
                 else cfg.obs.n_laser)
    try:
        return nets.NetworkSpec(cfg.variant, cfg.action_space.n_actions,
                                frame_len, cfg.obs.n_stack,
                                fc_widths=tuple(cfg.net.fc_widths),
                                conv_channels=tuple(cfg.net.conv_channels),
                                conv_kernels=tuple(cfg.net.conv_kernels),
                                conv_strides=tuple(cfg.net.conv_strides))
    except ValueError as exc:
        raise ConfigError(f"net: {exc}") from exc


def build_net(cfg: RunConfig, seed: int | None = None) -> nets.PolicyValueNet:
    rng = np.random.default_rng(
        np.random.SeedSequence([cfg.seed if seed is None else seed, 0xA11CE]))
    return nets.PolicyValueNet(network_spec(cfg), rng)
