"""Episodic navigation environment.

Each step applies one discrete velocity command for a fixed control period,
advances the world, simulates the lidar, refreshes the occupancy grid, and
scores every motion primitive. The observation is a stack of recent
occupancy (or normalized laser) frames plus the goal's distance/heading and
the previous command. The episode ends on goal arrival, obstacle proximity,
or the step budget, with the terminal rewards dominating the shaped
progress/step terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kinematics import PrimitiveBank
from .occupancy_eval import evaluate_all
from .voxel_grid import ClassifiedGrid, OccupancyArray, update_occupancy
from .world_sim import (DEFAULT_DT, DEFAULT_ROBOT_RADIUS, LidarSpec,
                        RobotState, WorldMap, advance_agents, agent_positions,
                        advance_robot, obstacle_distance, raycast_scan,
                        sample_start_goal, scan_to_points, wrap_angle)

# observation layouts
OCC_1D = "occ1d"
OCC_CH = "occch"
OCC_2D = "occ2d"
LASER_1D = "laser1d"
LASER_CH = "laserch"
LAYOUTS = (OCC_1D, OCC_CH, OCC_2D, LASER_1D, LASER_CH)

OUTCOME_RUNNING = "running"
OUTCOME_GOAL = "goal"
OUTCOME_COLLISION = "collision"
OUTCOME_TIMEOUT = "timeout"

DEFAULT_N_STACK = 5
DEFAULT_N_SKIP = 2
DEFAULT_N_LASER = 90


class EpisodeDoneError(RuntimeError):
    """step() was called after the episode reached a terminal state."""


@dataclass(frozen=True)
class RewardConfig:
    mu_goal: float = 20.0
    mu_fail: float = -20.0
    alpha_target: float = 10.0
    alpha_step_pen: float = -5.0
    tau_target: float = 0.3  # m
    tau_fail: float = DEFAULT_ROBOT_RADIUS + 0.05  # m, on top of the radius
    n_max_ep_ts: int = 500

    def __post_init__(self) -> None:
        if self.mu_goal <= 0:
            raise ValueError("mu_goal must be > 0")
        if self.mu_fail >= 0:
            raise ValueError("mu_fail must be < 0")
        if self.alpha_step_pen >= 0:
            raise ValueError("alpha_step_pen must be < 0 (it is a penalty)")
        if self.tau_target <= 0:
            raise ValueError("tau_target must be > 0")
        if self.tau_fail < 0:
            raise ValueError("tau_fail must be >= 0")
        if self.n_max_ep_ts <= 0:
            raise ValueError("n_max_ep_ts must be > 0")


def compute_reward(d_prev: float, d_now: float, d_obs: float, step_count: int,
                   cfg: RewardConfig) -> tuple[float, str]:
    """Terminal-first reward cases, then progress plus a fixed step penalty."""
    if d_now < cfg.tau_target:
        return cfg.mu_goal, OUTCOME_GOAL
    if d_obs < cfg.tau_fail:
        return cfg.mu_fail, OUTCOME_COLLISION
    if step_count > cfg.n_max_ep_ts:
        return cfg.mu_fail, OUTCOME_TIMEOUT
    reward = (cfg.alpha_target * (d_prev - d_now)
              + cfg.alpha_step_pen / cfg.n_max_ep_ts)
    return reward, OUTCOME_RUNNING


def build_target_obs(state: RobotState, goal: np.ndarray,
                     norm: float = 0.0) -> np.ndarray:
    """Goal distance and bearing in the robot frame, optionally distance-normalized."""
    dx, dy = goal[0] - state.x, goal[1] - state.y
    d = math.hypot(dx, dy)
    theta = wrap_angle(math.atan2(dy, dx) - state.theta)
    return np.array([d / norm if norm > 0.0 else d, theta])


def build_laser_obs(ranges: np.ndarray, spec: LidarSpec,
                    n_out: int = DEFAULT_N_LASER) -> np.ndarray:
    """Equidistant downsample (every n_beams/n_out-th beam from beam 0),
    normalized by the maximum range into [0, 1]."""
    if spec.n_beams % n_out != 0:
        raise ValueError(f"n_beams={spec.n_beams} not divisible by n_out={n_out}")
    return ranges[::spec.n_beams // n_out] / spec.max_range


class StackBuffer:
    """Ring of raw per-step frames; the stacked view takes every
    (n_skip+1)-th frame backwards from the newest, always n_stack of them."""

    def __init__(self, n_stack: int, n_skip: int, frame_len: int):
        if n_stack < 1 or n_skip < 0:
            raise ValueError("need n_stack >= 1 and n_skip >= 0")
        self.n_stack = n_stack
        self.n_skip = n_skip
        self.capacity = (n_stack - 1) * (n_skip + 1) + 1
        self._frames = np.zeros((self.capacity, frame_len), dtype=np.float64)

    def reset(self, frame: np.ndarray) -> None:
        self._frames[:] = frame  # warm-up: replicate the first real frame

    def push(self, frame: np.ndarray) -> None:
        self._frames = np.roll(self._frames, -1, axis=0)
        self._frames[-1] = frame

    def stacked(self) -> np.ndarray:
        """(n_stack, frame_len), newest first."""
        idx = self.capacity - 1 - np.arange(self.n_stack) * (self.n_skip + 1)
        return self._frames[idx]


@dataclass
class Observation:
    layout: str
    stacked: np.ndarray  # (n_stack, frame_len), newest first
    target: np.ndarray  # (2,) distance, heading
    action: np.ndarray  # (2,) previous v, w

    @property
    def block(self) -> np.ndarray:
        """The occupancy/laser block in the declared layout."""
        if self.layout in (OCC_1D, LASER_1D):
            return self.stacked.reshape(-1)
        if self.layout in (OCC_CH, LASER_CH):
            return self.stacked
        if self.layout == OCC_2D:
            return self.stacked.T
        raise ValueError(f"unknown layout {self.layout!r}")

    @property
    def aux(self) -> np.ndarray:
        return np.concatenate([self.target, self.action])

    def flat(self) -> np.ndarray:
        """1D concatenation (block, target, action) as fed to the FC net."""
        return np.concatenate([self.stacked.reshape(-1), self.target,
                               self.action])


def build_observation(layout: str, stack: StackBuffer, target: np.ndarray,
                      prev_action: np.ndarray) -> Observation:
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")
    return Observation(layout, stack.stacked(), np.asarray(target, dtype=np.float64),
                       np.asarray(prev_action, dtype=np.float64))


@dataclass
class StepResult:
    observation: Observation
    reward: float
    done: bool
    outcome: str


class NavEnv:
    """The navigation episode loop over one world instance.

    Strictly sequential reset/step per instance; run several instances with
    independent seeds for parallel collection. The primitive bank and
    classified grid are shared read-only.
    """

    def __init__(self, wmap: WorldMap, bank: PrimitiveBank,
                 cgrid: ClassifiedGrid | None = None,
                 lidar: LidarSpec | None = None,
                 reward: RewardConfig | None = None,
                 layout: str = OCC_1D,
                 n_stack: int = DEFAULT_N_STACK,
                 n_skip: int = DEFAULT_N_SKIP,
                 n_laser: int = DEFAULT_N_LASER,
                 dt: float = DEFAULT_DT,
                 robot_radius: float = DEFAULT_ROBOT_RADIUS,
                 normalize_target: bool = False,
                 sigma_max: float = 1.0,
                 seed: int | None = None):
        if layout not in LAYOUTS:
            raise ValueError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")
        self.uses_occupancy = layout in (OCC_1D, OCC_CH, OCC_2D)
        if self.uses_occupancy and cgrid is None:
            raise ValueError("occupancy layouts need a classified grid")
        self.wmap = wmap
        self.bank = bank
        self.cgrid = cgrid
        self.lidar = lidar or LidarSpec()
        self.reward_cfg = reward or RewardConfig()
        self.layout = layout
        self.n_laser = n_laser
        self.dt = dt
        self.robot_radius = robot_radius
        x0, x1, y0, y1 = wmap.bounds
        self.target_norm = math.hypot(x1 - x0, y1 - y0) if normalize_target else 0.0
        self.rng = np.random.default_rng(seed)

        self.n_actions = len(bank)
        self.frame_len = self.n_actions if self.uses_occupancy else n_laser
        self.stack = StackBuffer(n_stack, n_skip, self.frame_len)
        if self.uses_occupancy:
            self._occ = OccupancyArray.zeros(cgrid.spec, sigma_max)

        self.state: RobotState | None = None
        self.goal: np.ndarray | None = None
        self.agent_s = np.zeros(len(wmap.agents))
        self.t = 0
        self.done = True
        self.last_frame: np.ndarray | None = None
        self._d_prev = 0.0
        self._prev_action = np.zeros(2)

    def _sense(self) -> np.ndarray:
        pos = agent_positions(self.wmap, self.agent_s)
        ranges = raycast_scan(self.state, self.wmap, self.lidar, pos,
                              rng=self.rng if self.lidar.jitter > 0 else None)
        if self.uses_occupancy:
            pts = scan_to_points(ranges, self.lidar)
            update_occupancy(self._occ, pts, self.cgrid.spec)
            return evaluate_all(self.cgrid, self._occ)
        return build_laser_obs(ranges, self.lidar, self.n_laser)

    def _observe(self) -> Observation:
        target = build_target_obs(self.state, self.goal, self.target_norm)
        return build_observation(self.layout, self.stack, target,
                                 self._prev_action)

    def reset(self, seed: int | None = None) -> Observation:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.state, self.goal = sample_start_goal(
            self.wmap, self.rng, min_separation=self.reward_cfg.tau_target)
        self.agent_s = np.zeros(len(self.wmap.agents))
        for i, ag in enumerate(self.wmap.agents):
            if ag.random_phase and ag.loop_length > 0.0:
                self.agent_s[i] = self.rng.uniform(0.0, ag.loop_length)
        self.t = 0
        self.done = False
        self._prev_action = np.zeros(2)
        self._d_prev = math.hypot(self.goal[0] - self.state.x,
                                  self.goal[1] - self.state.y)
        frame = self._sense()
        self.last_frame = frame
        self.stack.reset(frame)
        return self._observe()

    def step(self, action_index: int) -> StepResult:
        if self.done:
            raise EpisodeDoneError("step() called after the episode ended; "
                                   "call reset() first")
        act = self.bank.action(int(action_index))
        self.state = advance_robot(self.state, act.v, act.w, self.dt)
        self.agent_s = advance_agents(self.wmap, self.agent_s, self.dt)
        self.t += 1

        frame = self._sense()
        self.last_frame = frame
        self.stack.push(frame)
        self._prev_action = np.array([act.v, act.w])

        d_now = math.hypot(self.goal[0] - self.state.x,
                           self.goal[1] - self.state.y)
        d_obs = obstacle_distance(self.state, self.wmap,
                                  agent_positions(self.wmap, self.agent_s),
                                  self.robot_radius)
        reward, outcome = compute_reward(self._d_prev, d_now, d_obs, self.t,
                                         self.reward_cfg)
        self._d_prev = d_now
        self.done = outcome != OUTCOME_RUNNING
        return StepResult(self._observe(), reward, self.done, outcome)


def curriculum(stages: list[tuple[WorldMap, int]], trainer) -> object:
    """Train sequentially through the given (map, n_steps) stages, carrying
    the network parameters across stage boundaries."""
    if not stages:
        raise ValueError("curriculum needs at least one stage")
    for wmap, n_steps in stages:
        trainer.train_stage(wmap, n_steps)
    return trainer.net
