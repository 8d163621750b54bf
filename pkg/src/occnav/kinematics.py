"""Velocity-command discretization and the pre-sampled motion-primitive bank.

A differential-drive robot is commanded with a (linear, angular) velocity
pair. We sample both command intervals on uniform endpoint-inclusive grids
and roll each pair out with the closed-form unicycle arc, giving one fixed
trajectory per discrete action. The bank is computed once offline and is
read-only afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_HORIZON = 2.5  # s
DEFAULT_N_SAMPLES = 20


@dataclass(frozen=True)
class ActionSpace:
    """Bounds and sample counts of the discretized velocity-command space."""

    n_v: int = 5
    n_w: int = 21
    v_max: float = 0.8  # m/s, linear commands span [0, v_max]
    w_min: float = -2.0  # rad/s
    w_max: float = 2.0  # rad/s

    def __post_init__(self) -> None:
        if self.n_v < 1 or self.n_w < 1:
            raise ValueError("n_v and n_w must be >= 1")
        if self.v_max <= 0:
            raise ValueError("v_max must be > 0")
        if not self.w_min < self.w_max:
            raise ValueError("w_min must be < w_max")

    @property
    def n_actions(self) -> int:
        return self.n_v * self.n_w


@dataclass(frozen=True)
class ActionTuple:
    v: float
    w: float
    index: int


@dataclass(frozen=True)
class Trajectory:
    """Sampled rollout of one action, points (n_T, 3) in the robot frame."""

    action_index: int
    points: np.ndarray

    def __post_init__(self) -> None:
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError("points must have shape (n_T, 3)")

    @property
    def n_samples(self) -> int:
        return self.points.shape[0]


def discretize_actions(space: ActionSpace) -> list[ActionTuple]:
    """Uniform endpoint-inclusive grids over both intervals, row-major (v outer).

    A 1-point grid degenerates to the interval's lower bound (linspace
    semantics), so n_v=1 always yields v=0.
    """
    v_grid = np.linspace(0.0, space.v_max, space.n_v)
    w_grid = np.linspace(space.w_min, space.w_max, space.n_w)
    actions = []
    for iv, v in enumerate(v_grid):
        for iw, w in enumerate(w_grid):
            actions.append(ActionTuple(float(v), float(w), iv * space.n_w + iw))
    return actions


def rollout_trajectory(action: ActionTuple, horizon: float = DEFAULT_HORIZON,
                       n_samples: int = DEFAULT_N_SAMPLES) -> Trajectory:
    """Closed-form unicycle rollout sampled at t_i = i*horizon/n_samples, i=1..n_samples.

    Constant (v, w) from the origin with heading +x: w = 0 gives a straight
    line, otherwise an arc of radius v/w. Exact for the kinematic model, so
    there is no integration step size to tune. z is identically 0 for the
    planar robot; the 3D point type keeps the grid machinery general.
    """
    if horizon <= 0:
        raise ValueError("horizon must be > 0")
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    t = np.arange(1, n_samples + 1, dtype=np.float64) * (horizon / n_samples)
    pts = np.zeros((n_samples, 3), dtype=np.float64)
    v, w = action.v, action.w
    if abs(w) < 1e-12:
        pts[:, 0] = v * t
    else:
        r = v / w
        pts[:, 0] = r * np.sin(w * t)
        pts[:, 1] = r * (1.0 - np.cos(w * t))
    return Trajectory(action.index, pts)


@dataclass(frozen=True)
class PrimitiveBank:
    """One trajectory per discrete action, index-aligned with the action list."""

    space: ActionSpace
    actions: list[ActionTuple]
    trajectories: list[Trajectory]
    horizon: float
    n_samples: int
    # (n_actions, n_samples, 3) view of all trajectories for vectorized use
    points: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.trajectories)

    def action(self, index: int) -> ActionTuple:
        return self.actions[index]

    def index_of(self, action: ActionTuple) -> int:
        return action.index


def build_primitive_bank(space: ActionSpace, horizon: float = DEFAULT_HORIZON,
                         n_samples: int = DEFAULT_N_SAMPLES) -> PrimitiveBank:
    actions = discretize_actions(space)
    trajectories = [rollout_trajectory(a, horizon, n_samples) for a in actions]
    points = np.stack([tr.points for tr in trajectories])
    points.setflags(write=False)
    return PrimitiveBank(space, actions, trajectories, horizon, n_samples, points)


def save_bank_text(bank: PrimitiveBank, path: str) -> None:
    """Plain-text dump: a key/value header, then per-trajectory point lines."""
    with open(path, "w") as f:
        f.write("# occnav primitive bank v1\n")
        f.write(f"n_v {bank.space.n_v}\n")
        f.write(f"n_w {bank.space.n_w}\n")
        f.write(f"v_max {bank.space.v_max!r}\n")
        f.write(f"w_min {bank.space.w_min!r}\n")
        f.write(f"w_max {bank.space.w_max!r}\n")
        f.write(f"horizon {bank.horizon!r}\n")
        f.write(f"n_T {bank.n_samples}\n")
        for act, tr in zip(bank.actions, bank.trajectories):
            f.write(f"traj {act.index} v {act.v!r} w {act.w!r}\n")
            for p in tr.points:
                f.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")


def load_bank_text(path: str) -> PrimitiveBank:
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip() and not ln.startswith("#")]
    header: dict[str, str] = {}
    i = 0
    while i < len(lines) and not lines[i].startswith("traj "):
        key, val = lines[i].split(None, 1)
        header[key] = val
        i += 1
    space = ActionSpace(n_v=int(header["n_v"]), n_w=int(header["n_w"]),
                        v_max=float(header["v_max"]), w_min=float(header["w_min"]),
                        w_max=float(header["w_max"]))
    horizon = float(header["horizon"])
    n_samples = int(header["n_T"])
    bank = build_primitive_bank(space, horizon, n_samples)
    # the stored points are authoritative; verify they match the regenerated bank
    idx = -1
    row = 0
    pts = np.empty_like(bank.points)
    for ln in lines[i:]:
        if ln.startswith("traj "):
            idx += 1
            row = 0
        else:
            pts[idx, row] = [float(x) for x in ln.split()]
            row += 1
    if idx + 1 != len(bank) or not np.array_equal(pts, bank.points):
        raise ValueError(f"bank file {path} is inconsistent with its header")
    return bank
