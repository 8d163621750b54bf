"""Desk-scale planar world: exact unicycle motion, scripted agents, analytic
lidar raycasting, collision geometry, and the bundled map suite.

There is no physics here. The robot advances along the exact constant-twist
arc, dynamic agents follow waypoint loops at constant speed, and the lidar
is closed-form ray/shape intersection against axis-aligned boxes, circles,
and the map bounds. Maps are data files (YAML, format ``occnav-map/1``), not
code; the bundled suite covers the training and test layouts.
"""

from __future__ import annotations

import importlib.resources
import math
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

DEFAULT_ROBOT_RADIUS = 0.2
DEFAULT_DT = 0.1

MAP_FORMAT = "occnav-map/1"


class MapConfigError(ValueError):
    pass


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    return math.pi - (math.pi - theta) % (2.0 * math.pi)


@dataclass(frozen=True)
class RobotState:
    x: float
    y: float
    theta: float
    v: float = 0.0
    w: float = 0.0


@dataclass(frozen=True)
class LidarSpec:
    n_beams: int = 360
    fov: float = 2.0 * math.pi
    max_range: float = 5.0
    mount_offset: tuple[float, float] = (0.0, 0.0)
    z_sensor: float = 0.05
    jitter: float = 0.0  # uniform range noise half-width, default off

    def __post_init__(self) -> None:
        if self.n_beams < 1:
            raise ValueError("n_beams must be >= 1")
        if not 0.0 < self.fov <= 2.0 * math.pi + 1e-12:
            raise ValueError("fov must be in (0, 2*pi]")
        if self.max_range <= 0:
            raise ValueError("max_range must be > 0")

    def beam_angles(self) -> np.ndarray:
        """Beam directions in the robot frame; beam 0 points forward.

        A full 2*pi fov spaces beams without duplicating the wrap-around;
        a partial fov is centered on the heading with inclusive ends.
        """
        if self.fov >= 2.0 * math.pi - 1e-12:
            return np.arange(self.n_beams) * (2.0 * math.pi / self.n_beams)
        if self.n_beams == 1:
            return np.zeros(1)
        return -self.fov / 2.0 + np.arange(self.n_beams) * (
            self.fov / (self.n_beams - 1))


@dataclass
class AgentScript:
    """Kinematic waypoint follower with a rectangular or circular footprint.

    The waypoint list is traversed as a closed loop at constant speed (a
    two-point list degenerates to shuttling back and forth). ``random_phase``
    starts each episode at a random point along the loop instead of the
    first waypoint.
    """

    waypoints: np.ndarray  # (n, 2)
    speed: float
    footprint: tuple[float, float] = (0.2, 0.2)  # box x/y size; circle if round
    round: bool = False
    radius: float = 0.0
    random_phase: bool = False
    _segs: tuple | None = field(default=None, repr=False, compare=False)

    def segments(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float]:
        if self._segs is None:
            wp = self.waypoints
            if len(wp) < 2:
                z = np.zeros((0, 2))
                self._segs = (z, z, np.zeros(0), np.zeros(0), 0.0)
            else:
                vec = np.roll(wp, -1, axis=0) - wp
                seg_len = np.hypot(vec[:, 0], vec[:, 1])
                self._segs = (wp, vec, seg_len, np.cumsum(seg_len),
                              float(seg_len.sum()))
        return self._segs

    @property
    def loop_length(self) -> float:
        return self.segments()[4]

    def position(self, s: float) -> np.ndarray:
        start, vec, seg_len, cum, total = self.segments()
        if total <= 0.0:
            return self.waypoints[0].copy()
        s = s % total
        i = int(np.searchsorted(cum, s, side="right"))
        s0 = s - (cum[i - 1] if i > 0 else 0.0)
        return start[i] + vec[i] * (s0 / seg_len[i])


@dataclass
class WorldMap:
    name: str
    bounds: tuple[float, float, float, float]  # x_min, x_max, y_min, y_max
    boxes: np.ndarray  # (n, 4) x_min, y_min, x_max, y_max
    circles: np.ndarray  # (n, 3) cx, cy, r
    agents: list[AgentScript]
    start_region: tuple[float, float, float, float]
    goal_region: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        x0, x1, y0, y1 = self.bounds
        if not (x0 < x1 and y0 < y1):
            raise MapConfigError(f"{self.name}: degenerate bounds")
        for label, reg in (("start_region", self.start_region),
                           ("goal_region", self.goal_region)):
            rx0, rx1, ry0, ry1 = reg
            if not (rx0 < rx1 and ry0 < ry1):
                raise MapConfigError(f"{self.name}: degenerate {label}")
            if rx0 < x0 or rx1 > x1 or ry0 < y0 or ry1 > y1:
                raise MapConfigError(f"{self.name}: {label} outside bounds")
        for i, ag in enumerate(self.agents):
            wp = ag.waypoints
            if ((wp[:, 0] < x0) | (wp[:, 0] > x1)
                    | (wp[:, 1] < y0) | (wp[:, 1] > y1)).any():
                raise MapConfigError(f"{self.name}: agent {i} waypoints "
                                     "outside bounds")
            if ag.speed < 0:
                raise MapConfigError(f"{self.name}: agent {i} negative speed")

    @property
    def area(self) -> float:
        x0, x1, y0, y1 = self.bounds
        return (x1 - x0) * (y1 - y0)

    def agent_boxes(self, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Agent footprints at the given centers as (boxes, circles) arrays."""
        bxs, crs = [], []
        for ag, pos in zip(self.agents, positions):
            if ag.round:
                crs.append([pos[0], pos[1], ag.radius])
            else:
                hx, hy = ag.footprint[0] / 2.0, ag.footprint[1] / 2.0
                bxs.append([pos[0] - hx, pos[1] - hy, pos[0] + hx, pos[1] + hy])
        return (np.array(bxs).reshape(-1, 4), np.array(crs).reshape(-1, 3))


# ---------------------------------------------------------------------------
# Motion

def advance_robot(state: RobotState, v: float, w: float, dt: float) -> RobotState:
    """Exact constant-twist arc for one control period."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if abs(w) < 1e-12:
        x = state.x + v * dt * math.cos(state.theta)
        y = state.y + v * dt * math.sin(state.theta)
        theta = state.theta + w * dt
    else:
        r = v / w
        theta = state.theta + w * dt
        x = state.x + r * (math.sin(theta) - math.sin(state.theta))
        y = state.y - r * (math.cos(theta) - math.cos(state.theta))
    return RobotState(x, y, wrap_angle(theta), v, w)


def advance_agents(wmap: WorldMap, agent_s: np.ndarray, dt: float) -> np.ndarray:
    out = agent_s.copy()
    for i, ag in enumerate(wmap.agents):
        total = ag.loop_length
        if total > 0.0:
            out[i] = (agent_s[i] + ag.speed * dt) % total
    return out


def agent_positions(wmap: WorldMap, agent_s: np.ndarray) -> np.ndarray:
    if not wmap.agents:
        return np.zeros((0, 2))
    return np.stack([ag.position(s) for ag, s in zip(wmap.agents, agent_s)])


def step_world(state: RobotState, agent_s: np.ndarray, wmap: WorldMap,
               v: float, w: float, dt: float) -> tuple[RobotState, np.ndarray]:
    return advance_robot(state, v, w, dt), advance_agents(wmap, agent_s, dt)


# ---------------------------------------------------------------------------
# Sensing and collision geometry

def _ray_boxes(origin: np.ndarray, dirs: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Per-beam nearest hit distance against each box (slab method).

    Rays starting inside a box hit its interior wall, so the map bounds can
    be passed as a box too. Shape (n_beams, n_boxes); inf where no hit.
    """
    if len(boxes) == 0:
        return np.full((dirs.shape[0], 0), np.inf)
    d = np.where(np.abs(dirs) < 1e-300, 1e-300, dirs)  # avoid 0/0 on slabs
    lo = (boxes[None, :, 0:2] - origin) / d[:, None, :]
    hi = (boxes[None, :, 2:4] - origin) / d[:, None, :]
    t1 = np.minimum(lo, hi)
    t2 = np.maximum(lo, hi)
    tmin = np.max(t1, axis=2)
    tmax = np.min(t2, axis=2)
    t = np.where(tmin > 1e-12, tmin, tmax)
    return np.where((tmax >= np.maximum(tmin, 0.0)) & (t > 1e-12), t, np.inf)


def _ray_circles(origin: np.ndarray, dirs: np.ndarray,
                 circles: np.ndarray) -> np.ndarray:
    if len(circles) == 0:
        return np.full((dirs.shape[0], 0), np.inf)
    oc = origin[None, :] - circles[:, 0:2]  # (n_circ, 2)
    b = dirs @ oc.T  # (n_beams, n_circ)
    c0 = np.sum(oc * oc, axis=1)[None, :] - (circles[:, 2] ** 2)[None, :]
    disc = b * b - c0
    sq = np.sqrt(np.maximum(disc, 0.0))
    t_near = -b - sq
    t_far = -b + sq
    t = np.where(t_near > 1e-12, t_near, t_far)
    return np.where((disc >= 0.0) & (t > 1e-12), t, np.inf)


_ANGLE_CACHE: dict[tuple[int, float], np.ndarray] = {}


def _beam_angles(spec: LidarSpec) -> np.ndarray:
    key = (spec.n_beams, spec.fov)
    if key not in _ANGLE_CACHE:
        _ANGLE_CACHE[key] = spec.beam_angles()
    return _ANGLE_CACHE[key]


def raycast_scan(state: RobotState, wmap: WorldMap, spec: LidarSpec,
                 agent_pos: np.ndarray | None = None,
                 rng: np.random.Generator | None = None) -> np.ndarray:
    """Ranges per beam: nearest intersection with any shape, agent, or the
    bounds; max_range where nothing is hit within range."""
    phi = _beam_angles(spec) + state.theta
    dirs = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    ox, oy = spec.mount_offset
    c, s = math.cos(state.theta), math.sin(state.theta)
    origin = np.array([state.x + c * ox - s * oy, state.y + s * ox + c * oy])

    x0, x1, y0, y1 = wmap.bounds
    boxes = [np.array([[x0, y0, x1, y1]]), wmap.boxes]
    circles = [wmap.circles]
    if agent_pos is not None and len(agent_pos):
        ab, ac = wmap.agent_boxes(agent_pos)
        boxes.append(ab)
        circles.append(ac)
    tb = _ray_boxes(origin, dirs, np.vstack([b for b in boxes if len(b)]))
    tc = _ray_circles(origin, dirs, np.vstack([c_ for c_ in circles if len(c_)])
                      if any(len(c_) for c_ in circles) else np.zeros((0, 3)))
    t = np.minimum(tb.min(axis=1), tc.min(axis=1) if tc.shape[1] else np.inf)
    ranges = np.minimum(t, spec.max_range)
    if spec.jitter > 0.0 and rng is not None:
        ranges = np.clip(ranges + rng.uniform(-spec.jitter, spec.jitter,
                                              len(ranges)),
                         0.0, spec.max_range)
    return ranges


def scan_to_points(ranges: np.ndarray, spec: LidarSpec) -> np.ndarray:
    """Hit points in the robot frame; saturated beams yield no point."""
    phi = _beam_angles(spec)
    hit = ranges < spec.max_range
    r = ranges[hit]
    a = phi[hit]
    pts = np.empty((len(r), 3))
    pts[:, 0] = r * np.cos(a) + spec.mount_offset[0]
    pts[:, 1] = r * np.sin(a) + spec.mount_offset[1]
    pts[:, 2] = spec.z_sensor
    return pts


def obstacle_distance(state: RobotState, wmap: WorldMap,
                      agent_pos: np.ndarray | None = None,
                      robot_radius: float = DEFAULT_ROBOT_RADIUS) -> float:
    """Distance from the robot's disc to the nearest surface, floored at 0."""
    p = np.array([state.x, state.y])
    best = np.inf

    x0, x1, y0, y1 = wmap.bounds
    best = min(best, p[0] - x0, x1 - p[0], p[1] - y0, y1 - p[1])

    boxes = [wmap.boxes]
    circles = [wmap.circles]
    if agent_pos is not None and len(agent_pos):
        ab, ac = wmap.agent_boxes(agent_pos)
        boxes.append(ab)
        circles.append(ac)
    for bx in boxes:
        for b in bx:
            qx = max(b[0] - p[0], p[0] - b[2])
            qy = max(b[1] - p[1], p[1] - b[3])
            if qx > 0.0 or qy > 0.0:
                d = math.hypot(max(qx, 0.0), max(qy, 0.0))
            else:
                d = max(qx, qy)  # negative: inside the box
            best = min(best, d)
    for cs in circles:
        for c_ in cs:
            best = min(best, math.hypot(p[0] - c_[0], p[1] - c_[1]) - c_[2])
    return max(0.0, best - robot_radius)


def sample_start_goal(wmap: WorldMap, rng: np.random.Generator,
                      min_separation: float = 0.3,
                      max_tries: int = 1000) -> tuple[RobotState, np.ndarray]:
    """Uniform start pose in the start region and goal in the goal region,
    resampling the goal until it clears ``min_separation`` from the start."""
    sx0, sx1, sy0, sy1 = wmap.start_region
    gx0, gx1, gy0, gy1 = wmap.goal_region
    start = RobotState(rng.uniform(sx0, sx1), rng.uniform(sy0, sy1),
                       wrap_angle(rng.uniform(-math.pi, math.pi)))
    for _ in range(max_tries):
        goal = np.array([rng.uniform(gx0, gx1), rng.uniform(gy0, gy1)])
        if math.hypot(goal[0] - start.x, goal[1] - start.y) >= min_separation:
            return start, goal
    raise MapConfigError(f"{wmap.name}: could not sample a goal at least "
                         f"{min_separation} m from the start after {max_tries}"
                         " tries")


# ---------------------------------------------------------------------------
# Map files

def map_from_dict(data: dict) -> WorldMap:
    if data.get("format") != MAP_FORMAT:
        raise MapConfigError(f"unsupported map format {data.get('format')!r}"
                             f" (expected {MAP_FORMAT!r})")
    boxes, circles = [], []
    for sh in data.get("static", []) or []:
        if sh["type"] == "box":
            cx, cy = sh["center"]
            w, h = sh["size"]
            if w <= 0 or h <= 0:
                raise MapConfigError(f"{data['name']}: box with non-positive size")
            boxes.append([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2])
        elif sh["type"] == "circle":
            if sh["radius"] <= 0:
                raise MapConfigError(f"{data['name']}: circle with non-positive"
                                     " radius")
            circles.append([sh["center"][0], sh["center"][1], sh["radius"]])
        else:
            raise MapConfigError(f"{data['name']}: unknown shape {sh['type']!r}")
    agents = []
    for ag in data.get("agents", []) or []:
        fp = ag.get("footprint", [0.2, 0.2])
        agents.append(AgentScript(
            waypoints=np.array(ag["waypoints"], dtype=np.float64),
            speed=float(ag["speed"]),
            footprint=(float(fp[0]), float(fp[1])) if not ag.get("round")
            else (0.0, 0.0),
            round=bool(ag.get("round", False)),
            radius=float(ag.get("radius", 0.0)),
            random_phase=bool(ag.get("random_phase", False))))
    b = data["bounds"]
    return WorldMap(name=data["name"],
                    bounds=(b[0], b[1], b[2], b[3]),
                    boxes=np.array(boxes).reshape(-1, 4),
                    circles=np.array(circles).reshape(-1, 3),
                    agents=agents,
                    start_region=tuple(data["start_region"]),
                    goal_region=tuple(data["goal_region"]))


def load_map(path: str) -> WorldMap:
    with open(path) as f:
        return map_from_dict(yaml.safe_load(f))


def builtin_maps() -> dict[str, WorldMap]:
    """The bundled training (T0S..T2D) and testing (M1..M5) map suite."""
    maps = {}
    root = importlib.resources.files("occnav") / "maps"
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".yaml"):
            m = map_from_dict(yaml.safe_load(entry.read_text()))
            maps[m.name] = m
    return maps


def get_map(name: str) -> WorldMap:
    maps = builtin_maps()
    if name not in maps:
        raise MapConfigError(f"unknown map {name!r}; bundled maps: "
                             f"{', '.join(sorted(maps))}")
    return maps[name]
