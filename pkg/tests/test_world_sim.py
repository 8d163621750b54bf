import math

import numpy as np
import pytest
from scipy import stats

from occnav.world_sim import (AgentScript, LidarSpec, MapConfigError,
                              RobotState, WorldMap, advance_agents,
                              advance_robot, agent_positions, builtin_maps,
                              get_map, load_map, map_from_dict,
                              obstacle_distance, raycast_scan,
                              sample_start_goal, scan_to_points, step_world,
                              wrap_angle)
from helpers import ray_box_oracle, ray_circle_oracle, rk4_unicycle


def empty_map(size=20.0):
    return WorldMap("empty", (0.0, size, 0.0, size),
                    np.zeros((0, 4)), np.zeros((0, 3)), [],
                    (1.0, 2.0, 1.0, 2.0), (size - 2, size - 1, 1.0, 2.0))


def test_wrap_angle_interval():
    assert wrap_angle(math.pi) == math.pi
    assert wrap_angle(-math.pi) == math.pi
    assert abs(wrap_angle(3 * math.pi / 2) + math.pi / 2) < 1e-12
    for th in np.linspace(-20, 20, 101):
        w = wrap_angle(th)
        assert -math.pi < w <= math.pi
        assert abs(math.sin(w - th)) < 1e-9


def test_zero_action_keeps_robot_agents_move():
    m = map_from_dict({
        "format": "occnav-map/1", "name": "t", "bounds": [0, 10, 0, 10],
        "static": [],
        "agents": [{"footprint": [0.2, 0.2], "speed": 1.0,
                    "waypoints": [[2, 2], [8, 2]]}],
        "start_region": [1, 2, 1, 2], "goal_region": [8, 9, 1, 2]})
    st = RobotState(3.0, 3.0, 0.5)
    s = np.zeros(1)
    st2, s2 = step_world(st, s, m, 0.0, 0.0, 0.1)
    assert (st2.x, st2.y, st2.theta) == (3.0, 3.0, 0.5)
    assert s2[0] == pytest.approx(0.1)
    assert np.allclose(agent_positions(m, s2)[0], [2.1, 2.0])


def test_straight_step():
    st = advance_robot(RobotState(1.0, 1.0, 0.0), 1.0, 0.0, 0.1)
    assert st.x == pytest.approx(1.1, abs=1e-15)
    assert st.y == 1.0


def test_arc_step_matches_rk4():
    rng = np.random.default_rng(1)
    for _ in range(30):
        v, w = rng.uniform(0, 1.2), rng.uniform(-2.5, 2.5)
        th = rng.uniform(-math.pi, math.pi)
        st = advance_robot(RobotState(0.0, 0.0, th), v, w, 0.5)
        x, y, _ = rk4_unicycle(v, w, 0.5, 4000)
        # rotate the origin-frame endpoint by the initial heading
        xr = x * math.cos(th) - y * math.sin(th)
        yr = x * math.sin(th) + y * math.cos(th)
        assert math.hypot(st.x - xr, st.y - yr) < 1e-9


def test_two_half_steps_equal_one_full_step():
    rng = np.random.default_rng(2)
    for _ in range(30):
        st0 = RobotState(rng.uniform(-1, 1), rng.uniform(-1, 1),
                         rng.uniform(-3, 3))
        v, w = rng.uniform(0, 1.0), rng.uniform(-2, 2)
        a = advance_robot(st0, v, w, 0.2)
        b = advance_robot(advance_robot(st0, v, w, 0.1), v, w, 0.1)
        assert math.hypot(a.x - b.x, a.y - b.y) < 1e-9
        assert abs(wrap_angle(a.theta - b.theta)) < 1e-9


def test_agent_pingpong_and_loop():
    ag = AgentScript(np.array([[0.0, 0.0], [2.0, 0.0]]), speed=1.0)
    assert ag.loop_length == 4.0
    assert np.allclose(ag.position(0.5), [0.5, 0.0])
    assert np.allclose(ag.position(2.5), [1.5, 0.0])  # on the way back
    assert np.allclose(ag.position(4.25), [0.25, 0.0])
    tri = AgentScript(np.array([[0, 0], [1, 0], [0, 1]]), speed=1.0)
    assert tri.loop_length == pytest.approx(2 + math.sqrt(2))


def test_empty_scene_beams_saturate():
    spec = LidarSpec(n_beams=36, max_range=2.0)
    m = empty_map(100.0)
    st = RobotState(50.0, 50.0, 0.3)
    ranges = raycast_scan(st, m, spec)
    assert np.array_equal(ranges, np.full(36, 2.0))


def test_perpendicular_wall_distance():
    m = empty_map(20.0)
    spec = LidarSpec(n_beams=4, max_range=50.0)
    st = RobotState(5.0, 5.0, 0.0)
    ranges = raycast_scan(st, m, spec)
    # beams at 0, 90, 180, 270 degrees hit the bounds walls
    assert ranges[0] == pytest.approx(15.0, abs=1e-12)
    assert ranges[1] == pytest.approx(15.0, abs=1e-12)
    assert ranges[2] == pytest.approx(5.0, abs=1e-12)
    assert ranges[3] == pytest.approx(5.0, abs=1e-12)


def test_raycast_matches_analytic_oracles():
    rng = np.random.default_rng(3)
    for _ in range(150):
        size = rng.uniform(8, 20)
        n_box = rng.integers(0, 4)
        n_circ = rng.integers(0, 4)
        boxes = []
        for _ in range(n_box):
            cx, cy = rng.uniform(1, size - 1, 2)
            w, h = rng.uniform(0.3, 2.0, 2)
            boxes.append([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2])
        circles = [[*rng.uniform(1, size - 1, 2), rng.uniform(0.2, 1.0)]
                   for _ in range(n_circ)]
        m = WorldMap("r", (0, size, 0, size), np.array(boxes).reshape(-1, 4),
                     np.array(circles).reshape(-1, 3), [],
                     (0.5, 1.0, 0.5, 1.0), (size - 1, size - 0.5, 0.5, 1.0))
        st = RobotState(rng.uniform(0.5, size - 0.5),
                        rng.uniform(0.5, size - 0.5),
                        rng.uniform(-math.pi, math.pi))
        if obstacle_distance(st, m, robot_radius=0.0) <= 0.0:
            continue  # origin inside a shape; skip
        spec = LidarSpec(n_beams=24, max_range=size)
        ranges = raycast_scan(st, m, spec)
        origin = (st.x, st.y)
        for b, phi in enumerate(spec.beam_angles()):
            d = (math.cos(st.theta + phi), math.sin(st.theta + phi))
            t = ray_box_oracle(origin, d, (0, 0, size, size))
            for box in boxes:
                t = min(t, ray_box_oracle(origin, d, box))
            for cx, cy, r in circles:
                t = min(t, ray_circle_oracle(origin, d, cx, cy, r))
            assert abs(min(t, spec.max_range) - ranges[b]) < 1e-9


def test_raycast_rotation_equivariance():
    # rotating the scene and the robot together leaves all ranges unchanged
    rng = np.random.default_rng(4)
    alpha = 0.77
    ca, sa = math.cos(alpha), math.sin(alpha)
    circles = [[3.0, 2.0, 0.5], [6.0, 7.0, 1.0]]
    big = 100.0
    m1 = WorldMap("a", (-big, big, -big, big), np.zeros((0, 4)),
                  np.array(circles), [], (0, 1, 0, 1), (2, 3, 2, 3))
    rot = [[c[0] * ca - c[1] * sa, c[0] * sa + c[1] * ca, c[2]]
           for c in circles]
    m2 = WorldMap("b", (-big, big, -big, big), np.zeros((0, 4)),
                  np.array(rot), [], (0, 1, 0, 1), (2, 3, 2, 3))
    st1 = RobotState(1.0, 1.0, 0.3)
    st2 = RobotState(1.0 * ca - 1.0 * sa, 1.0 * sa + 1.0 * ca, 0.3 + alpha)
    spec = LidarSpec(n_beams=72, max_range=12.0)
    r1 = raycast_scan(st1, m1, spec)
    r2 = raycast_scan(st2, m2, spec)
    assert np.max(np.abs(r1 - r2)) < 1e-9


def test_scan_points_roundtrip():
    spec = LidarSpec(n_beams=90, max_range=5.0)
    m = empty_map(20.0)
    assert len(scan_to_points(raycast_scan(RobotState(10, 10, 0.0), m, spec),
                              spec)) == 0
    ranges = np.full(90, 5.0)
    ranges[0] = 2.0
    pts = scan_to_points(ranges, spec)
    assert pts.shape == (1, 3)
    assert np.allclose(pts[0], [2.0, 0.0, spec.z_sensor])
    # raycast of a circle scene reproduces the hit distances
    m2 = WorldMap("c", (0, 20, 0, 20), np.zeros((0, 4)),
                  np.array([[14.0, 10.0, 1.0]]), [],
                  (0.5, 1, 0.5, 1), (18, 19, 0.5, 1))
    st = RobotState(10, 10, 0.0)
    r = raycast_scan(st, m2, LidarSpec(n_beams=360, max_range=3.9))
    pts = scan_to_points(r, LidarSpec(n_beams=360, max_range=3.9))
    assert len(pts) > 0
    d = np.hypot(pts[:, 0], pts[:, 1])
    hit = r[r < 3.9]
    assert np.allclose(np.sort(d), np.sort(hit), atol=1e-12)


def test_obstacle_distance_basics():
    m = empty_map(20.0)
    st = RobotState(1.0, 10.0, 0.0)
    assert obstacle_distance(st, m, robot_radius=0.2) == pytest.approx(0.8)
    m2 = WorldMap("d", (0, 20, 0, 20), np.array([[5, 5, 6, 6]]),
                  np.zeros((0, 3)), [], (0.5, 1, 0.5, 1), (18, 19, 0.5, 1))
    assert obstacle_distance(RobotState(4.75, 5.5, 0), m2,
                             robot_radius=0.25) == 0.0  # touching
    assert obstacle_distance(RobotState(5.5, 5.5, 0), m2,
                             robot_radius=0.2) == 0.0  # inside


def test_obstacle_distance_matches_scan():
    rng = np.random.default_rng(5)
    for _ in range(100):
        size = 15.0
        boxes = np.array([[2, 2, 4, 3.5], [8, 9, 11, 12]])
        circles = np.array([[6.0, 4.0, 1.0]])
        m = WorldMap("e", (0, size, 0, size), boxes, circles, [],
                     (0.5, 1, 0.5, 1), (13, 14, 0.5, 1))
        p = rng.uniform(0.2, size - 0.2, 2)
        st = RobotState(p[0], p[1], 0.0)
        d = obstacle_distance(st, m, robot_radius=0.0)
        # exhaustive per-shape scan
        cand = [p[0], size - p[0], p[1], size - p[1]]
        for b in boxes:
            qx = max(b[0] - p[0], 0, p[0] - b[2])
            qy = max(b[1] - p[1], 0, p[1] - b[3])
            if qx > 0 or qy > 0:
                cand.append(math.hypot(qx, qy))
            else:
                cand.append(max(b[0] - p[0], p[0] - b[2], b[1] - p[1],
                                p[1] - b[3]))
        for c in circles:
            cand.append(math.hypot(p[0] - c[0], p[1] - c[1]) - c[2])
        assert d == pytest.approx(max(0.0, min(cand)), abs=1e-12)


def test_contact_iff_distance_zero():
    m2 = WorldMap("f", (0, 20, 0, 20), np.array([[5, 5, 6, 6]]),
                  np.zeros((0, 3)), [], (0.5, 1, 0.5, 1), (18, 19, 0.5, 1))
    rng = np.random.default_rng(6)
    for _ in range(300):
        p = rng.uniform(4.0, 7.0, 2)
        st = RobotState(p[0], p[1], 0.0)
        r = 0.3
        d = obstacle_distance(st, m2, robot_radius=r)
        qx = max(5 - p[0], 0, p[0] - 6)
        qy = max(5 - p[1], 0, p[1] - 6)
        overlap = math.hypot(qx, qy) <= r  # disc-box contact test
        assert (d == 0.0) == overlap


def test_builtin_map_stats():
    maps = builtin_maps()
    assert set(maps) == {"T0S", "T1S", "T0D", "T1D", "T2D",
                         "M1", "M2", "M3", "M4", "M5"}
    t0s = maps["T0S"]
    assert t0s.area == pytest.approx(24.0)  # 6x4
    assert len(t0s.boxes) == 2 and len(t0s.circles) == 0
    for b in t0s.boxes:  # 1 m footprint
        assert b[2] - b[0] == pytest.approx(1.0)
        assert b[3] - b[1] == pytest.approx(1.0)
    assert len(maps["T0D"].agents) == 2
    assert len(maps["T1D"].agents) == 13
    assert maps["T1D"].area == pytest.approx(120.0)  # 12x10
    assert maps["T1S"].area == pytest.approx(120.0)
    assert maps["T2D"].area == pytest.approx(120.0)
    assert len(maps["T2D"].boxes) + len(maps["T2D"].circles) > 0
    for ag in maps["T0D"].agents + maps["T1D"].agents:
        assert ag.footprint == (0.2, 0.2)
    # M5 = M4 clutter plus agents
    assert len(maps["M4"].agents) == 0
    assert len(maps["M5"].agents) == 3
    assert np.array_equal(maps["M4"].boxes, maps["M5"].boxes)


def test_agents_stay_inside_bounds():
    for name, m in builtin_maps().items():
        if not m.agents:
            continue
        s = np.zeros(len(m.agents))
        x0, x1, y0, y1 = m.bounds
        for _ in range(5000):
            s = advance_agents(m, s, 0.1)
            pos = agent_positions(m, s)
            assert np.all(pos[:, 0] >= x0) and np.all(pos[:, 0] <= x1)
            assert np.all(pos[:, 1] >= y0) and np.all(pos[:, 1] <= y1)


def test_sample_start_goal_deterministic_and_separated():
    m = get_map("T0S")
    s1, g1 = sample_start_goal(m, np.random.default_rng(9), 0.3)
    s2, g2 = sample_start_goal(m, np.random.default_rng(9), 0.3)
    assert (s1.x, s1.y, s1.theta) == (s2.x, s2.y, s2.theta)
    assert np.array_equal(g1, g2)
    rng = np.random.default_rng(10)
    for _ in range(500):
        s, g = sample_start_goal(m, rng, 0.3)
        assert math.hypot(g[0] - s.x, g[1] - s.y) >= 0.3
        assert m.start_region[0] <= s.x <= m.start_region[1]
        assert m.start_region[2] <= s.y <= m.start_region[3]
        assert m.goal_region[0] <= g[0] <= m.goal_region[1]
        assert m.goal_region[2] <= g[1] <= m.goal_region[3]


def test_sample_start_goal_uniform_chi_square():
    m = get_map("T0S")
    rng = np.random.default_rng(11)
    n = 10_000
    xs, ys = [], []
    for _ in range(n):
        s, _ = sample_start_goal(m, rng, 0.3)
        xs.append(s.x)
        ys.append(s.y)
    x0, x1, y0, y1 = m.start_region
    counts, _, _ = np.histogram2d(xs, ys, bins=4,
                                  range=[[x0, x1], [y0, y1]])
    _, p = stats.chisquare(counts.ravel())
    assert p > 0.01


def test_sample_start_goal_impossible_separation():
    m = map_from_dict({
        "format": "occnav-map/1", "name": "tiny", "bounds": [0, 10, 0, 10],
        "static": [], "agents": [],
        "start_region": [4.0, 4.1, 4.0, 4.1],
        "goal_region": [4.0, 4.1, 4.0, 4.1]})
    with pytest.raises(MapConfigError):
        sample_start_goal(m, np.random.default_rng(0), min_separation=5.0)


def test_map_validation_errors(tmp_path):
    base = {"format": "occnav-map/1", "name": "x", "bounds": [0, 5, 0, 5],
            "static": [], "agents": [],
            "start_region": [0.5, 1, 0.5, 1], "goal_region": [4, 4.5, 0.5, 1]}
    with pytest.raises(MapConfigError):
        map_from_dict({**base, "format": "nope/9"})
    with pytest.raises(MapConfigError):
        map_from_dict({**base, "start_region": [0.5, 1, 0.5, 9]})
    with pytest.raises(MapConfigError):
        map_from_dict({**base, "agents": [{"footprint": [0.2, 0.2],
                                           "speed": 0.5,
                                           "waypoints": [[1, 1], [6, 1]]}]})
    with pytest.raises(MapConfigError):
        map_from_dict({**base,
                       "static": [{"type": "box", "center": [2, 2],
                                   "size": [0.0, 1.0]}]})
    with pytest.raises(MapConfigError):
        get_map("NOPE")
    # load_map round-trips a valid file
    path = tmp_path / "m.yaml"
    import yaml
    path.write_text(yaml.safe_dump(base))
    m = load_map(str(path))
    assert m.name == "x"


def test_lidar_spec_validation_and_jitter():
    with pytest.raises(ValueError):
        LidarSpec(n_beams=0)
    with pytest.raises(ValueError):
        LidarSpec(fov=0.0)
    with pytest.raises(ValueError):
        LidarSpec(max_range=-1.0)
    spec = LidarSpec(n_beams=36, max_range=10.0, jitter=0.05)
    m = empty_map(12.0)
    st = RobotState(6, 6, 0.0)
    clean = raycast_scan(st, m, LidarSpec(n_beams=36, max_range=10.0))
    noisy = raycast_scan(st, m, spec, rng=np.random.default_rng(0))
    assert np.all(np.abs(noisy - clean) <= 0.05 + 1e-12)
    assert np.any(noisy != clean)
