import math

import numpy as np
import pytest

from occnav.kinematics import (ActionSpace, ActionTuple, build_primitive_bank,
                               discretize_actions, load_bank_text,
                               rollout_trajectory, save_bank_text)
from helpers import rk4_unicycle


def test_paper_action_count():
    space = ActionSpace(n_v=5, n_w=21)
    assert space.n_actions == 105
    assert len(discretize_actions(space)) == 105


def test_degenerate_single_point_grids():
    space = ActionSpace(n_v=1, n_w=1, v_max=1.0, w_min=-1.0, w_max=1.0)
    (a,) = discretize_actions(space)
    assert (a.v, a.w, a.index) == (0.0, -1.0, 0)


def test_three_point_v_grid_includes_endpoints():
    space = ActionSpace(n_v=3, n_w=1, v_max=1.0, w_min=-1.0, w_max=1.0)
    vs = [a.v for a in discretize_actions(space)]
    assert vs == [0.0, 0.5, 1.0]


def test_grids_are_uniform_to_machine_precision():
    space = ActionSpace(n_v=7, n_w=13, v_max=0.9, w_min=-1.7, w_max=2.3)
    acts = discretize_actions(space)
    vs = sorted({a.v for a in acts})
    ws = sorted({a.w for a in acts})
    assert len(vs) == 7 and len(ws) == 13
    dv = np.diff(vs)
    dw = np.diff(ws)
    assert np.allclose(dv, dv[0], rtol=0, atol=1e-15)
    assert np.allclose(dw, dw[0], rtol=0, atol=1e-15)


def test_index_is_row_major_v_outer():
    space = ActionSpace(n_v=2, n_w=3, v_max=1.0, w_min=-1.0, w_max=1.0)
    acts = discretize_actions(space)
    assert [a.index for a in acts] == list(range(6))
    assert acts[0].v == acts[1].v == acts[2].v == 0.0
    assert acts[3].v == acts[4].v == acts[5].v == 1.0
    assert acts[1].w == acts[4].w == 0.0


def test_invalid_spaces_rejected():
    with pytest.raises(ValueError):
        ActionSpace(n_v=0)
    with pytest.raises(ValueError):
        ActionSpace(v_max=0.0)
    with pytest.raises(ValueError):
        ActionSpace(w_min=1.0, w_max=1.0)


def test_zero_velocity_rollout_stays_at_origin():
    tr = rollout_trajectory(ActionTuple(0.0, 0.0, 0), horizon=2.0, n_samples=5)
    assert np.array_equal(tr.points, np.zeros((5, 3)))
    tr = rollout_trajectory(ActionTuple(0.0, 1.3, 0), horizon=2.0, n_samples=5)
    assert np.array_equal(tr.points, np.zeros((5, 3)))


def test_straight_line_rollout():
    tr = rollout_trajectory(ActionTuple(1.0, 0.0, 0), horizon=2.0, n_samples=4)
    assert np.allclose(tr.points[:, 0], [0.5, 1.0, 1.5, 2.0], atol=1e-15)
    assert np.all(tr.points[:, 1:] == 0.0)


def test_arc_endpoint_matches_rk4():
    tr = rollout_trajectory(ActionTuple(0.5, 0.5, 0), horizon=2.0, n_samples=10)
    x, y, _ = rk4_unicycle(0.5, 0.5, 2.0)
    assert math.hypot(tr.points[-1, 0] - x, tr.points[-1, 1] - y) < 1e-9


def test_random_rollouts_match_rk4():
    rng = np.random.default_rng(7)
    for _ in range(25):
        v = rng.uniform(0.0, 1.5)
        w = rng.uniform(-2.5, 2.5)
        horizon = rng.uniform(0.5, 4.0)
        tr = rollout_trajectory(ActionTuple(v, w, 0), horizon, 8)
        x, y, _ = rk4_unicycle(v, w, horizon)
        assert math.hypot(tr.points[-1, 0] - x, tr.points[-1, 1] - y) < 1e-9


def test_arc_lies_on_turning_circle():
    v, w = 0.7, 1.1
    tr = rollout_trajectory(ActionTuple(v, w, 0), 2.5, 20)
    r = v / w
    resid = tr.points[:, 0] ** 2 + (tr.points[:, 1] - r) ** 2 - r * r
    assert np.max(np.abs(resid)) < 1e-9


def test_arc_length_spacing_constant():
    for v, w in [(0.8, 0.0), (0.5, 1.7), (1.0, -2.0)]:
        tr = rollout_trajectory(ActionTuple(v, w, 0), 2.5, 20)
        pts = np.vstack([np.zeros(3), tr.points])
        if abs(w) < 1e-12:
            seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        else:
            # chord -> arc length for the constant-curvature segments
            chords = np.linalg.norm(np.diff(pts, axis=0), axis=1)
            seg = 2.0 * (v / w) * np.arcsin(chords / (2.0 * abs(v / w))) * np.sign(w)
            seg = np.abs(seg)
        assert np.max(np.abs(seg - v * 2.5 / 20)) < 1e-9


def test_bank_counts_and_bijection():
    bank = build_primitive_bank(ActionSpace(5, 21), 2.5, 20)
    assert len(bank) == 105
    assert bank.points.shape == (105, 20, 3)
    for idx in range(len(bank)):
        act = bank.action(idx)
        assert act.index == idx
        assert bank.index_of(act) == idx
        assert bank.trajectories[idx].action_index == idx


def test_first_point_near_origin():
    bank = build_primitive_bank(ActionSpace(5, 21), 2.5, 20)
    first = np.linalg.norm(bank.points[:, 0, :], axis=1)
    assert np.all(first <= bank.space.v_max * bank.horizon / bank.n_samples + 1e-12)


def test_rollout_validation():
    with pytest.raises(ValueError):
        rollout_trajectory(ActionTuple(0.5, 0.0, 0), horizon=0.0, n_samples=5)
    with pytest.raises(ValueError):
        rollout_trajectory(ActionTuple(0.5, 0.0, 0), horizon=1.0, n_samples=1)


def test_bank_text_roundtrip(tmp_path):
    bank = build_primitive_bank(ActionSpace(3, 5, v_max=0.6, w_min=-1.5,
                                            w_max=1.5), 1.5, 7)
    path = tmp_path / "bank.txt"
    save_bank_text(bank, str(path))
    loaded = load_bank_text(str(path))
    assert len(loaded) == len(bank)
    assert np.array_equal(loaded.points, bank.points)
    assert loaded.actions == bank.actions
