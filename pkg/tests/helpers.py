"""Independent oracles and instance generators shared across the tests.

Everything here re-derives results from first principles (explicit scans,
numerical integration, segment geometry) so the production code paths are
checked against genuinely separate computations.
"""

from __future__ import annotations

import math

import numpy as np

from occnav.kinematics import ActionSpace, build_primitive_bank
from occnav.voxel_grid import GridSpec, classify_bank


# ---------------------------------------------------------------------------
# Kinematics: classic fourth-order integration of the unicycle ODE

def rk4_unicycle(v: float, w: float, t_end: float,
                 n_steps: int = 2000) -> tuple[float, float, float]:
    def f(state):
        x, y, th = state
        return np.array([v * math.cos(th), v * math.sin(th), w])

    s = np.zeros(3)
    h = t_end / n_steps
    for _ in range(n_steps):
        k1 = f(s)
        k2 = f(s + 0.5 * h * k1)
        k3 = f(s + 0.5 * h * k2)
        k4 = f(s + h * k3)
        s = s + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return float(s[0]), float(s[1]), float(s[2])


# ---------------------------------------------------------------------------
# Occupancy: exhaustive per-voxel, per-trajectory re-derivation

def naive_centers(spec: GridSpec) -> np.ndarray:
    nx, ny, nz = spec.counts
    x0, _, y0, _, z0, _ = spec.extent
    out = np.zeros((nx * ny * nz, 3))
    u = 0
    for ix in range(nx):
        for iy in range(ny):
            for iz in range(nz):
                out[u] = (x0 + (ix + 0.5) * spec.resolution,
                          y0 + (iy + 0.5) * spec.resolution,
                          z0 + (iz + 0.5) * spec.resolution)
                u += 1
    return out


def naive_occupancy_values(spec: GridSpec, bank_points: np.ndarray,
                           sigma: np.ndarray, sigma_max: float,
                           tau_p: float, tau_s: float,
                           beta_p: float, beta_s: float) -> np.ndarray:
    """H per trajectory from scratch: scan every voxel, classify, find the
    crash index, and accumulate the weight sums."""
    centers = naive_centers(spec)
    n_traj, n_samples, _ = bank_points.shape
    h_out = np.zeros(n_traj)
    for j in range(n_traj):
        pts = bank_points[j]
        d2mat = ((centers[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
        members = []  # (u, beta, m, is_priority) in ascending u
        for u in range(len(centers)):
            m = int(np.argmin(d2mat[u]))
            d = math.sqrt(d2mat[u][m])
            if d < tau_p:
                members.append((u, beta_p, m, True))
            elif d < tau_s:
                members.append((u, beta_s, m, False))
        assert members, f"trajectory {j} has no voxels; bad test instance"
        crash = n_samples
        for u, _, m, is_p in members:
            if is_p and sigma[u] > 0.0:
                crash = min(crash, m)
        betas = np.array([b for _, b, _, _ in members])
        alphas = np.array([sigma[u] if m < crash else sigma_max
                           for u, _, m, _ in members])
        # same unit-interval clamp as the implementation contract
        h_out[j] = min(1.0, np.sum(alphas * betas) / (sigma_max * np.sum(betas)))
    return h_out


def random_eval_instance(rng: np.random.Generator, max_traj: int = 20,
                         max_vox: int = 5000):
    """Random (spec, bank, classified grid, sigma, sigma_max) instance with
    no degenerate trajectories."""
    for _ in range(50):
        n_v = int(rng.integers(1, 5))
        n_w = int(rng.integers(1, max(2, max_traj // n_v + 1)))
        if n_v * n_w > max_traj:
            continue
        space = ActionSpace(n_v, n_w, v_max=float(rng.uniform(0.3, 1.2)),
                            w_min=float(-rng.uniform(0.5, 2.5)),
                            w_max=float(rng.uniform(0.5, 2.5)))
        horizon = float(rng.uniform(1.0, 3.0))
        n_t = int(rng.integers(4, 25))
        bank = build_primitive_bank(space, horizon, n_t)
        res = float(rng.uniform(0.08, 0.35))
        reach = space.v_max * horizon
        x1 = min(reach + 0.4, rng.uniform(0.8, reach + 0.6))
        y1 = float(rng.uniform(0.6, max(0.7, 0.8 * reach)))
        nz_extent = res * int(rng.integers(1, 4))
        spec = GridSpec(res, (-0.3, float(x1), -float(y1), float(y1),
                              0.0, nz_extent))
        if spec.n_voxels > max_vox:
            continue
        tau_p = float(rng.uniform(1.1, 2.0)) * res
        tau_s = tau_p + float(rng.uniform(0.5, 2.0)) * res
        beta_p = float(rng.uniform(0.2, 3.0))
        beta_s = float(rng.uniform(0.1, 2.0))
        cgrid = classify_bank(spec, bank.points, bank.n_samples, tau_p, tau_s,
                              beta_p, beta_s)
        if min(len(b) for b in cgrid.bands) == 0:
            continue
        sigma_max = float(rng.uniform(0.5, 2.0))
        occupied = rng.random(spec.n_voxels) < rng.uniform(0.02, 0.3)
        sigma = np.where(occupied, rng.uniform(0.0, sigma_max,
                                               spec.n_voxels), 0.0)
        return spec, bank, cgrid, sigma, sigma_max
    raise AssertionError("could not draw a non-degenerate instance")


# ---------------------------------------------------------------------------
# Raycasting: segment/projection geometry instead of slab/quadratic forms

def ray_segment_t(origin, direction, p, q) -> float:
    """Ray parameter of the intersection with segment [p, q], inf if none."""
    ox, oy = origin
    dx, dy = direction
    ex, ey = q[0] - p[0], q[1] - p[1]
    den = dx * ey - dy * ex
    if abs(den) < 1e-300:
        return math.inf
    t = ((p[0] - ox) * ey - (p[1] - oy) * ex) / den
    s = ((p[0] - ox) * dy - (p[1] - oy) * dx) / den
    if t > 1e-12 and -1e-12 <= s <= 1.0 + 1e-12:
        return t
    return math.inf


def ray_box_oracle(origin, direction, box) -> float:
    x0, y0, x1, y1 = box
    corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    return min(ray_segment_t(origin, direction, corners[i],
                             corners[(i + 1) % 4]) for i in range(4))


def ray_circle_oracle(origin, direction, cx, cy, r) -> float:
    """Projection construction: foot of the center on the ray, then the
    chord half-length."""
    ox, oy = origin
    tc = (cx - ox) * direction[0] + (cy - oy) * direction[1]
    h2 = (cx - ox) ** 2 + (cy - oy) ** 2 - tc * tc
    if h2 > r * r:
        return math.inf
    half = math.sqrt(r * r - h2)
    for t in (tc - half, tc + half):
        if t > 1e-12:
            return t
    return math.inf


# ---------------------------------------------------------------------------
# Advantage estimation: direct truncated power series

def gae_oracle(rewards, values, dones, gamma, lam, bootstrap_value):
    """A_t = sum_l (gamma*lam)^l * delta_{t+l}, truncated at the first done."""
    n = len(rewards)
    deltas = np.zeros(n)
    for t in range(n):
        next_v = bootstrap_value if t == n - 1 else values[t + 1]
        deltas[t] = rewards[t] + gamma * next_v * (1.0 - dones[t]) - values[t]
    adv = np.zeros(n)
    for t in range(n):
        acc = 0.0
        factor = 1.0
        for l in range(t, n):
            acc += factor * deltas[l]
            if dones[l]:
                break
            factor *= gamma * lam
        adv[t] = acc
    return adv, adv + np.asarray(values, dtype=np.float64)
