"""Per-trajectory occupancy values from the classified grid.

For every trajectory j, the crash index is the nearest sampling point whose
Priority band contains an occupied voxel; voxels mapped at or beyond it are
treated as fully occupied. The trajectory's occupancy value is the ratio of
the occupancy-scaled weight sum to the saturated weight sum,

    H_j = W_scaled_j / (sigma_max * W_j),  H_j in [0, 1],

so 0 means a free corridor and 1 a corridor blocked from the first sample.

Summations run over a trajectory's band in ascending voxel-index order via
``ndarray.sum`` (a pure function of the summand array), so independent
re-derivations that build the same per-voxel contributions reduce to
bit-identical values.
"""

from __future__ import annotations

import numpy as np

from .voxel_grid import ClassifiedGrid, OccupancyArray, VoxelSet, _merge_by_u


class DegenerateTrajectoryError(ValueError):
    """A trajectory's band contains no voxels, so its value is undefined."""

    def __init__(self, trajectory: int):
        self.trajectory = trajectory
        super().__init__(f"trajectory {trajectory} has no classified voxels "
                         "inside the grid")


def crash_index(priority: VoxelSet, occ: OccupancyArray, n_samples: int) -> int:
    """Sampling-point index of the first occupied Priority voxel.

    Returns ``n_samples`` (one past the last sample) when nothing in the
    Priority band is occupied, which makes the crash guard m < u_crash total.
    """
    if len(priority) == 0:
        return n_samples
    occupied = occ.sigma[priority.u] > 0.0
    if not occupied.any():
        return n_samples
    return int(priority.m[occupied].min())


def weight_sum(priority: VoxelSet, support: VoxelSet) -> float:
    """Total band weight W_j = sum of beta over Support and Priority voxels."""
    merged = _merge_by_u(priority, support)
    if len(merged) == 0:
        raise DegenerateTrajectoryError(-1)
    return float(merged.beta.sum())


def scaled_weight_sum(priority: VoxelSet, support: VoxelSet,
                      occ: OccupancyArray, u_crash: int) -> float:
    """Occupancy-scaled weight sum W_scaled_j.

    Each voxel contributes alpha * beta with alpha equal to the voxel's own
    occupancy while its nearest sample lies before the crash index, and
    sigma_max from the crash point on.
    """
    merged = _merge_by_u(priority, support)
    if len(merged) == 0:
        raise DegenerateTrajectoryError(-1)
    alpha = np.where(merged.m < u_crash, occ.sigma[merged.u], occ.sigma_max)
    return float((alpha * merged.beta).sum())


def occupancy_value(w: float, w_scaled: float, sigma_max: float) -> float:
    """W_scaled over the saturated weight sum, clamped to the unit interval.

    The clamp only absorbs float round-off: summing alpha*beta and scaling
    sum(beta) round differently, so a fully saturated band can land one ulp
    above 1.0.
    """
    if w <= 0.0:
        raise DegenerateTrajectoryError(-1)
    if sigma_max <= 0.0:
        raise ValueError("sigma_max must be > 0")
    return min(1.0, w_scaled / (sigma_max * w))


def _eval_state(grid: ClassifiedGrid) -> dict:
    """Evaluation scratch state cached on the grid's flat-array dict."""
    flat = grid.flat_arrays()
    if "w" not in flat:
        sizes = np.diff(flat["offsets"])
        empty = np.nonzero(sizes == 0)[0]
        if len(empty):
            raise DegenerateTrajectoryError(int(empty[0]))
        off = flat["offsets"]
        beta = flat["beta"]
        w = np.empty(len(sizes), dtype=np.float64)
        for j in range(len(sizes)):
            w[j] = beta[off[j]:off[j + 1]].sum()
        flat["w"] = w
        flat["sizes"] = sizes
        flat["p_sizes"] = np.diff(flat["p_offsets"])
        # padded crash-candidate buffer: keeps reduceat offsets in range and
        # the trailing sentinel never wins a minimum
        flat["cand_pad"] = np.full(len(flat["p_u"]) + 1, grid.n_samples,
                                   dtype=np.int64)
    return flat


def evaluate_all(grid: ClassifiedGrid, occ: OccupancyArray) -> np.ndarray:
    """Occupancy values for every trajectory, index-aligned with the bank.

    Pure function of (grid, occ): identical inputs give bit-identical
    outputs. Raises DegenerateTrajectoryError if any trajectory has an empty
    band.
    """
    flat = _eval_state(grid)
    sigma = occ.sigma
    n_t = grid.n_samples

    cand = flat["cand_pad"]
    cand[:-1] = np.where(sigma[flat["p_u"]] > 0.0, flat["p_m"], n_t)
    crash = np.minimum.reduceat(cand, flat["p_offsets"][:-1])
    crash[flat["p_sizes"] == 0] = n_t

    alpha = np.where(flat["m"] < np.repeat(crash, flat["sizes"]),
                     sigma[flat["u"]], occ.sigma_max)
    prod = alpha * flat["beta"]
    off = flat["offsets"]
    n_k = len(flat["sizes"])
    ws = np.empty(n_k, dtype=np.float64)
    for j in range(n_k):
        ws[j] = prod[off[j]:off[j + 1]].sum()
    return np.minimum(1.0, ws / (occ.sigma_max * flat["w"]))
