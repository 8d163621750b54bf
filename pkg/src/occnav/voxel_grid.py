"""Robot-centered 3D voxel grid: offline trajectory-band classification and
the per-step occupancy array.

Offline, every grid voxel is tested against every trajectory of the
primitive bank: voxels closer than tau_priority to the trajectory's nearest
sampling point form the Priority band, voxels in [tau_priority, tau_support)
the Support band. Each classified voxel carries its linear grid index, a
weight, the index of the nearest sampling point, and the class flag. Online,
a flat occupancy array over the same grid is refreshed from sensor hits.

Bands are stored columnar (one array per field) and sorted by linear voxel
index; the occupancy scorer relies on that ordering.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_RESOLUTION = 0.1
DEFAULT_EXTENT = (-0.5, 3.0, -3.0, 3.0, 0.0, 0.1)
DEFAULT_TAU_PRIORITY = 0.25
DEFAULT_TAU_SUPPORT = 0.55
DEFAULT_BETA_PRIORITY = 1.0
DEFAULT_BETA_SUPPORT = 0.5
DEFAULT_SIGMA_MAX = 1.0


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned grid in the robot frame; cell counts derive from the extent."""

    resolution: float = DEFAULT_RESOLUTION
    extent: tuple[float, float, float, float, float, float] = DEFAULT_EXTENT

    def __post_init__(self) -> None:
        if self.resolution <= 0:
            raise ValueError("resolution must be > 0")
        x0, x1, y0, y1, z0, z1 = self.extent
        if not (x0 < x1 and y0 < y1 and z0 < z1):
            raise ValueError("extent must have strictly positive volume")

    def _count(self, lo: float, hi: float) -> int:
        return max(1, math.ceil((hi - lo) / self.resolution - 1e-9))

    @property
    def counts(self) -> tuple[int, int, int]:
        x0, x1, y0, y1, z0, z1 = self.extent
        return (self._count(x0, x1), self._count(y0, y1), self._count(z0, z1))

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.counts
        return nx * ny * nz

    def centers(self) -> np.ndarray:
        """(n_voxels, 3) voxel-center coordinates in linear-index order."""
        nx, ny, nz = self.counts
        x0, _, y0, _, z0, _ = self.extent
        r = self.resolution
        xs = x0 + (np.arange(nx) + 0.5) * r
        ys = y0 + (np.arange(ny) + 0.5) * r
        zs = z0 + (np.arange(nz) + 0.5) * r
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    def points_to_voxels(self, points: np.ndarray) -> np.ndarray:
        """Linear voxel index per point, -1 for points outside the extent."""
        nx, ny, nz = self.counts
        x0, _, y0, _, z0, _ = self.extent
        r = self.resolution
        pts = np.atleast_2d(points)
        ix = np.floor((pts[:, 0] - x0) / r).astype(np.int64)
        iy = np.floor((pts[:, 1] - y0) / r).astype(np.int64)
        iz = np.floor((pts[:, 2] - z0) / r).astype(np.int64)
        ok = ((ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
              & (iz >= 0) & (iz < nz))
        u = (ix * ny + iy) * nz + iz
        return np.where(ok, u, -1)


def linearize(ix: int, iy: int, iz: int, spec: GridSpec) -> int:
    nx, ny, nz = spec.counts
    if not (0 <= ix < nx and 0 <= iy < ny and 0 <= iz < nz):
        raise IndexError(f"voxel index ({ix},{iy},{iz}) out of range {spec.counts}")
    return (ix * ny + iy) * nz + iz


def delinearize(u: int, spec: GridSpec) -> tuple[int, int, int]:
    nx, ny, nz = spec.counts
    if not 0 <= u < nx * ny * nz:
        raise IndexError(f"linear index {u} out of range [0,{nx * ny * nz})")
    iz = u % nz
    iy = (u // nz) % ny
    ix = u // (nz * ny)
    return ix, iy, iz


@dataclass(frozen=True)
class Voxel:
    """One classified voxel: linear index, weight, nearest sample, class flag."""

    u: int
    beta: float
    m: int
    c: int  # 1 = Priority, 0 = Support


class VoxelSet:
    """Columnar set of classified voxels, sorted by linear index u."""

    __slots__ = ("u", "beta", "m", "c")

    def __init__(self, u: np.ndarray, beta: np.ndarray, m: np.ndarray,
                 c: np.ndarray):
        self.u = np.asarray(u, dtype=np.int64)
        self.beta = np.asarray(beta, dtype=np.float64)
        self.m = np.asarray(m, dtype=np.int64)
        self.c = np.asarray(c, dtype=np.int8)

    def __len__(self) -> int:
        return self.u.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield Voxel(int(self.u[i]), float(self.beta[i]), int(self.m[i]),
                        int(self.c[i]))

    @staticmethod
    def empty() -> "VoxelSet":
        z = np.zeros(0)
        return VoxelSet(z, z, z, z)


def nearest_sample_index(center: np.ndarray, points: np.ndarray) -> tuple[int, float]:
    """Index of the trajectory sample closest to ``center`` (ties -> smaller index)."""
    if len(points) == 0:
        raise ValueError("trajectory has no sampling points")
    d2 = np.sum((points - np.asarray(center, dtype=np.float64)) ** 2, axis=1)
    m = int(np.argmin(d2))  # argmin returns the first minimum
    return m, float(np.sqrt(d2[m]))


def classify_voxels(spec: GridSpec, points: np.ndarray, tau_priority: float,
                    tau_support: float, beta_priority: float = DEFAULT_BETA_PRIORITY,
                    beta_support: float = DEFAULT_BETA_SUPPORT,
                    centers: np.ndarray | None = None) -> tuple[VoxelSet, VoxelSet]:
    """Split the grid into the trajectory's Priority and Support bands.

    distance < tau_priority -> Priority; tau_priority <= distance <
    tau_support -> Support (closed-open, so the partition is total).
    Both returned sets are sorted by linear voxel index.
    """
    if not 0 < tau_priority < tau_support:
        raise ValueError("need 0 < tau_priority < tau_support")
    if centers is None:
        centers = spec.centers()
    # dense (n_voxels, n_samples) distance matrix; grids are small offline.
    # Plain squared differences (not the a^2+b^2-2ab expansion) so distance
    # ties resolve identically to a per-voxel scan.
    d2 = ((centers[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1)
    m = np.argmin(d2, axis=1)
    dist = np.sqrt(d2[np.arange(len(centers)), m])
    pri = dist < tau_priority
    sup = (~pri) & (dist < tau_support)

    def build(mask: np.ndarray, beta: float, c: int) -> VoxelSet:
        u = np.nonzero(mask)[0]  # ascending by construction
        return VoxelSet(u, np.full(len(u), beta), m[u], np.full(len(u), c))

    return build(pri, beta_priority, 1), build(sup, beta_support, 0)


def _merge_by_u(priority: VoxelSet, support: VoxelSet) -> VoxelSet:
    """Disjoint union of both bands, re-sorted by u (the scoring order)."""
    u = np.concatenate([priority.u, support.u])
    order = np.argsort(u, kind="stable")
    return VoxelSet(u[order],
                    np.concatenate([priority.beta, support.beta])[order],
                    np.concatenate([priority.m, support.m])[order],
                    np.concatenate([priority.c, support.c])[order])


@dataclass
class ClassifiedGrid:
    """Per-trajectory classified bands over a shared grid.

    ``bands[j]`` holds trajectory j's Priority and Support voxels merged and
    sorted by linear index. Immutable after construction; may be shared
    read-only across workers.
    """

    spec: GridSpec
    bands: list[VoxelSet]
    n_samples: int  # sampling points per trajectory (crash-index sentinel)
    tau_priority: float
    tau_support: float
    beta_priority: float
    beta_support: float
    cache_key: str = ""
    _flat: dict = field(default_factory=dict, repr=False)

    def priority(self, j: int) -> VoxelSet:
        b = self.bands[j]
        sel = b.c == 1
        return VoxelSet(b.u[sel], b.beta[sel], b.m[sel], b.c[sel])

    def support(self, j: int) -> VoxelSet:
        b = self.bands[j]
        sel = b.c == 0
        return VoxelSet(b.u[sel], b.beta[sel], b.m[sel], b.c[sel])

    def flat_arrays(self) -> dict:
        """Concatenated band arrays with CSR-style offsets (built lazily)."""
        if not self._flat:
            offsets = np.zeros(len(self.bands) + 1, dtype=np.int64)
            p_offsets = np.zeros(len(self.bands) + 1, dtype=np.int64)
            for j, b in enumerate(self.bands):
                offsets[j + 1] = offsets[j] + len(b)
                p_offsets[j + 1] = p_offsets[j] + int(np.sum(b.c == 1))
            self._flat = {
                "u": np.concatenate([b.u for b in self.bands]),
                "beta": np.concatenate([b.beta for b in self.bands]),
                "m": np.concatenate([b.m for b in self.bands]),
                "offsets": offsets,
                "p_u": np.concatenate([b.u[b.c == 1] for b in self.bands]),
                "p_m": np.concatenate([b.m[b.c == 1] for b in self.bands]),
                "p_offsets": p_offsets,
            }
        return self._flat


def classify_bank(spec: GridSpec, bank_points: np.ndarray, n_samples: int,
                  tau_priority: float = DEFAULT_TAU_PRIORITY,
                  tau_support: float = DEFAULT_TAU_SUPPORT,
                  beta_priority: float = DEFAULT_BETA_PRIORITY,
                  beta_support: float = DEFAULT_BETA_SUPPORT,
                  cache_key: str = "") -> ClassifiedGrid:
    """Classify every trajectory of a bank against the grid (offline stage)."""
    centers = spec.centers()
    bands = []
    for j in range(bank_points.shape[0]):
        pri, sup = classify_voxels(spec, bank_points[j], tau_priority,
                                   tau_support, beta_priority, beta_support,
                                   centers=centers)
        bands.append(_merge_by_u(pri, sup))
    return ClassifiedGrid(spec, bands, n_samples, tau_priority, tau_support,
                          beta_priority, beta_support, cache_key)


@dataclass
class OccupancyArray:
    """Flat per-voxel occupancy values in [0, sigma_max]."""

    sigma: np.ndarray
    sigma_max: float = DEFAULT_SIGMA_MAX

    @staticmethod
    def zeros(spec: GridSpec, sigma_max: float = DEFAULT_SIGMA_MAX) -> "OccupancyArray":
        return OccupancyArray(np.zeros(spec.n_voxels, dtype=np.float64), sigma_max)


def update_occupancy(occ: OccupancyArray, hits: np.ndarray,
                     spec: GridSpec) -> OccupancyArray:
    """Clear the array, then mark each in-extent hit's voxel as occupied.

    Binary per-frame model: a hit sets sigma to sigma_max, everything else is
    0. Temporal context comes from observation stacking, not from the grid.
    """
    occ.sigma.fill(0.0)
    if len(hits) == 0:
        return occ
    u = spec.points_to_voxels(hits)
    u = u[u >= 0]
    occ.sigma[u] = occ.sigma_max
    return occ


# ---------------------------------------------------------------------------
# Offline-stage cache: one classification per (bank, grid, thresholds) triple.

def classification_cache_key(space_cfg: dict, horizon: float, n_samples: int,
                             spec: GridSpec, tau_priority: float,
                             tau_support: float, beta_priority: float,
                             beta_support: float) -> str:
    payload = json.dumps({
        "v": 1,
        "space": space_cfg,
        "horizon": horizon,
        "n_T": n_samples,
        "resolution": spec.resolution,
        "extent": list(spec.extent),
        "tau_priority": tau_priority,
        "tau_support": tau_support,
        "beta_priority": beta_priority,
        "beta_support": beta_support,
    }, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def save_classified_grid(grid: ClassifiedGrid, path: str) -> None:
    flat = grid.flat_arrays()
    meta = {
        "format": "occnav-classified-grid/1",
        "resolution": grid.spec.resolution,
        "extent": list(grid.spec.extent),
        "n_samples": grid.n_samples,
        "tau_priority": grid.tau_priority,
        "tau_support": grid.tau_support,
        "beta_priority": grid.beta_priority,
        "beta_support": grid.beta_support,
        "cache_key": grid.cache_key,
    }
    c = np.concatenate([b.c for b in grid.bands])
    np.savez_compressed(path, meta=json.dumps(meta), u=flat["u"],
                        beta=flat["beta"], m=flat["m"], c=c,
                        offsets=flat["offsets"])


def load_classified_grid(path: str) -> ClassifiedGrid:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != "occnav-classified-grid/1":
            raise ValueError(f"{path}: not a classified-grid cache file")
        spec = GridSpec(meta["resolution"], tuple(meta["extent"]))
        off = data["offsets"]
        bands = []
        for j in range(len(off) - 1):
            s = slice(off[j], off[j + 1])
            bands.append(VoxelSet(data["u"][s], data["beta"][s], data["m"][s],
                                  data["c"][s]))
    return ClassifiedGrid(spec, bands, meta["n_samples"], meta["tau_priority"],
                          meta["tau_support"], meta["beta_priority"],
                          meta["beta_support"], meta["cache_key"])
