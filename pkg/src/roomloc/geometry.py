"""Room discretization, cluster grid indexing, and Cartesian/DOA conversion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def _as_vec3(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {arr}")
    return arr


@dataclass(frozen=True)
class RoomSpec:
    """Shoebox room: dimensions in meters plus propagation constants."""

    dims: np.ndarray
    sound_speed: float = 343.0
    sample_rate: int = 8000

    def __post_init__(self):
        object.__setattr__(self, "dims", _as_vec3(self.dims, "dims"))
        if np.any(self.dims <= 0):
            raise ValueError(f"room dims must be positive, got {self.dims}")
        if self.sound_speed <= 0:
            raise ValueError("sound_speed must be positive")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    def contains(self, p, tol: float = 0.0) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= -tol) and np.all(p <= self.dims + tol))

    @property
    def center(self) -> np.ndarray:
        return self.dims / 2.0


@dataclass(frozen=True)
class MicArray:
    """Fixed microphone positions; center is their arithmetic mean."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must be (M, 3), got shape {pos.shape}")
        if pos.shape[0] < 2:
            raise ValueError("need at least 2 microphones")
        if not np.all(np.isfinite(pos)):
            raise ValueError("microphone positions must be finite")
        object.__setattr__(self, "positions", pos)

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    @property
    def center(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    def require_inside(self, room: RoomSpec) -> None:
        for m, p in enumerate(self.positions):
            if np.any(p <= 0) or np.any(p >= room.dims):
                raise ValueError(f"microphone {m} at {p} is not strictly inside the room")


def axial_mic_array(center, arm: float = 0.2) -> MicArray:
    """Six-microphone array: one pair straddling the center along each axis.

    Pair order is -x, +x, -y, +y, -z, +z, so the array center equals `center`.
    """
    c = _as_vec3(center, "center")
    if arm <= 0:
        raise ValueError("arm must be positive")
    offsets = np.array([
        [-arm, 0, 0], [arm, 0, 0],
        [0, -arm, 0], [0, arm, 0],
        [0, 0, -arm], [0, 0, arm],
    ])
    return MicArray(c + offsets)


@dataclass(frozen=True)
class ClusterGrid:
    """Partition of the room into equal axis-aligned boxes.

    Cluster indices run x-fastest: index = ix + nx*(iy + ny*iz). The mapping
    from points to indices is a true partition; points on a shared face
    belong to the lower-index cluster and the far room boundary belongs to
    the last cluster along that axis.
    """

    room_dims: np.ndarray
    cluster_dim: np.ndarray
    counts: tuple[int, int, int]

    @property
    def k(self) -> int:
        nx, ny, nz = self.counts
        return nx * ny * nz

    def index_of_cell(self, cell: tuple[int, int, int]) -> int:
        ix, iy, iz = cell
        nx, ny, nz = self.counts
        if not (0 <= ix < nx and 0 <= iy < ny and 0 <= iz < nz):
            raise ValueError(f"cell {cell} out of range for counts {self.counts}")
        return ix + nx * (iy + ny * iz)

    def cell_of_index(self, index: int) -> tuple[int, int, int]:
        if not (0 <= index < self.k):
            raise ValueError(f"cluster index {index} out of range [0, {self.k})")
        nx, ny, _ = self.counts
        ix = index % nx
        iy = (index // nx) % ny
        iz = index // (nx * ny)
        return (ix, iy, iz)


def make_cluster_grid(room: RoomSpec, cluster_dim) -> ClusterGrid:
    """Divide the room into equal boxes; each room dimension must be an
    exact integer multiple of the corresponding cluster dimension."""
    cdim = _as_vec3(cluster_dim, "cluster_dim")
    if np.any(cdim <= 0):
        raise ValueError(f"cluster_dim must be positive, got {cdim}")
    counts = []
    for axis in range(3):
        ratio = room.dims[axis] / cdim[axis]
        n = int(round(ratio))
        remainder = room.dims[axis] - n * cdim[axis]
        if n < 1 or abs(remainder) > 1e-9 * max(1.0, room.dims[axis]):
            raise ValueError(
                f"room dim {room.dims[axis]} on axis {axis} is not an integer "
                f"multiple of cluster dim {cdim[axis]} (remainder "
                f"{room.dims[axis] % cdim[axis]:.6g})"
            )
        counts.append(n)
    return ClusterGrid(room.dims.copy(), cdim, (counts[0], counts[1], counts[2]))


def cluster_of(grid: ClusterGrid, p) -> int:
    """Map an in-room point to its cluster index.

    Boundary rule: a point exactly on a shared face goes to the lower-index
    cluster; p = 0 on an axis goes to the first cluster.
    """
    p = _as_vec3(p, "p")
    if np.any(p < 0) or np.any(p > grid.room_dims):
        raise ValueError(f"point {p} is outside the room {grid.room_dims}")
    cell = []
    for axis in range(3):
        i = int(math.ceil(p[axis] / grid.cluster_dim[axis])) - 1
        i = min(max(i, 0), grid.counts[axis] - 1)
        cell.append(i)
    return grid.index_of_cell((cell[0], cell[1], cell[2]))


def center_of(grid: ClusterGrid, index: int) -> np.ndarray:
    """Centroid of the cluster box."""
    cell = grid.cell_of_index(index)
    return (np.asarray(cell, dtype=float) + 0.5) * grid.cluster_dim


def vertexes_of(grid: ClusterGrid, index: int) -> np.ndarray:
    """The 8 corners of the cluster box, (8, 3), x-fastest bit order."""
    cell = np.asarray(grid.cell_of_index(index), dtype=float)
    corners = np.array([
        [bx, by, bz] for bz in (0, 1) for by in (0, 1) for bx in (0, 1)
    ], dtype=float)
    return (cell + corners) * grid.cluster_dim


@dataclass(frozen=True)
class Doa:
    """Direction of arrival: elevation/azimuth in degrees plus range in meters.

    Elevation is measured from the xy-plane toward +z, in [-90, +90].
    Azimuth is measured from +x toward +y and normalized into (-180, +180].
    """

    elevation_deg: float
    azimuth_deg: float
    range_m: float = field(default=0.0)

    def __post_init__(self):
        if not (-90.0 <= self.elevation_deg <= 90.0):
            raise ValueError(f"elevation {self.elevation_deg} outside [-90, +90]")
        if self.range_m < 0:
            raise ValueError(f"range {self.range_m} must be >= 0")
        object.__setattr__(self, "azimuth_deg", wrap_azimuth_deg(self.azimuth_deg))


def wrap_azimuth_deg(a: float) -> float:
    """Wrap an angle in degrees into (-180, +180]."""
    r = math.fmod(a + 180.0, 360.0)
    if r <= 0.0:
        r += 360.0
    return r - 180.0


def cartesian_to_doa(p, center) -> Doa:
    """DOA of point p as seen from center. At the poles (|elevation| = 90)
    azimuth is undefined and reported as 0."""
    p = _as_vec3(p, "p")
    c = _as_vec3(center, "center")
    v = p - c
    r = float(np.linalg.norm(v))
    if r == 0.0:
        raise ValueError("DOA undefined: point coincides with the reference center")
    elevation = math.degrees(math.asin(max(-1.0, min(1.0, v[2] / r))))
    if v[0] == 0.0 and v[1] == 0.0:
        azimuth = 0.0
    else:
        azimuth = math.degrees(math.atan2(v[1], v[0]))
    return Doa(elevation, azimuth, r)


def doa_to_cartesian(d: Doa, center) -> np.ndarray:
    """Point at the given direction and range from center."""
    c = _as_vec3(center, "center")
    el = math.radians(d.elevation_deg)
    az = math.radians(d.azimuth_deg)
    return c + d.range_m * np.array([
        math.cos(el) * math.cos(az),
        math.cos(el) * math.sin(az),
        math.sin(el),
    ])


def sphere_grid(
    room: RoomSpec,
    radii,
    n_azimuth: int,
    azimuth_span: tuple[float, float],
    n_elevation: int,
    elevation_span: tuple[float, float],
    center=None,
) -> np.ndarray:
    """Spherical measurement grid: evenly spaced azimuths and elevations on
    one or more spheres around `center` (room center by default).

    Returns (len(radii) * n_azimuth * n_elevation, 3) points ordered radius-
    major, then azimuth, then elevation. Errors if any point falls outside
    the room.
    """
    c = room.center if center is None else _as_vec3(center, "center")
    radii = [float(r) for r in radii]
    if not radii or any(r <= 0 for r in radii):
        raise ValueError("radii must be a non-empty list of positive values")
    if n_azimuth < 1 or n_elevation < 1:
        raise ValueError("n_azimuth and n_elevation must be >= 1")
    azimuths = np.linspace(azimuth_span[0], azimuth_span[1], n_azimuth)
    elevations = np.linspace(elevation_span[0], elevation_span[1], n_elevation)
    points = []
    for r in radii:
        for az in azimuths:
            for el in elevations:
                p = doa_to_cartesian(Doa(float(el), float(az), r), c)
                if not room.contains(p):
                    raise ValueError(
                        f"test point {p} (radius {r}, azimuth {az:.6g}, "
                        f"elevation {el:.6g}) is outside the room {room.dims}"
                    )
                points.append(p)
    return np.array(points)
