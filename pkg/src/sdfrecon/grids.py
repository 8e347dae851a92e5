"""Dense voxel/scalar grids and the interpolation kernels that query them."""

from dataclasses import dataclass

import numpy as np

from . import lstg
from ._kernels import impl
from .errors import BadCount, DegenerateExtent, GridMismatch


@dataclass(frozen=True)
class Box3:
    """Axis-aligned box given by min/max corners."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if any(h <= l for l, h in zip(lo, hi)):
            raise DegenerateExtent(f"box has non-positive extent: lo={lo} hi={hi}")

    @property
    def size(self):
        return np.array(self.hi) - np.array(self.lo)

    def cell_size(self, resolution):
        return self.size / np.asarray(resolution, dtype=np.float64)

    def to_array(self):
        return np.array([self.lo, self.hi])

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=np.float64).reshape(2, 3)
        return cls(tuple(arr[0]), tuple(arr[1]))


UNIT_BOX = Box3((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5))


@dataclass
class VoxelGrid:
    """Cubic binary occupancy lattice."""

    resolution: int
    extent: Box3 = UNIT_BOX
    data: np.ndarray = None
    clamped_count: int = 0

    def __post_init__(self):
        m = int(self.resolution)
        if m < 2:
            raise BadCount(f"voxel resolution must be >= 2, got {m}")
        self.resolution = m
        if self.data is None:
            self.data = np.zeros((m, m, m), dtype=bool)
        else:
            self.data = np.ascontiguousarray(self.data).astype(bool)
            if self.data.shape != (m, m, m):
                raise GridMismatch(
                    f"occupancy data shape {self.data.shape} != {(m, m, m)}"
                )

    @property
    def count(self) -> int:
        return int(self.data.sum())

    def cell_size(self):
        return self.extent.cell_size((self.resolution,) * 3)

    def save(self, path):
        lstg.write(path, {
            "occupancy": self.data.astype(np.uint8),
            "extent": self.extent.to_array(),
        })

    @classmethod
    def load(cls, path):
        data = lstg.read(path)
        occ = np.asarray(data["occupancy"])
        return cls(occ.shape[0], Box3.from_array(data["extent"]), occ != 0)


@dataclass
class ScalarGrid:
    """Real-valued lattice, possibly anisotropic, with C channels.

    data has shape (nx, ny, nz, C); grid values live at cell centers.
    """

    data: np.ndarray
    extent: Box3 = UNIT_BOX

    def __post_init__(self):
        d = np.ascontiguousarray(self.data, dtype=np.float64)
        if d.ndim == 3:
            d = d[..., None]
        if d.ndim != 4:
            raise GridMismatch(f"scalar grid needs 3 or 4 dims, got shape {d.shape}")
        if not np.isfinite(d).all():
            raise GridMismatch("scalar grid contains non-finite values")
        self.data = d

    @property
    def resolution(self):
        return self.data.shape[:3]

    @property
    def channels(self) -> int:
        return self.data.shape[3]

    def cell_size(self):
        return self.extent.cell_size(self.resolution)

    def origin(self):
        """World position of the center of cell (0, 0, 0)."""
        return np.array(self.extent.lo) + 0.5 * self.cell_size()

    def sample(self, points):
        return trilinear_sample(self, points)

    def save(self, path):
        lstg.write(path, {"values": self.data, "extent": self.extent.to_array()})

    @classmethod
    def load(cls, path):
        data = lstg.read(path)
        return cls(np.asarray(data["values"], dtype=np.float64),
                   Box3.from_array(data["extent"]))


@dataclass
class FeatureMap2D:
    """Image-aligned feature plane, data shape (height, width, channels)."""

    data: np.ndarray

    def __post_init__(self):
        d = np.ascontiguousarray(self.data, dtype=np.float64)
        if d.ndim == 2:
            d = d[..., None]
        if d.ndim != 3:
            raise GridMismatch(f"feature map needs 2 or 3 dims, got shape {d.shape}")
        if not np.isfinite(d).all():
            raise GridMismatch("feature map contains non-finite values")
        self.data = d

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def sample(self, uv):
        return bilinear_sample(self, uv)


def voxelize_points(points, resolution=128, extent=UNIT_BOX) -> VoxelGrid:
    """Mark every cell containing at least one point.

    Cell index per axis is floor((p - lo) / cell); out-of-extent points clamp
    to the border cells and are tallied in clamped_count.
    """
    pts = getattr(points, "points", points)
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    grid = VoxelGrid(resolution, extent)
    if len(pts) == 0:
        return grid
    m = grid.resolution
    cell = grid.cell_size()
    raw = np.floor((pts - np.array(extent.lo)) / cell).astype(np.int64)
    clamped = (raw < 0) | (raw > m - 1)
    grid.clamped_count = int(clamped.any(axis=1).sum())
    idx = np.clip(raw, 0, m - 1)
    grid.data[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    return grid


def _as_batch(points):
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    return pts.reshape(-1, pts.shape[-1]), single


def trilinear_sample(grid: ScalarGrid, points):
    """8-corner blend with corners at cell centers; border replication outside.

    Returns (n, channels), or a flat (channels,) vector for a single point.
    """
    pts, single = _as_batch(points)
    out = impl.trilinear(grid.data, np.ascontiguousarray(pts),
                         grid.origin(), grid.cell_size())
    return out[0] if single else out


_NEIGHBOR_SIGNS = np.array(
    [
        [0, 0, 0],
        [1, 0, 0],
        [-1, 0, 0],
        [0, 1, 0],
        [0, -1, 0],
        [0, 0, 1],
        [0, 0, -1],
    ],
    dtype=np.float64,
)


def expand_query_neighbors(points, d):
    """The point itself plus axis offsets at distance d.

    Order is fixed: center, +x, -x, +y, -y, +z, -z. Returns (n, 7, 3) for a
    batch, (7, 3) for a single point.
    """
    if d <= 0:
        raise BadCount(f"neighbor offset must be > 0, got {d}")
    pts, single = _as_batch(points)
    out = pts[:, None, :] + d * _NEIGHBOR_SIGNS[None, :, :]
    return out[0] if single else out


def multiscale_features(pyramid, queries, d):
    """Per-query feature: all pyramid levels sampled at 7 neighbor points.

    Layout is neighbor-major: for each of the 7 points (center first) the
    level channels are concatenated in pyramid order, giving rows of length
    7 * sum(level channels).
    """
    if not pyramid:
        raise BadCount("feature pyramid is empty")
    ext0 = pyramid[0].extent
    for lvl in pyramid[1:]:
        if lvl.extent != ext0:
            raise GridMismatch("pyramid levels must share one extent")
    pts, single = _as_batch(queries)
    n = len(pts)
    expanded = expand_query_neighbors(pts, d).reshape(n * 7, 3)
    per_level = [lvl.sample(expanded).reshape(n, 7, lvl.channels) for lvl in pyramid]
    feats = np.concatenate(per_level, axis=2).reshape(n, -1)
    return feats[0] if single else feats


def bilinear_sample(fmap: FeatureMap2D, uv):
    """4-corner blend; uv in [0,1]^2 spans pixel centers first to last.

    uv = (u, v) with u along width and v along height; uv=(0,0) returns the
    first pixel exactly. Out-of-range coordinates clamp to the border.
    """
    pts, single = _as_batch(uv)
    h, w, _ = fmap.data.shape
    x = np.clip(pts[:, 0] * (w - 1), 0.0, w - 1.0)
    y = np.clip(pts[:, 1] * (h - 1), 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.int64), max(w - 2, 0))
    y0 = np.minimum(np.floor(y).astype(np.int64), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    c00 = fmap.data[y0, x0]
    c10 = fmap.data[y0, x1]
    c01 = fmap.data[y1, x0]
    c11 = fmap.data[y1, x1]
    top = c00 * (1 - fx) + c10 * fx
    bot = c01 * (1 - fx) + c11 * fx
    out = top * (1 - fy) + bot * fy
    return out[0] if single else out


def disentangle_queries(points):
    """Remap (a, b, c) to (2c, 2b, 2a) before sampling coarse feature volumes."""
    pts, single = _as_batch(points)
    out = 2.0 * pts[:, ::-1]
    return np.ascontiguousarray(out[0] if single else out)
