"""Ground-truth signed distances and the query-point generation schedule."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import lstg
from ._kernels import numpy_impl
from .bvh import Bvh
from .errors import EmptyMesh, NondeterministicSign, NumericError
from .mesh import TriMesh
from .parallel import run_chunked

DEFAULT_SDF_SCALE = 10.0
DEFAULT_SCHEDULE = ((0.45, 0.003), (0.44, 0.01), (0.10, 0.07))

# primary parity direction plus deterministic retry directions, all away from
# low-order rational slopes so axis-aligned geometry is never hit edge-on
_PARITY_DIRS = np.array(
    [
        [0.2986512, 0.7723878, 0.5610575],
        [-0.6412786, 0.4483175, 0.6227681],
        [0.5317243, -0.3412879, 0.7751162],
        [0.8012345, 0.2471234, -0.5448812],
        [-0.3321417, -0.8214563, 0.4632198],
        [0.1123456, 0.6054321, -0.7879123],
        [-0.7245613, -0.1312748, -0.6765432],
        [0.4598712, -0.7521634, -0.4721568],
        [-0.2098765, 0.5134567, 0.8321456],
    ]
)
_PARITY_DIRS = _PARITY_DIRS / np.linalg.norm(_PARITY_DIRS, axis=1, keepdims=True)
MAX_SIGN_RETRIES = 8


@dataclass
class QuerySet:
    """Query points with ground-truth signed distances.

    ``sdf`` holds the stored (scaled) values; divide by ``scale_applied`` for
    raw metric distances. Negative means inside.
    """

    points: np.ndarray
    sdf: np.ndarray
    scale_applied: float = DEFAULT_SDF_SCALE
    band_sizes: tuple = ()

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.sdf = np.ascontiguousarray(self.sdf, dtype=np.float64).reshape(-1)
        if len(self.points) != len(self.sdf):
            raise NumericError("points and sdf lengths differ")

    def __len__(self):
        return len(self.points)

    def save(self, path):
        lstg.write(path, {
            "points": self.points,
            "sdf": self.sdf,
            "sdf_scale": np.array([self.scale_applied]),
        })

    @classmethod
    def load(cls, path):
        data = lstg.read(path)
        scale = float(data["sdf_scale"][0]) if "sdf_scale" in data else DEFAULT_SDF_SCALE
        return cls(np.asarray(data["points"], dtype=np.float64),
                   np.asarray(data["sdf"], dtype=np.float64), scale)


@dataclass
class QuerySamplingConfig:
    n_total: int = 50000
    schedule: tuple = DEFAULT_SCHEDULE
    max_band: float | None = None
    seed: int = 0
    fill_uniform: bool = True  # spend the schedule remainder on uniform cube samples
    sdf_scale: float = DEFAULT_SDF_SCALE

    def band_counts(self):
        fracs = [f for f, _ in self.schedule]
        if any(f < 0 for f in fracs) or sum(fracs) > 1.0 + 1e-12:
            raise NumericError("schedule fractions must be >= 0 and sum <= 1")
        if any(rho <= 0 for _, rho in self.schedule):
            raise NumericError("schedule sigmas must be > 0")
        counts = [int(round(f * self.n_total)) for f in fracs]
        rest = self.n_total - sum(counts)
        if rest < 0:
            raise NumericError("rounded schedule exceeds n_total")
        return counts, (rest if self.fill_uniform else 0)


def _naive_distance(points, tri):
    """Brute-force all-triangle closest distance (reference path)."""
    a = tri[:, 0]
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    best = np.full(len(points), np.inf)
    for t in range(len(tri)):
        q = numpy_impl._closest_on_tri(points, a[t], e1[t], e2[t])
        diff = points - q
        d2 = diff[:, 0] ** 2 + diff[:, 1] ** 2 + diff[:, 2] ** 2
        np.minimum(best, d2, out=best)
    return np.sqrt(best)


def _naive_parity(points, tri, direction):
    """Brute-force crossing counts for one shared ray direction."""
    a = tri[:, 0]
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    d = np.broadcast_to(direction, points.shape)
    crossings = np.zeros(len(points), dtype=np.int64)
    suspect = np.zeros(len(points), dtype=bool)
    for t in range(len(tri)):
        tt, u, v, det = numpy_impl._moller_trumbore(points, d, a[t], e1[t], e2[t])
        nrm = np.cross(e1[t], e2[t])
        nlen = np.linalg.norm(nrm)
        near_plane = np.abs(det) <= 1e-12 * nlen
        inside = (
            ~near_plane & (u >= -1e-9) & (v >= -1e-9) & (u + v <= 1.0 + 1e-9) & (tt > 1e-9)
        )
        crossings[inside] += 1
        margin = np.minimum(np.minimum(u, v), 1.0 - u - v)
        suspect |= inside & (margin < 1e-9)
        suspect |= near_plane & (np.abs((points - a[t]) @ nrm) < 1e-9 * nlen)
    return crossings, suspect


def _signs(points, mesh, bvh, naive):
    """-1 inside / +1 outside by single-ray parity with perturbation retries."""
    n = len(points)
    signs = np.empty(n)
    pending = np.arange(n)
    tri = mesh.triangles() if naive else None
    for attempt in range(MAX_SIGN_RETRIES + 1):
        direction = _PARITY_DIRS[attempt]
        if naive:
            crossings, suspect = _naive_parity(points[pending], tri, direction)
        else:
            dirs = np.broadcast_to(direction, (len(pending), 3))
            crossings, suspect = bvh.ray_parity(points[pending], dirs)
        ok = ~suspect
        signs[pending[ok]] = np.where(crossings[ok] % 2 == 1, -1.0, 1.0)
        pending = pending[~ok]
        if len(pending) == 0:
            return signs
        warnings.warn(
            f"parity ray grazed an edge/vertex for {len(pending)} point(s); "
            f"re-casting with perturbed direction (attempt {attempt + 1})"
        )
    raise NondeterministicSign(
        f"sign undetermined for {len(pending)} point(s) after {MAX_SIGN_RETRIES} retries"
    )


def signed_distances(mesh: TriMesh, points, accel="bvh", bvh=None, threads=1):
    """Signed Euclidean distance to the surface for a batch of points.

    accel='bvh' uses the shared tree for both distance and parity; 'naive'
    scans every triangle (the reference path). Negative inside.
    """
    if mesh.n_faces == 0:
        raise EmptyMesh("signed distance needs a non-empty mesh")
    points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(points)
    if accel == "naive":
        dist = _naive_distance(points, mesh.triangles())
        signs = _signs(points, mesh, None, naive=True)
        return dist * signs
    if accel != "bvh":
        raise ValueError(f"unknown accel {accel!r}")
    if bvh is None:
        bvh = Bvh(mesh)
    dist = np.empty(n)
    signs = np.empty(n)

    def work(s, e):
        d, _, _ = bvh.closest_point(points[s:e])
        dist[s:e] = d
        signs[s:e] = _signs(points[s:e], mesh, bvh, naive=False)

    run_chunked(work, n, threads=threads, chunk=65536)
    return dist * signs


def signed_distance(mesh: TriMesh, p, accel="bvh", bvh=None) -> float:
    return float(signed_distances(mesh, np.asarray(p, dtype=np.float64).reshape(1, 3),
                                  accel=accel, bvh=bvh)[0])


def generate_query_set(mesh: TriMesh, cfg: QuerySamplingConfig = None,
                       threads=1) -> QuerySet:
    """Surface samples displaced by per-band Gaussian noise, labeled with
    scaled signed distances.

    Band counts are computed (not stochastic): round(fraction * n_total) per
    band, remainder as uniform cube samples when fill_uniform is set. Points
    stay grouped by band in the output; ``band_sizes`` records the layout
    (one entry per schedule band, plus the uniform tail when present).
    """
    cfg = cfg or QuerySamplingConfig()
    rng = np.random.default_rng(cfg.seed)
    counts, uniform_count = cfg.band_counts()
    bvh = Bvh(mesh)

    chunks = []
    band_sizes = []
    for (_, rho), count in zip(cfg.schedule, counts):
        band_sizes.append(count)
        if count == 0:
            chunks.append(np.empty((0, 3)))
            continue
        pts = _band_points(mesh, bvh, count, rho, cfg.max_band, rng, threads)
        chunks.append(pts)
    if uniform_count:
        band_sizes.append(uniform_count)
        chunks.append(rng.uniform(-0.5, 0.5, size=(uniform_count, 3)))
    points = np.concatenate(chunks, axis=0) if chunks else np.empty((0, 3))
    raw = signed_distances(mesh, points, accel="bvh", bvh=bvh, threads=threads)
    return QuerySet(points, raw * cfg.sdf_scale, cfg.sdf_scale, tuple(band_sizes))


def _band_points(mesh, bvh, count, rho, max_band, rng, threads):
    surface = _sample_surface_rng(mesh, count, rng)
    pts = surface + rng.normal(0.0, rho, size=(count, 3))
    if max_band is None:
        return pts
    for _ in range(1000):
        raw = signed_distances(mesh, pts, accel="bvh", bvh=bvh, threads=threads)
        bad = np.abs(raw) > max_band
        n_bad = int(bad.sum())
        if n_bad == 0:
            return pts
        redo = _sample_surface_rng(mesh, n_bad, rng)
        pts[bad] = redo + rng.normal(0.0, rho, size=(n_bad, 3))
    raise NumericError(f"band filter |sdf| <= {max_band} did not converge")


def _sample_surface_rng(mesh, n, rng):
    areas = mesh.face_areas()
    cum = np.cumsum(areas)
    face_idx = np.searchsorted(cum, rng.random(n) * cum[-1])
    face_idx = np.minimum(face_idx, mesh.n_faces - 1)
    tri = mesh.vertices[mesh.faces[face_idx]]
    r1 = np.sqrt(rng.random(n))[:, None]
    r2 = rng.random(n)[:, None]
    return (1.0 - r1) * tri[:, 0] + r1 * (1.0 - r2) * tri[:, 1] + r1 * r2 * tri[:, 2]
