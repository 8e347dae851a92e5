"""Triangle-mesh ingestion, normalization, and surface sampling."""

import os
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import BadCount, DegenerateExtent, EmptyCloud, EmptyMesh, ParseError

_DEGENERATE_AREA = 1e-14


class TriMesh:
    """Indexed triangle surface.

    Vertices and faces are immutable after construction (the arrays are set
    read-only). ``dropped_faces`` records degenerate faces removed at load.
    """

    def __init__(self, vertices, faces, face_tags=None, dropped_faces=0):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size and self.faces.max(initial=-1) >= len(self.vertices):
            raise ParseError("face index out of range")
        if self.faces.size and self.faces.min(initial=0) < 0:
            raise ParseError("negative face index")
        self.face_tags = None if face_tags is None else np.asarray(face_tags, dtype=np.int64)
        self.dropped_faces = int(dropped_faces)
        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def triangles(self):
        """(n_faces, 3, 3) corner positions."""
        return self.vertices[self.faces]

    def face_areas(self):
        t = self.triangles()
        cr = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
        return 0.5 * np.linalg.norm(cr, axis=1)

    def face_normals(self):
        t = self.triangles()
        cr = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
        n = np.linalg.norm(cr, axis=1, keepdims=True)
        return cr / np.maximum(n, 1e-300)

    def area(self):
        return float(self.face_areas().sum())

    def bounds(self):
        """(min, max) corner of the axis-aligned bounding box."""
        if self.n_vertices == 0:
            raise EmptyMesh("mesh has no vertices")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


@dataclass
class PointCloud:
    points: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64).reshape(-1, 3)
        if self.normals is not None:
            self.normals = np.ascontiguousarray(self.normals, dtype=np.float64).reshape(-1, 3)

    def __len__(self):
        return len(self.points)


@dataclass
class ScaleTranslate:
    """Affine map x -> scale * x + offset."""

    scale: float
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def apply(self, pts):
        return np.asarray(pts, dtype=np.float64) * self.scale + self.offset

    def inverse(self):
        return ScaleTranslate(1.0 / self.scale, -np.asarray(self.offset) / self.scale)


def _drop_degenerate(vertices, faces, tags=None):
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    keep = (
        (faces[:, 0] != faces[:, 1])
        & (faces[:, 1] != faces[:, 2])
        & (faces[:, 0] != faces[:, 2])
    )
    if keep.any():
        t = np.asarray(vertices)[faces]
        cr = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
        keep &= np.linalg.norm(cr, axis=1) > _DEGENERATE_AREA
    dropped = int(len(faces) - keep.sum())
    if tags is not None:
        tags = np.asarray(tags)[keep]
    return faces[keep], tags, dropped


def _parse_obj(text, path):
    vertices = []
    faces = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "v":
            if len(parts) < 4:
                raise ParseError(f"{path}:{ln}: vertex needs 3 coordinates")
            try:
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError as exc:
                raise ParseError(f"{path}:{ln}: {exc}") from None
        elif parts[0] == "f":
            if len(parts) < 4:
                raise ParseError(f"{path}:{ln}: face needs at least 3 indices")
            try:
                idx = [int(tok.split("/")[0]) for tok in parts[1:]]
            except ValueError as exc:
                raise ParseError(f"{path}:{ln}: {exc}") from None
            if any(i <= 0 for i in idx):
                raise ParseError(f"{path}:{ln}: only positive 1-based indices supported")
            idx = [i - 1 for i in idx]
            for k in range(1, len(idx) - 1):  # fan-triangulate n-gons
                faces.append([idx[0], idx[k], idx[k + 1]])
        # vn/vt/usemtl/etc. ignored by design
    return np.array(vertices, dtype=np.float64).reshape(-1, 3), faces


def _parse_off(text, path):
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    if not lines or not lines[0].startswith("OFF"):
        raise ParseError(f"{path}: missing OFF header")
    # counts may share the header line ("OFF 8 12 6")
    rest = lines[0][3:].split()
    cursor = 1
    if rest:
        counts = rest
    else:
        if len(lines) < 2:
            raise ParseError(f"{path}: missing counts line")
        counts = lines[1].split()
        cursor = 2
    try:
        nv, nf = int(counts[0]), int(counts[1])
    except (ValueError, IndexError):
        raise ParseError(f"{path}: bad counts line") from None
    if len(lines) < cursor + nv + nf:
        raise ParseError(f"{path}: truncated ({len(lines)} lines, expected {cursor + nv + nf})")
    vertices = np.empty((nv, 3), dtype=np.float64)
    for i in range(nv):
        parts = lines[cursor + i].split()
        try:
            vertices[i] = [float(parts[0]), float(parts[1]), float(parts[2])]
        except (ValueError, IndexError) as exc:
            raise ParseError(f"{path}: vertex {i}: {exc}") from None
    faces = []
    for i in range(nf):
        parts = lines[cursor + nv + i].split()
        try:
            cnt = int(parts[0])
            idx = [int(p) for p in parts[1 : 1 + cnt]]
        except (ValueError, IndexError) as exc:
            raise ParseError(f"{path}: face {i}: {exc}") from None
        if len(idx) != cnt or cnt < 3:
            raise ParseError(f"{path}: face {i}: bad vertex count")
        for k in range(1, cnt - 1):
            faces.append([idx[0], idx[k], idx[k + 1]])
    return vertices, faces


def load_mesh(path, fmt=None) -> TriMesh:
    """Load an OBJ or OFF file; format inferred from the extension unless given.

    Degenerate faces (repeated indices or ~zero area) are dropped; the count
    lands in ``TriMesh.dropped_faces``.
    """
    if fmt is None:
        ext = os.path.splitext(path)[1].lower()
        fmt = {".obj": "obj", ".off": "off"}.get(ext)
        if fmt is None:
            raise ParseError(f"{path}: cannot infer format from extension {ext!r}")
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        text = fh.read()
    if fmt == "obj":
        vertices, faces = _parse_obj(text, path)
    elif fmt == "off":
        vertices, faces = _parse_off(text, path)
    else:
        raise ParseError(f"unknown mesh format {fmt!r}")
    faces_arr = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if faces_arr.size and faces_arr.max() >= len(vertices):
        raise ParseError(f"{path}: face index out of range")
    faces_arr, _, dropped = _drop_degenerate(vertices, faces_arr)
    if len(faces_arr) == 0:
        raise EmptyMesh(f"{path}: no valid faces after cleanup")
    return TriMesh(vertices, faces_arr, dropped_faces=dropped)


def save_obj(path, mesh: TriMesh) -> None:
    """Write an ASCII OBJ (v/f records only). Deterministic formatting."""
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def normalize_unit_cube(mesh: TriMesh):
    """Center the bounding box at the origin and scale the longest side to 1.

    Returns (normalized mesh, transform); the transform maps input to output
    coordinates. Scaling is isotropic so distances stay metric.
    """
    lo, hi = mesh.bounds()
    extent = hi - lo
    longest = float(extent.max())
    if longest <= 0:
        raise DegenerateExtent("bounding box has zero longest side")
    center = (lo + hi) / 2.0
    scale = 1.0 / longest
    transform = ScaleTranslate(scale, -center * scale)
    out = TriMesh(transform.apply(mesh.vertices), mesh.faces, face_tags=mesh.face_tags)
    return out, transform


def sample_surface(mesh: TriMesh, n: int, seed: int = 0) -> PointCloud:
    """Draw n points area-uniformly from the surface.

    Face picked with probability proportional to area, position by uniform
    barycentric coordinates (square-root warp). Deterministic given seed.
    """
    if mesh.n_faces == 0:
        raise EmptyMesh("cannot sample an empty mesh")
    if n < 1:
        raise BadCount(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas()
    cum = np.cumsum(areas)
    face_idx = np.searchsorted(cum, rng.random(n) * cum[-1])
    face_idx = np.minimum(face_idx, mesh.n_faces - 1)
    tri = mesh.vertices[mesh.faces[face_idx]]
    r1 = np.sqrt(rng.random(n))[:, None]
    r2 = rng.random(n)[:, None]
    pts = (1.0 - r1) * tri[:, 0] + r1 * (1.0 - r2) * tri[:, 1] + r1 * r2 * tri[:, 2]
    return PointCloud(pts)


def farthest_point_sample(cloud: PointCloud, k: int) -> PointCloud:
    """Greedy farthest point subsampling, seeded at index 0.

    Output order is the selection order.
    """
    n = len(cloud)
    if n == 0:
        raise EmptyCloud("empty input cloud")
    if not 1 <= k <= n:
        raise BadCount(f"k must be in [1, {n}], got {k}")
    idx = _kernels.fps(cloud.points, k)
    return PointCloud(cloud.points[idx])


def fps_indices(points, k):
    """Index variant of farthest_point_sample for callers that keep their own arrays."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    if len(points) == 0:
        raise EmptyCloud("empty input cloud")
    if not 1 <= k <= len(points):
        raise BadCount(f"k must be in [1, {len(points)}], got {k}")
    return _kernels.fps(points, k)


def is_watertight(mesh: TriMesh) -> bool:
    """True when every edge is shared by exactly two faces in opposite order."""
    if mesh.n_faces == 0:
        return False
    f = mesh.faces
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    # directed edge counts: closed orientable surface has each undirected
    # edge once in each direction
    key_dir = edges[:, 0] * mesh.n_vertices + edges[:, 1]
    key_rev = edges[:, 1] * mesh.n_vertices + edges[:, 0]
    uniq, cnt = np.unique(key_dir, return_counts=True)
    if (cnt != 1).any():
        return False
    return bool(np.array_equal(uniq, np.unique(key_rev)))
