"""Axis-aligned bounding-box tree over triangles.

One intersection engine with two consumers: signed-distance sign tests and
occlusion ray casting. Construction is median-split on the widest centroid
axis with leaves of at most LEAF_SIZE triangles; queries run on flat arrays
so both kernel backends can traverse the same structure.
"""

import numpy as np

from . import _kernels
from .errors import EmptyMesh

LEAF_SIZE = 4


def _c3(a):
    """Writable C-contiguous (n, 3) float64 view or copy.

    Broadcast inputs can be flagged contiguous yet read-only; the compiled
    kernels take writable memoryviews, so force a copy in that case.
    """
    a = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 3)
    if not a.flags.writeable:
        a = a.copy()
    return a


class Bvh:
    """Flat BVH. Nodes are stored as:

    bounds     (n_nodes, 6)  box min, box max
    left_first (n_nodes,)    internal: left child (right child = left + 1);
                             leaf: first index into the prim ordering
    count      (n_nodes,)    0 for internal nodes, prim count for leaves
    prim_face  (n_prims,)    BVH prim order -> original face index
    """

    def __init__(self, mesh):
        if mesh.n_faces == 0:
            raise EmptyMesh("cannot build a BVH over zero faces")
        tri = mesh.triangles()
        tri_min = tri.min(axis=1)
        tri_max = tri.max(axis=1)
        centroids = tri.mean(axis=1)
        n = len(tri)

        max_nodes = 2 * n
        self.bounds = np.empty((max_nodes, 6), dtype=np.float64)
        self.left_first = np.empty(max_nodes, dtype=np.int32)
        self.count = np.empty(max_nodes, dtype=np.int32)
        order = np.arange(n, dtype=np.int64)
        n_nodes = 0

        # iterative build; stack holds (node_index, start, end)
        stack = []

        def alloc():
            nonlocal n_nodes
            i = n_nodes
            n_nodes += 1
            return i

        root = alloc()
        stack.append((root, 0, n))
        while stack:
            node, start, end = stack.pop()
            sel = order[start:end]
            lo = tri_min[sel].min(axis=0)
            hi = tri_max[sel].max(axis=0)
            self.bounds[node, :3] = lo
            self.bounds[node, 3:] = hi
            if end - start <= LEAF_SIZE:
                self.left_first[node] = start
                self.count[node] = end - start
                continue
            axis = int(np.argmax(hi - lo))
            key = centroids[sel, axis]
            mid = (end - start) // 2
            part = np.argpartition(key, mid)
            order[start:end] = sel[part]
            left = alloc()
            right = alloc()
            assert right == left + 1
            self.left_first[node] = left
            self.count[node] = 0
            # push right first so the left child is processed next (cache locality)
            stack.append((right, start + mid, end))
            stack.append((left, start, start + mid))

        self.bounds = np.ascontiguousarray(self.bounds[:n_nodes])
        self.left_first = np.ascontiguousarray(self.left_first[:n_nodes])
        self.count = np.ascontiguousarray(self.count[:n_nodes])
        self.prim_face = np.ascontiguousarray(order, dtype=np.int64)

        tri_perm = tri[order]
        self.v0 = np.ascontiguousarray(tri_perm[:, 0])
        self.e1 = np.ascontiguousarray(tri_perm[:, 1] - tri_perm[:, 0])
        self.e2 = np.ascontiguousarray(tri_perm[:, 2] - tri_perm[:, 0])
        self.n_prims = n

    def ray_closest(self, origins, dirs, t_max=np.inf):
        """Closest hit along each ray. Returns (t, face) with face == -1 on miss."""
        origins = _c3(origins)
        dirs = _c3(dirs)
        t, prim = _kernels.ray_closest(
            origins, dirs, self.v0, self.e1, self.e2,
            self.bounds, self.left_first, self.count, t_max,
        )
        face = np.where(prim >= 0, self.prim_face[np.maximum(prim, 0)], -1)
        return t, face

    def ray_parity(self, origins, dirs):
        """Crossing counts plus a per-ray suspect flag for grazing hits."""
        origins = _c3(origins)
        dirs = _c3(dirs)
        return _kernels.ray_parity(
            origins, dirs, self.v0, self.e1, self.e2,
            self.bounds, self.left_first, self.count,
        )

    def closest_point(self, points):
        """Nearest surface point per query. Returns (distance, face, point)."""
        points = _c3(points)
        d2, prim, q = _kernels.closest_point(
            points, self.v0, self.e1, self.e2,
            self.bounds, self.left_first, self.count,
        )
        face = np.where(prim >= 0, self.prim_face[np.maximum(prim, 0)], -1)
        return np.sqrt(d2), face, q


def build_bvh(mesh) -> Bvh:
    return Bvh(mesh)
