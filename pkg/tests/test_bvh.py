"""Bounding-volume-hierarchy queries checked against per-triangle scans."""

import numpy as np
import pytest

from sdfrecon.bvh import Bvh, build_bvh
from sdfrecon.shapes import icosphere


def _naive_ray_closest(mesh, origins, dirs, t_max=np.inf):
    """Every-triangle scan of the closest hit (no acceleration)."""
    tri = mesh.triangles()
    a = tri[:, 0]
    e1 = tri[:, 1] - a
    e2 = tri[:, 2] - a
    t_best = np.full(len(origins), np.inf)
    f_best = np.full(len(origins), -1, dtype=np.int64)
    for i, (o, d) in enumerate(zip(origins, dirs)):
        pvec = np.cross(d, e2)
        det = np.einsum("ij,ij->i", e1, pvec)
        ok = np.abs(det) > 1e-12
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tvec = o - a
        u = np.einsum("ij,ij->i", tvec, pvec) * inv
        qvec = np.cross(tvec, e1)
        v = np.dot(qvec, d) * inv
        t = np.einsum("ij,ij->i", e2, qvec) * inv
        hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 1e-12) & (t <= t_max)
        if hit.any():
            j = np.where(hit)[0][np.argmin(t[hit])]
            t_best[i] = t[j]
            f_best[i] = j
    return t_best, f_best


def _naive_closest_distance(mesh, points):
    tri = mesh.triangles()
    out = np.empty(len(points))
    for i, p in enumerate(points):
        best = np.inf
        for a, b, c in tri:
            best = min(best, _point_tri_dist(p, a, b, c))
        out[i] = best
    return out


def _point_tri_dist(p, a, b, c):
    # project on the plane, then clamp to the triangle via barycentrics
    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = ab @ ap, ac @ ap
    if d1 <= 0 and d2 <= 0:
        return np.linalg.norm(ap)
    bp = p - b
    d3, d4 = ab @ bp, ac @ bp
    if d3 >= 0 and d4 <= d3:
        return np.linalg.norm(bp)
    cp = p - c
    d5, d6 = ab @ cp, ac @ cp
    if d6 >= 0 and d5 <= d6:
        return np.linalg.norm(cp)
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        v = d1 / (d1 - d3)
        return np.linalg.norm(ap - v * ab)
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        w = d2 / (d2 - d6)
        return np.linalg.norm(ap - w * ac)
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return np.linalg.norm(p - (b + w * (c - b)))
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return np.linalg.norm(p - (a + ab * v + ac * w))


class TestRayClosest:
    @pytest.mark.parametrize("mesh_name", ["unit_cube", "small_sphere", "small_torus"])
    def test_matches_naive(self, mesh_name, request, rng):
        mesh = request.getfixturevalue(mesh_name)
        bvh = build_bvh(mesh)
        origins = rng.normal(0, 1.0, (200, 3))
        dirs = rng.normal(size=(200, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        t, face = bvh.ray_closest(origins, dirs)
        t_ref, f_ref = _naive_ray_closest(mesh, origins, dirs)
        hit = f_ref >= 0
        assert ((face >= 0) == hit).all()
        np.testing.assert_allclose(t[hit], t_ref[hit], atol=1e-10)

    def test_t_max_cuts_hits(self, small_sphere):
        bvh = build_bvh(small_sphere)
        o = np.array([[2.0, 0.0, 0.0]])
        d = np.array([[-1.0, 0.0, 0.0]])
        t, face = bvh.ray_closest(o, d)
        assert face[0] >= 0 and 1.6 < t[0] < 1.8
        t2, face2 = bvh.ray_closest(o, d, t_max=1.0)
        # miss leaves t at its cap; only the face id signals the miss
        assert face2[0] == -1 and t2[0] >= 1.0

    def test_miss(self, unit_cube):
        bvh = build_bvh(unit_cube)
        t, face = bvh.ray_closest(np.array([[3.0, 3.0, 3.0]]), np.array([[1.0, 0.0, 0.0]]))
        assert face[0] == -1

    def test_broadcast_single_ray(self, unit_cube):
        # read-only broadcast views must be accepted
        bvh = build_bvh(unit_cube)
        d = np.broadcast_to(np.array([0.0, 0.0, 1.0]), (4, 3))
        o = np.broadcast_to(np.array([0.1, 0.1, -5.0]), (4, 3))
        t, face = bvh.ray_closest(o, d)
        assert (face >= 0).all()
        np.testing.assert_allclose(t, 4.5, atol=1e-12)


class TestRayParity:
    def test_inside_outside_counts(self, small_sphere, rng):
        bvh = build_bvh(small_sphere)
        inside = rng.normal(size=(100, 3))
        inside = 0.2 * inside / np.linalg.norm(inside, axis=1, keepdims=True)
        outside = inside * 4.0
        d = np.broadcast_to(np.array([0.577, 0.577, 0.578]) / np.linalg.norm([0.577, 0.577, 0.578]), (100, 3))
        cross_in, sus_in = bvh.ray_parity(inside, d)
        cross_out, sus_out = bvh.ray_parity(outside, d)
        ok_in = ~sus_in.astype(bool)
        ok_out = ~sus_out.astype(bool)
        assert (cross_in[ok_in] % 2 == 1).all()
        assert (cross_out[ok_out] % 2 == 0).all()

    def test_cube_axis_ray(self, unit_cube):
        bvh = build_bvh(unit_cube)
        c, s = bvh.ray_parity(np.array([[0.1, 0.07, 0.03]]), np.array([[0.0, 0.0, 1.0]]))
        assert not s[0]
        assert c[0] == 1


class TestClosestPoint:
    @pytest.mark.parametrize("mesh_name", ["unit_cube", "small_sphere", "small_torus"])
    def test_distance_matches_naive(self, mesh_name, request, rng):
        mesh = request.getfixturevalue(mesh_name)
        bvh = build_bvh(mesh)
        pts = rng.uniform(-0.8, 0.8, (150, 3))
        d, face, q = bvh.closest_point(pts)
        d_ref = _naive_closest_distance(mesh, pts)
        np.testing.assert_allclose(d, d_ref, atol=1e-10)
        # the returned point must realize the distance and lie on its face
        np.testing.assert_allclose(np.linalg.norm(pts - q, axis=1), d, atol=1e-10)
        tri = mesh.triangles()[face]
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        plane = np.abs(np.einsum("ij,ij->i", q - tri[:, 0], n))
        assert plane.max() < 1e-9

    def test_sphere_distance_analytic(self, rng):
        mesh = icosphere(4, 0.3)
        bvh = build_bvh(mesh)
        pts = rng.normal(size=(100, 3))
        pts = pts / np.linalg.norm(pts, axis=1, keepdims=True) * rng.uniform(0.05, 0.7, (100, 1))
        d, _, _ = bvh.closest_point(pts)
        d_exact = np.abs(np.linalg.norm(pts, axis=1) - 0.3)
        # icosphere(4) deviates from the sphere by < 1e-3
        np.testing.assert_allclose(d, d_exact, atol=2e-3)


class TestConstruction:
    def test_single_triangle(self):
        from sdfrecon.mesh import TriMesh

        m = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
        bvh = Bvh(m)
        d, face, _ = bvh.closest_point(np.array([[0.2, 0.2, 1.0]]))
        assert face[0] == 0
        assert d[0] == pytest.approx(1.0)

    def test_face_ids_map_back(self, small_torus, rng):
        # reported face ids index the original face array
        bvh = build_bvh(small_torus)
        pts = rng.normal(0, 0.4, (50, 3))
        d, face, q = bvh.closest_point(pts)
        tri = small_torus.triangles()[face]
        for i in range(len(pts)):
            a, b, c = tri[i]
            assert _point_tri_dist(pts[i], a, b, c) == pytest.approx(d[i], abs=1e-9)
