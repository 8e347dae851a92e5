"""Mesh I/O, normalization, sampling, and farthest-point selection."""

import numpy as np
import pytest

from sdfrecon.errors import BadCount, EmptyMesh, ParseError
from sdfrecon.mesh import (
    PointCloud,
    TriMesh,
    farthest_point_sample,
    fps_indices,
    is_watertight,
    load_mesh,
    normalize_unit_cube,
    sample_surface,
    save_obj,
)
from sdfrecon.shapes import box, icosphere, torus


class TestObjParsing:
    def test_vertices_and_faces(self, tmp_path):
        p = tmp_path / "t.obj"
        p.write_text(
            "# comment\n"
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\n"
            "f 1 2 3\nf 1/2/3 3//1 4/5\n"
        )
        m = load_mesh(p)
        assert m.n_vertices == 4
        assert m.n_faces == 2
        np.testing.assert_array_equal(m.faces[1], [0, 2, 3])

    def test_quad_fan_triangulation(self, tmp_path):
        p = tmp_path / "quad.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        m = load_mesh(p)
        assert m.n_faces == 2
        np.testing.assert_array_equal(m.faces, [[0, 1, 2], [0, 2, 3]])

    def test_degenerate_faces_dropped(self, tmp_path):
        p = tmp_path / "d.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\nf 1 1 2\nf 1 2 2\n")
        m = load_mesh(p)
        assert m.n_faces == 1
        assert m.dropped_faces == 2

    def test_bad_inputs(self, tmp_path):
        cases = {
            "short_vertex.obj": "v 1 2\n",
            "bad_float.obj": "v a b c\n",
            "short_face.obj": "v 0 0 0\nf 1 2\n",
            "negative_index.obj": "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -1 -2 -3\n",
            "out_of_range.obj": "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n",
        }
        for name, text in cases.items():
            p = tmp_path / name
            p.write_text(text)
            with pytest.raises(ParseError):
                load_mesh(p)

    def test_unknown_extension(self, tmp_path):
        p = tmp_path / "x.ply"
        p.write_text("")
        with pytest.raises(ParseError, match="cannot infer"):
            load_mesh(p)

    def test_no_valid_faces(self, tmp_path):
        p = tmp_path / "x.obj"
        p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 1 1\n")
        with pytest.raises(EmptyMesh):
            load_mesh(p)


class TestOffParsing:
    def test_counts_on_own_line(self, tmp_path):
        p = tmp_path / "t.off"
        p.write_text("OFF\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n4 0 1 2 3\n")
        m = load_mesh(p)
        assert m.n_vertices == 4
        # one triangle plus a fan-split quad
        assert m.n_faces == 3

    def test_counts_on_header_line(self, tmp_path):
        p = tmp_path / "t.off"
        p.write_text("OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
        assert load_mesh(p).n_faces == 1

    def test_missing_header(self, tmp_path):
        p = tmp_path / "t.off"
        p.write_text("3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
        with pytest.raises(ParseError, match="OFF header"):
            load_mesh(p)

    def test_truncated(self, tmp_path):
        p = tmp_path / "t.off"
        p.write_text("OFF\n4 2 0\n0 0 0\n1 0 0\n")
        with pytest.raises(ParseError, match="truncated"):
            load_mesh(p)


class TestSaveObj:
    def test_round_trip(self, tmp_path, small_sphere):
        p = tmp_path / "s.obj"
        save_obj(p, small_sphere)
        back = load_mesh(p)
        assert back.n_faces == small_sphere.n_faces
        np.testing.assert_allclose(back.vertices, small_sphere.vertices, atol=1e-8)
        np.testing.assert_array_equal(back.faces, small_sphere.faces)

    def test_deterministic_bytes(self, tmp_path, small_torus):
        p1, p2 = tmp_path / "1.obj", tmp_path / "2.obj"
        save_obj(p1, small_torus)
        save_obj(p2, small_torus)
        assert p1.read_bytes() == p2.read_bytes()


class TestMeshGeometry:
    def test_cube_area_and_bounds(self, unit_cube):
        assert unit_cube.area() == pytest.approx(6.0)
        lo, hi = unit_cube.bounds()
        np.testing.assert_allclose(lo, [-0.5] * 3)
        np.testing.assert_allclose(hi, [0.5] * 3)

    def test_icosphere_area_approaches_sphere(self):
        # triangle area converges to 4*pi*r^2 from below
        r = 0.3
        a = icosphere(3, r).area()
        exact = 4.0 * np.pi * r * r
        assert 0.99 * exact < a < exact

    def test_face_normals_unit_and_outward(self, small_sphere):
        n = small_sphere.face_normals()
        np.testing.assert_allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-12)
        centroids = small_sphere.triangles().mean(axis=1)
        assert (np.einsum("ij,ij->i", n, centroids) > 0).all()

    def test_invalid_face_index_rejected(self):
        with pytest.raises(ParseError):
            TriMesh(np.zeros((2, 3)), [[0, 1, 2]])
        with pytest.raises(ParseError):
            TriMesh(np.zeros((3, 3)), [[0, 1, -1]])

    def test_watertight(self, unit_cube, small_sphere):
        assert is_watertight(unit_cube)
        assert is_watertight(small_sphere)
        open_mesh = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
        assert not is_watertight(open_mesh)


class TestNormalize:
    def test_longest_side_becomes_one(self, rng):
        verts = rng.normal(size=(50, 3)) * np.array([3.0, 1.0, 0.5]) + 7.0
        faces = rng.integers(0, 50, (30, 3))
        keep = (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])
        m = TriMesh(verts, faces[keep])
        out, tf = normalize_unit_cube(m)
        lo, hi = out.bounds()
        np.testing.assert_allclose(lo + hi, 0.0, atol=1e-12)
        assert (hi - lo).max() == pytest.approx(1.0)
        np.testing.assert_allclose(tf.apply(m.vertices), out.vertices)
        np.testing.assert_allclose(tf.inverse().apply(out.vertices), m.vertices, atol=1e-9)

    def test_isotropic(self):
        # a 2x1x1 box must keep its aspect ratio
        m = box(1.0)
        stretched = TriMesh(m.vertices * np.array([2.0, 1.0, 1.0]), m.faces)
        out, _ = normalize_unit_cube(stretched)
        lo, hi = out.bounds()
        np.testing.assert_allclose(hi - lo, [1.0, 0.5, 0.5], atol=1e-12)


class TestSampling:
    def test_on_surface_and_deterministic(self, unit_cube):
        c1 = sample_surface(unit_cube, 500, seed=3)
        c2 = sample_surface(unit_cube, 500, seed=3)
        np.testing.assert_array_equal(c1.points, c2.points)
        # every cube-surface point has one coordinate at +-0.5
        at_face = np.isclose(np.abs(c1.points), 0.5, atol=1e-12).any(axis=1)
        assert at_face.all()
        assert np.abs(c1.points).max() <= 0.5 + 1e-12

    def test_area_weighting(self):
        # two triangles, area ratio 4:1; counts should follow
        verts = [[0, 0, 0], [2, 0, 0], [0, 2, 0], [10, 0, 0], [11, 0, 0], [10, 1, 0]]
        m = TriMesh(verts, [[0, 1, 2], [3, 4, 5]])
        pts = sample_surface(m, 20000, seed=0).points
        frac_big = (pts[:, 0] < 5).mean()
        assert abs(frac_big - 0.8) < 0.02

    def test_bad_counts(self, unit_cube):
        with pytest.raises(BadCount):
            sample_surface(unit_cube, 0)

    def test_seed_changes_points(self, small_sphere):
        a = sample_surface(small_sphere, 100, seed=1).points
        b = sample_surface(small_sphere, 100, seed=2).points
        assert not np.array_equal(a, b)


class TestFarthestPoint:
    def test_first_point_is_index_zero(self, rng):
        pts = rng.normal(size=(200, 3))
        idx = fps_indices(pts, 10)
        assert idx[0] == 0

    def test_selection_is_greedy(self, rng):
        # each selected point maximizes distance to the chosen set
        pts = rng.normal(size=(80, 3))
        idx = fps_indices(pts, 12)
        chosen = []
        d = np.full(len(pts), np.inf)
        for step, picked in enumerate(idx):
            if step == 0:
                assert picked == 0
            else:
                assert d[picked] == pytest.approx(d.max())
            chosen.append(picked)
            d = np.minimum(d, np.linalg.norm(pts - pts[picked], axis=1))
        assert len(set(chosen)) == len(chosen)

    def test_k_equals_n(self, rng):
        pts = rng.normal(size=(15, 3))
        idx = fps_indices(pts, 15)
        assert sorted(idx) == list(range(15))

    def test_cloud_wrapper(self, rng):
        cloud = PointCloud(rng.normal(size=(40, 3)))
        sub = farthest_point_sample(cloud, 5)
        assert len(sub) == 5
        with pytest.raises(BadCount):
            farthest_point_sample(cloud, 0)
        with pytest.raises(BadCount):
            farthest_point_sample(cloud, 41)

    def test_spread_beats_random(self, rng):
        # minimum pairwise distance of a farthest-point subset should beat
        # a random subset by a wide margin on a dense cloud
        pts = rng.uniform(size=(1000, 3))
        sel = pts[fps_indices(pts, 20)]
        rnd = pts[rng.choice(1000, 20, replace=False)]

        def min_pair(x):
            d = np.linalg.norm(x[:, None] - x[None], axis=2)
            return d[np.triu_indices(len(x), 1)].min()

        assert min_pair(sel) > min_pair(rnd)


def test_torus_is_watertight():
    assert is_watertight(torus(0.3, 0.1, 16, 8))
