import numpy as np
import pytest

from esikit.errors import FormatError, LimitError, ParseError, ShapeError, TopologyError
from esikit.mesh import (
    TriMesh,
    geodesic_distances,
    load_hemisphere_labels,
    load_mesh,
    make_icosphere,
    merge_meshes,
    save_mesh,
)

TETRA_OFF = """OFF
4 4 6
0 0 0
1 0 0
0 1 0
0 0 1
3 0 2 1
3 0 1 3
3 0 3 2
3 1 2 3
"""

# icosahedron circumradius-1 edge length
ICO_EDGE = 4.0 / np.sqrt(10.0 + 2.0 * np.sqrt(5.0))


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestOffParsing:
    def test_tetrahedron(self, tmp_path):
        mesh = load_mesh(write(tmp_path, "t.off", TETRA_OFF))
        assert mesh.n_vertices == 4
        assert mesh.n_faces == 4
        assert mesh.euler_characteristic() == 2

    def test_comments_and_blanks_ignored(self, tmp_path):
        noisy = "# header comment\nOFF\n\n4 4 0  # counts\n" + "\n".join(
            TETRA_OFF.splitlines()[2:]
        )
        mesh = load_mesh(write(tmp_path, "t.off", noisy))
        assert mesh.n_vertices == 4

    def test_out_of_range_face_index(self, tmp_path):
        bad = TETRA_OFF.replace("3 1 2 3", "3 1 2 7")
        with pytest.raises(TopologyError):
            load_mesh(write(tmp_path, "t.off", bad))

    def test_missing_header(self, tmp_path):
        with pytest.raises(ParseError):
            load_mesh(write(tmp_path, "t.off", "FFO\n4 4 0\n"))

    def test_malformed_vertex_reports_line(self, tmp_path):
        bad = TETRA_OFF.replace("1 0 0", "1 zero 0")
        with pytest.raises(ParseError) as err:
            load_mesh(write(tmp_path, "t.off", bad))
        assert err.value.line == 4

    def test_non_triangle_face(self, tmp_path):
        bad = TETRA_OFF.replace("3 1 2 3", "4 1 2 3 0")
        with pytest.raises(ParseError):
            load_mesh(write(tmp_path, "t.off", bad))


class TestPlyParsing:
    def test_icosphere_roundtrip_euler(self, tmp_path):
        mesh = make_icosphere(3, 1.0)
        path = tmp_path / "s.ply"
        save_mesh(mesh, path)
        loaded = load_mesh(path)
        assert loaded.n_vertices == 642
        assert loaded.n_faces == 1280
        # independent edge count: E = V + F - 2 must match the unique-edge set
        assert loaded.n_edges == 1920
        assert loaded.euler_characteristic() == 2
        np.testing.assert_array_equal(loaded.vertices, mesh.vertices)
        np.testing.assert_array_equal(loaded.faces, mesh.faces)

    def test_binary_rejected(self, tmp_path):
        text = "ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n"
        with pytest.raises(FormatError):
            load_mesh(write(tmp_path, "b.ply", text))

    def test_extra_vertex_property_tolerated(self, tmp_path):
        text = (
            "ply\nformat ascii 1.0\n"
            "element vertex 3\n"
            "property float x\nproperty float y\nproperty float z\n"
            "property float confidence\n"
            "element face 1\nproperty list uchar int vertex_indices\n"
            "end_header\n"
            "0 0 0 0.9\n1 0 0 0.8\n0 1 0 0.7\n"
            "3 0 1 2\n"
        )
        mesh = load_mesh(write(tmp_path, "e.ply", text))
        assert mesh.n_vertices == 3
        np.testing.assert_array_equal(mesh.vertices[1], [1, 0, 0])

    def test_missing_xyz(self, tmp_path):
        text = (
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property float x\nproperty float y\n"
            "element face 0\nproperty list uchar int vertex_indices\nend_header\n0 0\n"
        )
        with pytest.raises(ParseError):
            load_mesh(write(tmp_path, "m.ply", text))


class TestOffRoundTrip:
    def test_bit_exact(self, tmp_path):
        mesh = make_icosphere(1, 73.25)
        path = tmp_path / "m.off"
        save_mesh(mesh, path)
        loaded = load_mesh(path)
        np.testing.assert_array_equal(loaded.vertices, mesh.vertices)
        np.testing.assert_array_equal(loaded.faces, mesh.faces)
        # second serialization is byte-identical
        again = tmp_path / "m2.off"
        save_mesh(loaded, again)
        assert path.read_bytes() == again.read_bytes()


class TestTopologyValidation:
    def test_repeated_vertex_in_face(self):
        with pytest.raises(TopologyError):
            TriMesh(np.eye(3), np.array([[0, 1, 1]]))

    def test_degenerate_area(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], dtype=float)
        with pytest.raises(TopologyError):
            TriMesh(verts, np.array([[0, 1, 2]]))

    def test_nonmanifold_edge(self):
        verts = np.array(
            [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]], dtype=float
        )
        faces = np.array([[0, 1, 2], [1, 0, 3], [0, 1, 4]])
        with pytest.raises(TopologyError):
            TriMesh(verts, faces)

    def test_inconsistent_orientation(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0]], dtype=float)
        faces = np.array([[0, 1, 2], [0, 1, 3]])  # edge (0,1) traversed twice same way
        with pytest.raises(TopologyError):
            TriMesh(verts, faces)


class TestIcosphere:
    def test_icosahedron_counts(self):
        mesh = make_icosphere(0, 1.0)
        assert mesh.n_vertices == 12
        assert mesh.n_faces == 20

    @pytest.mark.parametrize("k", [0, 1, 2, 3])
    def test_counts_formula_and_euler(self, k):
        mesh = make_icosphere(k, 1.0)
        assert mesh.n_vertices == 10 * 4**k + 2
        assert mesh.n_faces == 20 * 4**k
        assert mesh.euler_characteristic() == 2

    def test_radius_scaling(self):
        mesh = make_icosphere(1, 2.0)
        norms = np.linalg.norm(mesh.vertices, axis=1)
        np.testing.assert_allclose(norms, 2.0, rtol=1e-9)

    def test_subdivision_limit(self):
        with pytest.raises(LimitError):
            make_icosphere(8, 1.0)
        with pytest.raises(LimitError):
            make_icosphere(-1, 1.0)


class TestGeodesics:
    def test_self_distance_zero(self, icosahedron):
        assert geodesic_distances(icosahedron, 5)[5] == 0.0

    def test_adjacent_is_edge_length(self, icosahedron):
        d = geodesic_distances(icosahedron, 0)
        finite_nonzero = np.unique(np.round(d[d > 0], 12))
        assert abs(finite_nonzero[0] - ICO_EDGE) < 1e-12

    def test_cross_component_infinite(self, two_spheres):
        d = geodesic_distances(two_spheres, 0)
        labels = two_spheres.component_labels
        other = labels != labels[0]
        assert np.all(np.isinf(d[other]))
        assert np.all(np.isfinite(d[~other]))

    def test_symmetry_and_triangle_inequality(self, sphere2, rng):
        idx = rng.integers(0, sphere2.n_vertices, size=6)
        dists = {int(v): geodesic_distances(sphere2, int(v)) for v in idx}
        for a in idx:
            for b in idx:
                assert abs(dists[int(a)][b] - dists[int(b)][a]) < 1e-9
        a, b, c = (int(v) for v in idx[:3])
        assert dists[a][c] <= dists[a][b] + dists[b][c] + 1e-9

    def test_out_of_range_vertex(self, icosahedron):
        with pytest.raises(IndexError):
            geodesic_distances(icosahedron, 99)


class TestHemispheres:
    def test_single_component(self, sphere2):
        assert set(sphere2.hemisphere) == {"S"}

    def test_two_components_by_centroid_sign(self, two_spheres):
        labels = two_spheres.component_labels
        left_mask = two_spheres.vertices[:, 0] < 0
        assert set(two_spheres.hemisphere[left_mask]) == {"L"}
        assert set(two_spheres.hemisphere[~left_mask]) == {"R"}
        assert two_spheres.n_components == 2
        assert len(set(labels)) == 2

    def test_sidecar_override(self, tmp_path, icosahedron):
        path = tmp_path / "hemi.txt"
        path.write_text("R\n" * icosahedron.n_vertices)
        labels = load_hemisphere_labels(path, icosahedron.n_vertices)
        mesh = TriMesh(icosahedron.vertices, icosahedron.faces, hemisphere=labels)
        assert set(mesh.hemisphere) == {"R"}

    def test_sidecar_bad_label(self, tmp_path):
        path = tmp_path / "hemi.txt"
        path.write_text("L\nX\n")
        with pytest.raises(ParseError):
            load_hemisphere_labels(path, 2)

    def test_sidecar_wrong_count(self, tmp_path):
        path = tmp_path / "hemi.txt"
        path.write_text("L\nR\n")
        with pytest.raises(ShapeError):
            load_hemisphere_labels(path, 3)


def test_merge_meshes_offsets_faces(two_spheres):
    assert two_spheres.n_vertices == 2 * 162
    assert two_spheres.n_faces == 2 * 320
    assert two_spheres.faces.max() == two_spheres.n_vertices - 1
