import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esikit.errors import GeometryError, ShapeError
from esikit.forward import (
    ForwardModel,
    analytic_leadfield,
    fibonacci_sensors,
    load_leadfield,
    project,
)
from esikit.io import save_matrix, save_sensor_meta
from esikit.mesh import make_icosphere
from esikit.simulate import SourceEstimate

SIGMA = 3.3e-4


class TestLoadLeadfield:
    def _write(self, tmp_path, k, names):
        mat = tmp_path / "k.csv"
        meta = tmp_path / "sensors.txt"
        save_matrix(mat, k)
        save_sensor_meta(meta, names, np.arange(len(names) * 3, dtype=float).reshape(-1, 3))
        return mat, meta

    def test_shapes(self, tmp_path):
        mat, meta = self._write(tmp_path, np.arange(6.0).reshape(2, 3) + 1, ["a", "b"])
        fm = load_leadfield(mat, meta)
        assert fm.n_sensors == 2
        assert fm.n_sources == 3
        np.testing.assert_array_equal(fm.K, np.arange(6.0).reshape(2, 3) + 1)

    def test_meta_mismatch(self, tmp_path):
        mat, meta = self._write(tmp_path, np.ones((2, 3)), ["a", "b", "c"])
        with pytest.raises(ShapeError):
            load_leadfield(mat, meta)

    def test_binary_roundtrip_bit_exact(self, tmp_path, rng):
        k = rng.standard_normal((4, 7))
        path = tmp_path / "k.bin"
        save_matrix(path, k)
        meta = tmp_path / "s.txt"
        save_sensor_meta(meta, ["s1", "s2", "s3", "s4"], rng.standard_normal((4, 3)))
        fm = load_leadfield(path, meta)
        assert fm.K.tobytes() == k.tobytes()

    def test_mesh_pairing(self, tmp_path, rng):
        mesh = make_icosphere(0, 1.0)
        mat, meta = self._write(tmp_path, np.ones((2, 5)), ["a", "b"])
        with pytest.raises(ShapeError):
            load_leadfield(mat, meta, mesh=mesh)


class TestAnalyticLeadfield:
    def test_on_axis_value(self):
        # icosahedron vertex normals are radial by symmetry; a sensor on the
        # outward ray sees the textbook dipole potential 1 / (4 pi sigma d^2)
        mesh = make_icosphere(0, 1.0)
        i = 3
        u = mesh.vertices[i] / np.linalg.norm(mesh.vertices[i])
        d = 2.0
        fm = analytic_leadfield(mesh, (1.0 + d) * u[None, :], conductivity=SIGMA)
        np.testing.assert_allclose(
            fm.K[0, i], 1.0 / (4.0 * np.pi * SIGMA * d**2), rtol=1e-12
        )

    def test_equatorial_zero(self):
        import warnings

        mesh = make_icosphere(0, 1.0)
        i = 3
        u = mesh.vertices[i]
        w = np.cross(u, [0.0, 0.0, 1.0])
        w /= np.linalg.norm(w)
        sensor = u + 2.0 * w  # perpendicular offset: dot(normal, diff) = 0
        with warnings.catch_warnings():
            # the vanishing entry may round to an exactly zero column
            warnings.simplefilter("ignore", UserWarning)
            fm = analytic_leadfield(mesh, sensor[None, :], conductivity=SIGMA)
        assert abs(fm.K[0, i]) < 1e-12

    def test_inverse_square_scaling(self):
        mesh = make_icosphere(0, 1.0)
        i = 3
        u = mesh.vertices[i] / np.linalg.norm(mesh.vertices[i])
        fm = analytic_leadfield(
            mesh, np.vstack([(1.0 + 2.0) * u, (1.0 + 4.0) * u]), conductivity=SIGMA
        )
        assert fm.K[0, i] / fm.K[1, i] == pytest.approx(4.0, rel=1e-12)

    def test_monotone_decay_along_ray(self):
        mesh = make_icosphere(0, 1.0)
        i = 3
        u = mesh.vertices[i] / np.linalg.norm(mesh.vertices[i])
        dists = np.array([1.5, 2.0, 3.0, 5.0, 9.0])
        fm = analytic_leadfield(mesh, (1.0 + dists)[:, None] * u, conductivity=SIGMA)
        assert np.all(np.diff(fm.K[:, i]) < 0)

    def test_sensor_inside_bounding_sphere(self, sphere2):
        with pytest.raises(GeometryError):
            analytic_leadfield(sphere2, np.array([[0.0, 0.0, 50.0]]))

    def test_bad_conductivity(self, sphere2, sensors64):
        with pytest.raises(GeometryError):
            analytic_leadfield(sphere2, sensors64, conductivity=0.0)


class TestProject:
    def test_zero_source(self, fm2):
        np.testing.assert_array_equal(project(fm2, np.zeros(fm2.n_sources)), 0.0)

    def test_unit_vector_selects_column(self, fm2):
        j = 17
        x = np.zeros(fm2.n_sources)
        x[j] = 1.0
        np.testing.assert_allclose(project(fm2, x), fm2.K[:, j], rtol=1e-15)

    def test_accepts_source_estimate(self, fm2, rng):
        x = rng.standard_normal(fm2.n_sources)
        est = SourceEstimate(values=x, provenance="file-import")
        np.testing.assert_array_equal(project(fm2, est), project(fm2, x))

    def test_wrong_length(self, fm2):
        with pytest.raises(ShapeError):
            project(fm2, np.ones(fm2.n_sources + 1))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
    def test_linearity(self, seed, a, b):
        fm = _small_fm()
        r = np.random.default_rng(seed)
        x1 = r.standard_normal(fm.n_sources)
        x2 = r.standard_normal(fm.n_sources)
        lhs = project(fm, a * x1 + b * x2)
        rhs = a * project(fm, x1) + b * project(fm, x2)
        scale = max(np.abs(lhs).max(), np.abs(rhs).max(), 1e-30)
        assert np.abs(lhs - rhs).max() <= 1e-12 * scale


_FM_CACHE = {}


def _small_fm():
    if "fm" not in _FM_CACHE:
        mesh = make_icosphere(0, 1.0)
        _FM_CACHE["fm"] = analytic_leadfield(mesh, fibonacci_sensors(6, 3.0))
    return _FM_CACHE["fm"]


class TestForwardModelInvariants:
    def test_dead_sensor_warns(self):
        k = np.ones((2, 3))
        k[1] = 0.0
        with pytest.warns(UserWarning, match="all-zero row"):
            ForwardModel(K=k, sensor_positions=np.zeros((2, 3)))

    def test_invisible_source_warns(self):
        k = np.ones((2, 3))
        k[:, 0] = 0.0
        with pytest.warns(UserWarning, match="all-zero column"):
            ForwardModel(K=k, sensor_positions=np.zeros((2, 3)))

    def test_fibonacci_layout(self):
        pts = fibonacci_sensors(50, 7.0, center=(1.0, 2.0, 3.0))
        np.testing.assert_allclose(
            np.linalg.norm(pts - [1.0, 2.0, 3.0], axis=1), 7.0, rtol=1e-12
        )
