import numpy as np
import pytest

from esikit.errors import DimensionError, NumericalError
from esikit.lbo import assemble_lbo, eigenmodes, rayleigh_quotients
from esikit.mesh import TriMesh, make_icosphere, merge_meshes

ICO_EDGE = 4.0 / np.sqrt(10.0 + 2.0 * np.sqrt(5.0))


def sphere_spectrum(n_modes):
    """Analytic unit-sphere eigenvalues l(l+1), each 2l+1 times."""
    out = []
    l = 0
    while len(out) < n_modes:
        out.extend([l * (l + 1)] * (2 * l + 1))
        l += 1
    return np.array(out[:n_modes], dtype=float)


@pytest.fixture(scope="module")
def folded_square():
    # two right isoceles triangles sharing the edge (0, 1); both 45-degree
    # angles face the shared edge, so its cotangent weight is exactly -1
    verts = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
    faces = np.array([[0, 1, 2], [1, 0, 3]])
    return TriMesh(verts, faces)


class TestAssembly:
    def test_shared_edge_weight(self, folded_square):
        lbo = assemble_lbo(folded_square)
        assert lbo.stiffness[0, 1] == pytest.approx(-1.0, abs=1e-12)
        assert lbo.stiffness[1, 0] == pytest.approx(-1.0, abs=1e-12)

    def test_constant_in_kernel(self, sphere2):
        lbo = assemble_lbo(sphere2)
        resid = lbo.stiffness @ np.ones(sphere2.n_vertices)
        row_scale = np.abs(lbo.stiffness).sum(axis=1).max()
        assert np.abs(resid).max() < 1e-9 * row_scale

    def test_symmetry_exact(self, sphere2):
        lbo = assemble_lbo(sphere2)
        diff = (lbo.stiffness - lbo.stiffness.T).tocoo()
        assert diff.nnz == 0 or np.abs(diff.data).max() == 0.0

    def test_mass_positive_and_total_area(self, icosahedron):
        lbo = assemble_lbo(icosahedron)
        assert np.all(lbo.mass > 0)
        # 20 equilateral faces of edge e distribute their area barycentrically
        expected_area = 5.0 * np.sqrt(3.0) * ICO_EDGE**2
        assert lbo.mass.sum() == pytest.approx(expected_area, rel=1e-12)

    def test_near_degenerate_triangle_rejected(self):
        h = 1e-10  # passes the area gate but not the cotangent gate
        verts = np.array([[0, 0, 0], [1, 0, 0], [0.5, h, 0]])
        with pytest.raises(NumericalError):
            assemble_lbo(TriMesh(verts, np.array([[0, 1, 2]])))


class TestEigenmodes:
    def test_sphere_spectrum_oracle(self):
        mesh = make_icosphere(3, 1.0)
        result = eigenmodes(assemble_lbo(mesh), 16)
        analytic = sphere_spectrum(16)
        assert result.eigenvalues[0] <= 1e-8 * result.eigenvalues[-1]
        rel = np.abs(result.eigenvalues[1:] - analytic[1:]) / analytic[1:]
        assert rel.max() < 0.02

    def test_single_mode_is_constant(self, sphere2):
        lbo = assemble_lbo(sphere2)
        result = eigenmodes(lbo, 1)
        psi = result.eigenvectors[:, 0]
        assert result.eigenvalues[0] == pytest.approx(0.0, abs=1e-10)
        assert psi.std() / np.abs(psi.mean()) < 1e-6
        assert psi @ (lbo.mass * psi) == pytest.approx(1.0, rel=1e-9)

    def test_two_components_two_kernels(self):
        mesh = merge_meshes(make_icosphere(1, 1.0), _shifted_icosphere())
        result = eigenmodes(assemble_lbo(mesh), 3)
        assert result.eigenvalues[0] <= 1e-8 * result.eigenvalues[-1]
        assert result.eigenvalues[1] <= 1e-8 * result.eigenvalues[-1]
        assert result.eigenvalues[2] > 1e-3

    def test_mass_orthonormality(self, sphere2):
        lbo = assemble_lbo(sphere2)
        result = eigenmodes(lbo, 25)
        gram = result.eigenvectors.T @ (result.eigenvectors * lbo.mass[:, None])
        assert np.abs(gram - np.eye(25)).max() < 1e-7

    def test_eigenvalues_sorted_nonnegative(self, sphere2):
        result = eigenmodes(assemble_lbo(sphere2), 20)
        assert np.all(np.diff(result.eigenvalues) >= 0)
        assert np.all(result.eigenvalues >= 0)

    def test_rayleigh_quotients(self, sphere2):
        lbo = assemble_lbo(sphere2)
        result = eigenmodes(lbo, 20)
        rq = rayleigh_quotients(lbo, result.eigenvectors)
        floor = 1e-8 * result.eigenvalues[-1]
        assert np.all(
            np.abs(rq - result.eigenvalues) <= 1e-8 * np.maximum(result.eigenvalues, floor)
        )

    def test_sign_convention(self, sphere2):
        result = eigenmodes(assemble_lbo(sphere2), 12)
        peaks = np.argmax(np.abs(result.eigenvectors), axis=0)
        assert np.all(result.eigenvectors[peaks, np.arange(12)] > 0)

    def test_rotation_invariance(self, sphere2, rng):
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        rotated = TriMesh(sphere2.vertices @ q.T + [5.0, -3.0, 11.0], sphere2.faces)
        base = eigenmodes(assemble_lbo(sphere2), 12).eigenvalues
        rot = eigenmodes(assemble_lbo(rotated), 12).eigenvalues
        np.testing.assert_allclose(rot[1:], base[1:], rtol=1e-6)

    def test_scaling_law(self, sphere2):
        c = 3.7
        scaled = TriMesh(sphere2.vertices * c, sphere2.faces)
        base = eigenmodes(assemble_lbo(sphere2), 10).eigenvalues
        big = eigenmodes(assemble_lbo(scaled), 10).eigenvalues
        np.testing.assert_allclose(big[1:], base[1:] / c**2, rtol=1e-6)

    def test_nested_spectrum(self, sphere2):
        lbo = assemble_lbo(sphere2)
        small = eigenmodes(lbo, 10)
        large = eigenmodes(lbo, 50)
        np.testing.assert_allclose(
            small.eigenvalues, large.eigenvalues[:10], rtol=1e-8, atol=1e-10
        )
        # the first 9 modes are complete degenerate shells (1 + 3 + 5); compare
        # their mass-weighted subspace projections, not individual vectors
        a = small.eigenvectors[:, :9] * np.sqrt(lbo.mass)[:, None]
        b = large.eigenvectors[:, :9] * np.sqrt(lbo.mass)[:, None]
        overlap = np.linalg.svd(a.T @ b, compute_uv=False)
        np.testing.assert_allclose(overlap, 1.0, atol=1e-7)

    def test_too_many_modes(self, icosahedron):
        with pytest.raises(DimensionError):
            eigenmodes(assemble_lbo(icosahedron), 13)
        with pytest.raises(DimensionError):
            eigenmodes(assemble_lbo(icosahedron), 0)


def _shifted_icosphere():
    base = make_icosphere(1, 1.0)
    verts = base.vertices.copy()
    verts[:, 0] += 5.0
    return TriMesh(verts, base.faces)
