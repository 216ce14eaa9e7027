import numpy as np
import pytest
import sympy as sp

from reggecurv import FeSpace, build_structured, geometry, interpolate, mass_matrix
from reggecurv.elements import ref_element
from reggecurv.fespace import d0_matrix, d1_matrix, exact_d1d0
from reggecurv.fields import X, Y, ConstantField, SymbolicField
from reggecurv.polyquad import tri_rule

from conftest import UNIT


def dims(m, k):
    V, E, T = m.n_vertices, m.n_edges, m.n_triangles
    return {
        "lagrange": V + E * (k - 1) + T * (k - 1) * (k - 2) // 2,
        "nedelec": E * k + T * k * (k - 1),
        "dg": T * (k + 1) * (k + 2) // 2,
        "regge": E * (k + 1) + T * 3 * k * (k + 1) // 2,
    }


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_dimensions(n, k):
    m = build_structured(UNIT, n)
    for kind, d in dims(m, k).items():
        assert FeSpace(m, kind, k).ndofs == d


def test_aliases(mesh2):
    assert FeSpace(mesh2, "edge-oneform", 2).kind == "nedelec"
    assert FeSpace(mesh2, "lagrange-scalar", 1).kind == "lagrange"


def test_boundary_masks(mesh2):
    V = FeSpace(mesh2, "lagrange", 2)
    assert V.boundary.sum() == 8 + 8  # boundary vertices and edge midpoints
    W = FeSpace(mesh2, "nedelec", 2)
    assert W.boundary.sum() == 8 * 2
    assert not FeSpace(mesh2, "dg", 1).boundary.any()


def _l2_error(f, exact, qdeg=12):
    geom = geometry(f.mesh)
    rule = tri_rule(qdeg)
    cells = np.arange(f.mesh.n_triangles)
    a = f.evaluate(geom, cells, rule.xi, 0)[0]
    b = exact.evaluate(geom, cells, rule.xi, 0)[0]
    return float(np.abs(a - b).max())


@pytest.mark.parametrize("k", [1, 2, 3])
def test_lagrange_reproduces_polynomials(mesh2, k):
    p = SymbolicField(sum((i + 1) * X**i * Y ** (k - i) for i in range(k + 1)) + 3 * X - 1)
    f = interpolate(FeSpace(mesh2, "lagrange", k), p)
    assert _l2_error(f, p) < 1e-12


@pytest.mark.parametrize("k", [1, 2, 3])
def test_nedelec_reproduces_polynomials(mesh2, k):
    p = SymbolicField(sp.Matrix([X ** (k - 1) + 2, 3 * Y ** (k - 1) - 1]), (2,))
    f = interpolate(FeSpace(mesh2, "nedelec", k), p)
    assert _l2_error(f, p) < 1e-12


@pytest.mark.parametrize("k", [1, 2, 3])
def test_d0_is_gradient(mesh2, k):
    v = SymbolicField(sp.sin(X) * sp.cos(2 * Y))
    Vh, Wh = FeSpace(mesh2, "lagrange", k), FeSpace(mesh2, "nedelec", k)
    vh = interpolate(Vh, v)
    # D0 maps coefficients of v to those of grad v
    D = d0_matrix(Vh, Wh)
    dv = Wh.function(D @ vh.coeffs)
    geom = geometry(mesh2)
    rule = tri_rule(2 * k)
    cells = np.arange(mesh2.n_triangles)
    assert np.allclose(dv.evaluate(geom, cells, rule.xi, 0)[0], vh.evaluate(geom, cells, rule.xi, 1)[1], atol=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_d1_is_curl(mesh2, rng, k):
    Wh, Xh = FeSpace(mesh2, "nedelec", k), FeSpace(mesh2, "dg", k - 1)
    a = Wh.function(rng.standard_normal(Wh.ndofs))
    da = Xh.function(d1_matrix(Wh, Xh) @ a.coeffs)
    geom = geometry(mesh2)
    xi = tri_rule(2 * k).xi
    cells = np.arange(mesh2.n_triangles)
    J = a.evaluate(geom, cells, xi, 1)[1]
    curl = J[..., 1, 0] - J[..., 0, 1]
    assert np.allclose(da.evaluate(geom, cells, xi, 0)[0], curl, atol=1e-11)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_d1d0_exactly_zero(mesh2, k):
    assert exact_d1d0(mesh2, k) == {}


def test_reference_elements_unisolvent():
    for kind in ("lagrange", "nedelec", "dg", "regge"):
        for k in (1, 2):
            el = ref_element(kind, k)
            M = np.array([[float(v) for v in el.apply_dofs(b)] for b in el.basis])
            assert np.allclose(M, np.eye(el.ndofs))


def test_mass_matrix_scales_with_metric(mesh2):
    Vh = FeSpace(mesh2, "lagrange", 2)
    one = np.ones(Vh.ndofs)
    assert one @ mass_matrix(Vh) @ one == pytest.approx(1.0)
    # omega_g = det(g)^{1/2} dx for g = diag(4, 9)
    g = ConstantField(np.diag([4.0, 9.0]))
    assert one @ mass_matrix(Vh, g) @ one == pytest.approx(6.0)
    Wh = FeSpace(mesh2, "nedelec", 1)
    a = interpolate(Wh, ConstantField(np.array([1.0, 0.0])))
    # |dx|_g^2 omega_g = (1/4) 6
    assert a.coeffs @ mass_matrix(Wh, g) @ a.coeffs == pytest.approx(1.5)


def reference_triangle():
    from reggecurv import Mesh

    return Mesh.from_arrays(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))


def test_p1_mass_on_reference_triangle():
    M = mass_matrix(FeSpace(reference_triangle(), "lagrange", 1)).toarray()
    assert np.allclose(np.diag(M), 1 / 12)
    assert np.allclose(M - np.diag(np.diag(M)), (np.ones((3, 3)) - np.eye(3)) / 24)


def test_mass_scaling_under_4delta(mesh2):
    four = ConstantField(4 * np.eye(2))
    for kind, factor in (("lagrange", 4.0), ("nedelec", 1.0)):
        S = FeSpace(mesh2, kind, 2)
        assert np.allclose(mass_matrix(S, four).toarray(), factor * mass_matrix(S).toarray(), atol=1e-14)


@pytest.mark.parametrize("kind", ["lagrange", "nedelec", "dg"])
def test_mass_symmetric_positive_definite(mesh2, rng, kind):
    from reggecurv.regge import random_regge_metric

    S = FeSpace(mesh2, kind, 2)
    M = mass_matrix(S, random_regge_metric(mesh2, 1, rng, 0.2)).toarray()
    assert np.array_equal(M, M.T)
    np.linalg.cholesky(M[np.ix_(S.free, S.free)])


def test_project_functional(mesh2, rng):
    from reggecurv.fespace import Functional, project_functional
    from reggecurv.regge import random_regge_metric

    g = random_regge_metric(mesh2, 1, rng, 0.2)
    Vh = FeSpace(mesh2, "lagrange", 2)
    u = rng.standard_normal(Vh.ndofs) * ~Vh.boundary
    F = Functional(Vh, mass_matrix(Vh, g) @ u)
    assert np.allclose(project_functional(F, g=g).coeffs, u, atol=1e-12)
    assert not project_functional(Functional(Vh, np.zeros(Vh.ndofs)), g=g).coeffs.any()
    with pytest.raises(ValueError):
        project_functional(np.zeros(Vh.ndofs))


def test_vector_interpolation(mesh2, rng):
    from reggecurv.fespace import interp_lagrange_vector
    from reggecurv.fields import DeformationField

    Uh = FeSpace(mesh2, "vlagrange", 2)
    u = Uh.function(rng.standard_normal(Uh.ndofs))
    assert np.allclose(interp_lagrange_vector(u, Uh).coeffs, u.coeffs, atol=1e-12)
    rm = SymbolicField(sp.Matrix([1 + 2 * Y, -3 - 2 * X]), (2,))
    pu = interp_lagrange_vector(rm, Uh)
    assert _l2_error(pu, rm) < 1e-13
    geom = geometry(mesh2)
    eps = DeformationField(pu).evaluate(geom, np.arange(8), tri_rule(4).xi, 0)[0]
    assert np.abs(eps).max() < 1e-13
    smooth = SymbolicField(sp.Matrix([sp.sin(X), sp.cos(Y)]), (2,))
    vals = interp_lagrange_vector(smooth, FeSpace(mesh2, "vlagrange", 2)).coeffs[: 2 * mesh2.n_vertices]
    V = mesh2.vertices
    assert np.allclose(vals.reshape(-1, 2), np.column_stack([np.sin(V[:, 0]), np.cos(V[:, 1])]), atol=1e-15)
    with pytest.raises(ValueError):
        interp_lagrange_vector(smooth, FeSpace(mesh2, "lagrange", 2))


def test_deformation_examples(mesh2):
    from reggecurv.fields import deformation

    geom = geometry(mesh2)
    xi = tri_rule(3).xi
    cells = np.arange(mesh2.n_triangles)
    e = deformation(SymbolicField(sp.Matrix([X, 0]), (2,))).evaluate(geom, cells, xi, 0)[0]
    assert np.allclose(e, np.diag([1.0, 0.0]))
    e = deformation(SymbolicField(sp.Matrix([2 - Y, 1 + X]), (2,))).evaluate(geom, cells, xi, 0)[0]
    assert np.allclose(e, 0.0)
