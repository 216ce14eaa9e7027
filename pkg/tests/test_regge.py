import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from reggecurv import ReggeField, build_structured, geometry, interp_regge, is_metric, regge_space
from reggecurv.fields import X, Y, ConstantField, SymbolicField
from reggecurv.polyquad import edge_rule, tri_rule
from reggecurv.regge import random_regge, random_regge_metric, regge_from_edge_lengths, tt_jump

from conftest import UNIT, conformal


def poly_tensor(r):
    if r == 0:
        return ConstantField(np.array([[2.0, 0.25], [0.25, 1.5]]))
    a = 1 + X**r - Y / 2
    b = X * Y ** (r - 1) / 3
    c = 2 + Y**r
    return SymbolicField(sp.Matrix([[a, b], [b, c]]), (2, 2))


def max_diff(f, exact, mesh, qdeg=8):
    geom = geometry(mesh)
    xi = tri_rule(qdeg).xi
    cells = np.arange(mesh.n_triangles)
    return float(np.abs(f.evaluate(geom, cells, xi, 0)[0] - exact.evaluate(geom, cells, xi, 0)[0]).max())


@pytest.mark.parametrize("r", [0, 1, 2, 3])
def test_interpolant_reproduces_polynomials(mesh2, r):
    p = poly_tensor(r)
    assert max_diff(interp_regge(mesh2, r, p), p, mesh2) < 1e-11


@pytest.mark.parametrize("r", [0, 1, 2])
def test_reproduction_with_reference_metric(mesh2, rng, r):
    gbar = random_regge_metric(mesh2, 0, rng, 0.3)
    p = poly_tensor(r)
    assert max_diff(interp_regge(mesh2, r, p, reference=gbar), p, mesh2) < 1e-11


@pytest.mark.parametrize("r", [0, 1, 2])
def test_edge_moments_preserved(mesh2, r):
    _, g = conformal()
    gh = interp_regge(mesh2, r, g, qdeg=30)
    geom = geometry(mesh2)
    s = geom.sides
    ell = edge_rule(30).points
    w = edge_rule(30).weights
    xi = s.xi(ell)
    a = np.einsum("sqij,si,sj->sq", gh.evaluate(geom, s.cells, xi, 0)[0], s.t, s.t)
    b = np.einsum("sqij,si,sj->sq", g.evaluate(geom, s.cells, xi, 0)[0], s.t, s.t)
    for j in range(r + 1):
        assert np.abs(((a - b) * ell**j) @ w).max() < 1e-12


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 3), st.integers(0, 2**31))
def test_random_fields_are_tt_continuous(r, seed):
    m = build_structured(UNIT, 2)
    f = random_regge(m, r, np.random.default_rng(seed))
    assert tt_jump(f, npts=r + 2) < 1e-12


def test_random_metric_is_metric(mesh4, rng):
    for r in (0, 1, 2):
        g = random_regge_metric(mesh4, r, rng, 0.2)
        probe = is_metric(g)
        assert probe["ok"] and probe["min_eigenvalue"] > 0.6


def test_is_metric_reports_failure(mesh2):
    bad = interp_regge(mesh2, 1, SymbolicField(sp.Matrix([[1, 0], [0, X - sp.Rational(1, 2)]]), (2, 2)))
    probe = is_metric(bad)
    assert not probe["ok"] and probe["min_eigenvalue"] <= 0


def test_edge_lengths_of_the_plane_give_delta(mesh2):
    X_ = mesh2.vertices
    lengths = np.linalg.norm(X_[mesh2.edges[:, 1]] - X_[mesh2.edges[:, 0]], axis=1)
    g = regge_from_edge_lengths(mesh2, lengths)
    assert max_diff(g, ConstantField(np.eye(2)), mesh2) < 1e-13
    g2 = regge_from_edge_lengths(mesh2, 3 * lengths)
    assert max_diff(g2, ConstantField(9 * np.eye(2)), mesh2) < 1e-12


def test_degree_out_of_range(mesh2):
    with pytest.raises(ValueError):
        regge_space(mesh2, 4)


def test_json_roundtrip(tmp_path, mesh2, rng):
    g = random_regge(mesh2, 2, rng)
    back = ReggeField.from_json(mesh2, g.to_json())
    assert np.array_equal(back.coeffs, g.coeffs)


def test_metric_jet_matches_evaluation(mesh2, rng):
    g = random_regge_metric(mesh2, 2, rng, 0.1)
    jet = g.metric_jet(3, [0.2, 0.3, 0.5])
    assert jet.g.shape == (2, 2) and jet.d2g.shape == (2, 2, 2, 2)
    assert np.allclose(jet.g, jet.g.T)


@pytest.mark.parametrize("r", [0, 1, 2, 3])
def test_delta_reproduced(mesh2, r):
    g = interp_regge(mesh2, r, ConstantField(np.eye(2)))
    assert max_diff(g, ConstantField(np.eye(2)), mesh2) < 1e-13


@pytest.mark.parametrize("r", [0, 1, 2])
def test_interpolation_is_a_projection(mesh2, rng, r):
    f = random_regge(mesh2, r, rng)
    assert np.allclose(interp_regge(mesh2, r, f).coeffs, f.coeffs, atol=1e-12)


def test_metric_jet_examples(mesh2):
    g = interp_regge(mesh2, 1, ConstantField(np.eye(2)))
    jet = g.metric_jet(0, [1 / 3, 1 / 3, 1 / 3])
    assert np.abs(jet.dg).max() < 1e-13 and np.abs(jet.d2g).max() < 1e-13
    lin = interp_regge(mesh2, 1, SymbolicField(sp.Matrix([[1 + X, 0], [0, 1]]), (2, 2)))
    jet = lin.metric_jet(5, [0.2, 0.5, 0.3])
    expected = np.zeros((2, 2, 2))
    expected[0, 0, 0] = 1.0
    assert np.allclose(jet.dg, expected, atol=1e-12)


def test_metric_jet_against_fd(mesh2, rng):
    g = random_regge_metric(mesh2, 2, rng, 0.2)
    tri = 4
    verts = mesh2.vertices[mesh2.triangles[tri]]
    bary = np.array([0.3, 0.3, 0.4])
    jet = g.metric_jet(tri, bary)
    # barycentric step that moves the point by h along x: solve for the coordinate change
    A = np.vstack([verts.T, np.ones(3)])
    for axis in range(2):
        errs = []
        for h in (1e-3, 5e-4):
            d = np.linalg.solve(A, np.r_[h * np.eye(2)[axis], 0.0])
            fd = (g.metric_jet(tri, bary + d).g - g.metric_jet(tri, bary - d).g) / (2 * h)
            errs.append(np.abs(fd - jet.dg[..., axis]).max())
        assert errs[0] < 1e-5 and (errs[1] < errs[0] / 3 or errs[1] < 1e-10)


def test_interpolants_of_the_benchmark_are_metrics():
    from reggecurv.driver import ManufacturedMetric

    mm = ManufacturedMetric.create("conformal", {"amplitude": 0.2})
    for n in (4, 8, 16):
        m = build_structured(UNIT, n)
        for r in (1, 2):
            assert is_metric(interp_regge(m, r, mm.g))["ok"]
    assert is_metric(interp_regge(build_structured(UNIT, 2), 0, ConstantField(np.eye(2))))["ok"]


def test_conformal_r1_edge_moments(mesh4):
    phi = sp.sin(sp.pi * X) * sp.sin(sp.pi * Y)
    g = SymbolicField(sp.exp(2 * phi) * sp.eye(2), (2, 2))
    gh = interp_regge(mesh4, 1, g, qdeg=30)
    geom = geometry(mesh4)
    s = geom.sides
    rule = edge_rule(30)
    xi = s.xi(rule.points)
    d = gh.evaluate(geom, s.cells, xi, 0)[0] - g.evaluate(geom, s.cells, xi, 0)[0]
    tt = np.einsum("sqij,si,sj->sq", d, s.t, s.t)
    for p in (np.ones_like(rule.points), rule.points):
        assert np.abs((tt * p) @ rule.weights).max() < 1e-12
