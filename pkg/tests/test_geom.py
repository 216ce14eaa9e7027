import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from reggecurv.fields import X, Y, SymbolicField
from reggecurv.geom import (
    MetricJet,
    NotPositiveDefinite,
    christoffel,
    edge_frame,
    gauss_curvature,
    geodesic_curvature,
    inner,
    interior_angle,
    s_operator,
    trace_g,
)

from conftest import brioschi

PTS = np.array([[[0.3, 0.4], [0.7, 0.2], [0.55, 0.9], [0.1, 0.65]]])


def jet_of(expr_matrix, pts=PTS):
    return MetricJet(*SymbolicField(sp.Matrix(expr_matrix), (2, 2))(pts, 2))


def test_round_sphere():
    g = 4 / (1 + X**2 + Y**2) ** 2 * sp.eye(2)
    assert np.allclose(gauss_curvature(jet_of(g)), 1.0, atol=1e-13)


def test_hyperbolic_plane():
    assert np.allclose(gauss_curvature(jet_of(sp.eye(2) / Y**2)), -1.0, atol=1e-12)


def test_flat_in_curvilinear_coordinates():
    # polar coordinates (x = radius, y = angle)
    jet = jet_of(sp.diag(1, X**2))
    assert np.allclose(gauss_curvature(jet), 0.0, atol=1e-13)
    G = christoffel(jet)
    r = PTS[..., 0]
    assert np.allclose(G[..., 0, 1, 1], -r)
    assert np.allclose(G[..., 1, 0, 1], 1 / r)
    assert np.allclose(G[..., 0, 0, 0], 0.0)


@pytest.mark.parametrize("seed", range(4))
def test_against_brioschi(seed):
    rng = np.random.default_rng(seed)
    c = [sp.Rational(int(v), 10) for v in rng.integers(-3, 4, 6)]
    E = 2 + c[0] * X**2 + c[1] * sp.sin(Y)
    F = c[2] * X * Y + c[3] * sp.cos(X) / 4
    G = 2 + c[4] * Y**2 + c[5] * X * Y
    K = sp.lambdify((X, Y), brioschi(E, F, G))(PTS[..., 0], PTS[..., 1])
    assert np.allclose(gauss_curvature(jet_of([[E, F], [F, G]])), K, rtol=1e-11, atol=1e-12)


def test_horocycles_and_geodesics():
    jet = jet_of(sp.eye(2) / Y**2)
    shape = PTS.shape
    # triangle above a horizontal edge: outward normal points down
    k = geodesic_curvature(jet, np.broadcast_to([1.0, 0.0], shape), np.broadcast_to([0.0, -1.0], shape))
    assert np.allclose(k, 1.0)
    k = geodesic_curvature(jet, np.broadcast_to([0.0, 1.0], shape), np.broadcast_to([1.0, 0.0], shape))
    assert np.allclose(k, 0.0)


def test_not_positive_definite():
    with pytest.raises(NotPositiveDefinite):
        christoffel(MetricJet(np.diag([1.0, -1.0])[None], np.zeros((1, 2, 2, 2))))


spd = st.tuples(st.floats(0.2, 3), st.floats(0.2, 3), st.floats(-0.9, 0.9)).map(
    lambda p: np.array([[p[0], p[2] * np.sqrt(p[0] * p[1])], [p[2] * np.sqrt(p[0] * p[1]), p[1]]])
)
sym = arrays(float, 3, elements=st.floats(-5, 5)).map(lambda a: np.array([[a[0], a[1]], [a[1], a[2]]]))


@settings(max_examples=60, deadline=None)
@given(spd, sym)
def test_s_operator_is_an_involution(g, s):
    assert np.allclose(s_operator(g, s_operator(g, s)), s, atol=1e-10)
    assert trace_g(g, g) == pytest.approx(2.0)
    assert trace_g(g, s_operator(g, s)) == pytest.approx(-trace_g(g, s), abs=1e-9)
    assert inner(g, g, s) == pytest.approx(trace_g(g, s), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(arrays(float, (2, 2), elements=st.floats(-2, 2)), st.floats(0, 2 * np.pi), st.floats(0.1, 3.0))
def test_angle_pullback_invariance(A, phi, turn):
    if abs(np.linalg.det(A)) < 0.1:
        A = A + np.eye(2) * 2
    t1 = np.array([np.cos(phi), np.sin(phi)])
    t2 = np.array([np.cos(phi + turn), np.sin(phi + turn)])
    u1, u2 = A @ t1, A @ t2
    expected = np.arccos(np.clip(u1 @ u2 / np.linalg.norm(u1) / np.linalg.norm(u2), -1, 1))
    assert interior_angle(A.T @ A, t1, t2) == pytest.approx(expected, abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(spd, st.floats(0, 2 * np.pi))
def test_edge_frame_orthonormal_right_handed(g, phi):
    t = np.array([np.cos(phi), np.sin(phi)])
    nu = np.array([t[1], -t[0]])
    tau, n = edge_frame(g, t, nu)
    assert tau @ g @ tau == pytest.approx(1.0)
    assert n @ g @ n == pytest.approx(1.0)
    assert n @ g @ tau == pytest.approx(0.0, abs=1e-10)
    assert n @ nu > 0
    assert n[0] * tau[1] - n[1] * tau[0] > 0


def fd_metric_jet(gfun, p, h=1e-4):
    """g, dg by central differences of a callable g(x, y) -> 2x2."""
    g = gfun(*p)
    dg = np.stack([(gfun(*(p + h * e)) - gfun(*(p - h * e))) / (2 * h) for e in np.eye(2)], axis=-1)
    return g, dg


def christoffel_formula(g, dg):
    G = np.linalg.inv(g)
    out = np.zeros((2, 2, 2))
    for k in range(2):
        for i in range(2):
            for j in range(2):
                out[k, i, j] = 0.5 * sum(G[k, l] * (dg[j, l, i] + dg[i, l, j] - dg[i, j, l]) for l in range(2))
    return out


PHI = X * Y / 2 + sp.sin(X) / 3
CONF = sp.exp(2 * PHI) * sp.eye(2)


def test_christoffel_trivial_metrics():
    for g in (sp.eye(2), 3 * sp.eye(2)):
        assert np.abs(christoffel(jet_of(g))).max() == 0


def test_christoffel_conformal_against_fd():
    jet = jet_of(CONF)
    gl = sp.lambdify((X, Y), CONF)
    for q, p in enumerate(PTS[0]):
        g, dg = fd_metric_jet(lambda x, y: np.array(gl(x, y), dtype=float), p)
        assert np.allclose(christoffel(jet)[0, q], christoffel_formula(g, dg), atol=1e-7)


def test_flat_conformal_and_paraboloid():
    assert np.allclose(gauss_curvature(jet_of(sp.exp(2 * X) * sp.eye(2))), 0.0, atol=1e-12)
    f = (X**2 + Y**2) / 2
    fx, fy = sp.diff(f, X), sp.diff(f, Y)
    g = sp.Matrix([[1 + fx**2, fx * fy], [fx * fy, 1 + fy**2]])
    assert gauss_curvature(jet_of(g, np.zeros((1, 1, 2))))[0, 0] == pytest.approx(1.0, abs=1e-14)


def test_s_operator_examples():
    g = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert np.allclose(s_operator(g, g), -g)
    s = np.array([[1.0, 0.3], [0.3, 0.0]])
    s = s - g * trace_g(g, s) / 2  # trace-free part
    assert np.allclose(s_operator(g, s), s)


def test_hessian_examples():
    from reggecurv.geom import hessian

    d2v = np.array([[[[2.0, 1.0], [1.0, -3.0]]]])
    dv = np.array([[[0.4, -1.0]]])
    jet = MetricJet(np.eye(2)[None, None], np.zeros((1, 1, 2, 2, 2)))
    assert np.allclose(hessian(jet, dv, d2v), d2v)
    cj = jet_of(CONF)
    dv = np.broadcast_to([0.4, -1.0], PTS.shape)
    H = hessian(cj, dv, np.zeros(PTS.shape + (2,)))
    assert np.allclose(H, -np.einsum("...kij,...k->...ij", christoffel(cj), dv))


def test_hessian_of_x2y_against_fd():
    from reggecurv.geom import hessian

    gl = sp.lambdify((X, Y), CONF)
    cj = jet_of(CONF)
    for q, p in enumerate(PTS[0]):
        x, y = p
        dv = np.array([2 * x * y, x**2])
        d2v = np.array([[2 * y, 2 * x], [2 * x, 0.0]])
        g, dg = fd_metric_jet(lambda a, b: np.array(gl(a, b), dtype=float), p)
        expected = d2v - np.einsum("kij,k->ij", christoffel_formula(g, dg), dv)
        got = hessian(MetricJet(cj.g[:, q : q + 1], cj.dg[:, q : q + 1]), dv[None, None], d2v[None, None])
        assert np.allclose(got[0, 0], expected, atol=1e-7)


def test_div_s_sigma_examples():
    from reggecurv.geom import SymTensorJet, div_s_sigma

    cj = jet_of(CONF)
    assert np.allclose(div_s_sigma(cj, SymTensorJet(cj.g, cj.dg)), 0.0, atol=1e-12)
    flat = jet_of(sp.eye(2))
    const = np.broadcast_to([[1.0, 2.0], [2.0, -1.0]], PTS.shape[:-1] + (2, 2))
    assert np.allclose(div_s_sigma(flat, SymTensorJet(const, np.zeros(const.shape + (2,)))), 0.0)
    # (div S sigma)_j = d_i (S sigma)_ij for g = delta; sigma = diag(x^2, 0) + x y E12 sym
    s = sp.Matrix([[X**2, X * Y], [X * Y, 0]])
    Ss = s - sp.eye(2) * s.trace()
    expected = [sp.diff(Ss[0, j], X) + sp.diff(Ss[1, j], Y) for j in range(2)]
    ev = np.stack([sp.lambdify((X, Y), e)(PTS[..., 0], PTS[..., 1]) * np.ones(PTS.shape[:-1]) for e in expected], -1)
    sj = SymTensorJet(*SymbolicField(s, (2, 2))(PTS, 1))
    assert np.allclose(div_s_sigma(flat, sj), ev)


def test_edge_frame_examples():
    t, nu = np.array([1.0, 0.0]), np.array([0.0, -1.0])
    tau, n = edge_frame(np.eye(2), t, nu)
    assert np.allclose(tau, [1, 0]) and np.allclose(n, [0, -1])
    tau, n = edge_frame(4 * np.eye(2), t, nu)
    assert np.allclose(tau, [0.5, 0]) and np.allclose(n, [0, -0.5])
    tau, n = edge_frame(np.diag([1.0, 4.0]), t, nu)
    assert np.allclose(tau, [1, 0]) and np.allclose(n, [0, -0.5])
    with pytest.raises(ValueError):
        edge_frame(np.eye(2), np.zeros(2), nu)


def test_geodesic_curvature_examples():
    t = np.broadcast_to([0.6, 0.8], PTS.shape)
    nu = np.broadcast_to([0.8, -0.6], PTS.shape)
    for g in (sp.eye(2), 5 * sp.eye(2)):
        assert np.allclose(geodesic_curvature(jet_of(g), t, nu), 0.0)
    # conformal: k_e = exp(-phi) d_nu phi with nu the Euclidean outward unit normal
    dphi = [sp.lambdify((X, Y), sp.diff(PHI, v))(PTS[..., 0], PTS[..., 1]) for v in (X, Y)]
    phi = sp.lambdify((X, Y), PHI)(PTS[..., 0], PTS[..., 1])
    expected = np.exp(-phi) * (0.8 * dphi[0] - 0.6 * dphi[1])
    assert np.allclose(geodesic_curvature(jet_of(CONF), t, nu), expected, atol=1e-13)


def test_interior_angle_examples():
    assert interior_angle(np.eye(2), np.array([1.0, 0]), np.array([0, 1.0])) == pytest.approx(np.pi / 2)
    g = np.diag([1.0, 4.0])
    t1, t2 = np.array([1.0, 0.0]), np.array([1.0, 1.0])
    assert interior_angle(g, t1, t2) == pytest.approx(np.arccos(1 / np.sqrt(5)))
    assert interior_angle(7 * g, t1, t2) == pytest.approx(interior_angle(g, t1, t2))
    with pytest.raises(ValueError):
        interior_angle(g, t1, 2 * t1)
