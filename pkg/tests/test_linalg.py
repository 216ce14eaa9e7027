import numpy as np
import pytest
import scipy.sparse as sp
from scipy.linalg import hilbert
from hypothesis import given, settings, strategies as st

from reggecurv import FeSpace, interpolate, mass_matrix
from reggecurv.fields import X, Y, SymbolicField
from reggecurv.linalg import DualNormContext, SolverError, spd_solve, solve_free


def random_spd(n, seed):
    rng = np.random.default_rng(seed)
    A = sp.random(n, n, density=0.2, random_state=seed)
    return sp.csr_matrix(A @ A.T + n * sp.eye(n)), rng.standard_normal(n)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 40), st.integers(0, 10_000))
def test_spd_solve_matches_dense(n, seed):
    A, b = random_spd(n, seed)
    ref = np.linalg.solve(A.toarray(), b)
    assert np.allclose(spd_solve(A, b), ref, rtol=1e-10)
    assert np.allclose(spd_solve(A, b, "cg"), ref, rtol=1e-8)


def test_spd_solve_errors():
    A, b = random_spd(5, 0)
    with pytest.raises(ValueError):
        spd_solve(A, b, "qr")
    with pytest.raises(SolverError):
        spd_solve(hilbert(14), np.ones(14))  # cond ~ 1e17
    assert spd_solve(sp.csr_matrix((0, 0)), np.zeros(0)).shape == (0,)


def test_solve_free_keeps_boundary_zero(mesh2):
    Vh = FeSpace(mesh2, "lagrange", 2)
    M = mass_matrix(Vh)
    x = solve_free(M, np.ones(Vh.ndofs), Vh)
    assert np.all(x[Vh.boundary] == 0) and np.all(x[Vh.free] != 0)


@pytest.mark.parametrize("kind", ["V", "W"])
def test_dual_norm_of_riesz_image(mesh2, rng, kind):
    ctx = DualNormContext(mesh2, kind, 3)
    u = np.zeros(ctx.space.ndofs)
    u[ctx.space.free] = rng.standard_normal(len(ctx.space.free))
    F = np.zeros_like(u)
    F[ctx.space.free] = ctx.gram @ u[ctx.space.free]
    # ||K u||_* = ||u||_K
    assert ctx.dual_norm(F) == pytest.approx(np.sqrt(u[ctx.space.free] @ F[ctx.space.free]), rel=1e-12)


def test_dual_norm_gram_is_the_mesh_weighted_norm(mesh2):
    ctx = DualNormContext(mesh2, "V", 4)
    # v = x(1-x)y(1-y) lies in the space; exact seminorms from sympy
    v = interpolate(ctx.space, SymbolicField(X * (1 - X) * Y * (1 - Y)))
    c = v.coeffs[ctx.space.free]
    h2 = (np.sqrt(2) / 2) ** 2
    grad2, hess2 = 1 / 45, 22 / 45
    assert c @ ctx.gram @ c == pytest.approx(grad2 + h2 * hess2, rel=1e-12)


def test_dual_norm_rejects_kind(mesh2):
    with pytest.raises(ValueError):
        DualNormContext(mesh2, "X", 2)


def test_identity_solve():
    b = np.arange(5.0)
    assert np.array_equal(spd_solve(sp.eye(5, format="csr"), b), b)


@pytest.mark.parametrize("method", ["direct", "cg"])
def test_random_spd_50(method):
    A, b = random_spd(50, 3)
    x = spd_solve(A, b, method)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


@pytest.mark.parametrize("kind", ["V", "W"])
def test_dual_norm_zero_and_homogeneous(mesh2, rng, kind):
    ctx = DualNormContext(mesh2, kind, 3)
    F = rng.standard_normal(ctx.space.ndofs)
    assert ctx.dual_norm(np.zeros_like(F)) == 0.0
    assert ctx.dual_norm(2 * F) == pytest.approx(2 * ctx.dual_norm(F), rel=1e-13)
    assert ctx.dual_norm(-F) == pytest.approx(ctx.dual_norm(F), rel=1e-13)
