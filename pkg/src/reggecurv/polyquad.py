"""Quadrature rules and Bernstein bases on the reference triangle.

The reference triangle has vertices (0,0), (1,0), (0,1).  Barycentric
coordinates are ordered (1 - xi - eta, xi, eta).  Reference edge ``k`` is the
edge opposite reference vertex ``k`` and is parametrized from its lower to
its higher vertex.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_DEGREE = 60

REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
# local vertex pairs of the edge opposite each vertex, lower index first
REF_EDGES = ((1, 2), (0, 2), (0, 1))


@dataclass(frozen=True)
class TriQuadRule:
    """Quadrature on the reference triangle, weights normalized to sum to 1."""

    points: np.ndarray  # (nq, 3) barycentric
    weights: np.ndarray  # (nq,)
    degree: int

    @property
    def xi(self) -> np.ndarray:
        """Reference coordinates (nq, 2)."""
        return self.points[:, 1:]


@dataclass(frozen=True)
class EdgeQuadRule:
    points: np.ndarray  # (nq,) in [0, 1]
    weights: np.ndarray  # (nq,) summing to 1
    degree: int


@lru_cache(maxsize=None)
def tri_rule(degree: int) -> TriQuadRule:
    """Collapsed Gauss-Jacobi rule exact for polynomials of total degree ``degree``."""
    degree = int(degree)
    if degree < 0 or degree > MAX_DEGREE:
        raise ValueError(f"unsupported triangle quadrature degree {degree}")
    if degree <= 1:
        pts = np.array([[1.0 / 3, 1.0 / 3, 1.0 / 3]])
        return TriQuadRule(pts, np.ones(1), degree)
    n = (degree + 2) // 2
    # weight (1 - u) on [0, 1] for the collapsed direction
    xa, wa = roots_jacobi(n, 1.0, 0.0)
    xb, wb = roots_legendre(n)
    u = (1.0 + xa) / 2.0
    wu = wa / 4.0
    v = (1.0 + xb) / 2.0
    wv = wb / 2.0
    U, V = np.meshgrid(u, v, indexing="ij")
    xi = U.ravel()
    eta = (V * (1.0 - U)).ravel()
    w = np.outer(wu, wv).ravel() * 2.0
    pts = np.column_stack([1.0 - xi - eta, xi, eta])
    return TriQuadRule(pts, w, degree)


@lru_cache(maxsize=None)
def edge_rule(degree: int) -> EdgeQuadRule:
    """Gauss-Legendre rule on [0, 1] exact to ``degree``."""
    degree = int(degree)
    if degree < 0 or degree > 2 * MAX_DEGREE:
        raise ValueError(f"unsupported edge quadrature degree {degree}")
    n = degree // 2 + 1
    x, w = roots_legendre(n)
    return EdgeQuadRule((1.0 + x) / 2.0, w / 2.0, degree)


def ref_edge_points(k: int, ell: np.ndarray) -> np.ndarray:
    """Reference coordinates of points ``ell`` on reference edge ``k``."""
    a, b = REF_EDGES[k]
    pa, pb = REF_VERTICES[a], REF_VERTICES[b]
    ell = np.asarray(ell, dtype=float)
    return pa + ell[..., None] * (pb - pa)


def barycentric(xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    return np.concatenate([1.0 - xi[..., :1] - xi[..., 1:2], xi], axis=-1)


def multi_indices(k: int) -> list[tuple[int, int, int]]:
    """Multi-indices (a0, a1, a2) with a0 + a1 + a2 = k, in a fixed order."""
    out = []
    for a1 in range(k + 1):
        for a2 in range(k + 1 - a1):
            out.append((k - a1 - a2, a1, a2))
    return out


# d lambda_i / d xi_a
_DLAM = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


class PolyBasis:
    """Bernstein basis of degree ``k`` on the reference triangle."""

    def __init__(self, k: int):
        if k < 0:
            raise ValueError("degree must be nonnegative")
        self.degree = k
        self.alphas = np.array(multi_indices(k), dtype=int).reshape(-1, 3)
        self.dim = len(self.alphas)
        fk = factorial(k)
        self._coef = np.array(
            [fk / (factorial(a) * factorial(b) * factorial(c)) for a, b, c in self.alphas]
        )
        index = {tuple(a): i for i, a in enumerate(multi_indices(k - 1))} if k >= 1 else {}
        self._down = np.full((self.dim, 3), -1, dtype=int)
        for i, a in enumerate(self.alphas):
            for j in range(3):
                if a[j] > 0:
                    b = a.copy()
                    b[j] -= 1
                    self._down[i, j] = index[tuple(b)]

    def values(self, xi: np.ndarray) -> np.ndarray:
        lam = barycentric(xi)
        pw = np.prod(lam[..., None, :] ** self.alphas, axis=-1)
        return self._coef * pw

    def _dlam(self, xi: np.ndarray) -> np.ndarray:
        """Derivatives with respect to the three barycentric coordinates."""
        shape = np.shape(xi)[:-1]
        out = np.zeros(shape + (self.dim, 3))
        if self.degree == 0:
            return out
        low = _basis(self.degree - 1).values(xi)
        for j in range(3):
            idx = self._down[:, j]
            ok = idx >= 0
            out[..., ok, j] = self.degree * low[..., idx[ok]]
        return out

    def gradients(self, xi: np.ndarray) -> np.ndarray:
        return self._dlam(xi) @ _DLAM

    def hessians(self, xi: np.ndarray) -> np.ndarray:
        shape = np.shape(xi)[:-1]
        out = np.zeros(shape + (self.dim, 2, 2))
        if self.degree < 2:
            return out
        lowd = _basis(self.degree - 1)._dlam(xi)  # (..., n_{k-1}, 3)
        for j in range(3):
            idx = self._down[:, j]
            ok = idx >= 0
            # d/d lambda_i d/d lambda_j
            dd = np.zeros(shape + (self.dim, 3))
            dd[..., ok, :] = self.degree * lowd[..., idx[ok], :]
            out += np.einsum("...ni,ia,b->...nab", dd, _DLAM, _DLAM[j])
        return out

    def eval(self, xi: np.ndarray):
        """Values, gradients and Hessians in reference coordinates."""
        return self.values(xi), self.gradients(xi), self.hessians(xi)


@lru_cache(maxsize=None)
def _basis(k: int) -> PolyBasis:
    return PolyBasis(k)


def bernstein(k: int) -> PolyBasis:
    return _basis(k)


def eval_basis(basis: PolyBasis, xi: np.ndarray):
    """(values, gradients, Hessians) of ``basis`` at reference points ``xi``."""
    return basis.eval(np.asarray(xi, dtype=float))


def monomial_integral(a: int, b: int) -> float:
    """Integral of xi^a eta^b over the reference triangle."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)
