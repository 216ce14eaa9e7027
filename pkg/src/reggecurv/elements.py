"""Reference finite elements built in exact rational arithmetic.

Every element uses moment degrees of freedom that are invariant under affine
pullback (vertex values, edge moments against shifted Legendre polynomials in
the edge parameter, interior moments on the reference triangle against a
Bernstein basis).  The nodal basis is obtained by exact inversion of the
degree-of-freedom matrix and is stored numerically as Bernstein coefficients.

Local dof ordering: vertex dofs (vertices 0, 1, 2), edge dofs (edges 0, 1, 2),
then interior dofs.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial

import numpy as np

from .polyquad import bernstein, multi_indices

KINDS = ("lagrange", "nedelec", "regge", "dg", "vlagrange")

# exact polynomials in (xi, eta): dict (a, b) -> Fraction
Poly = dict


def _padd(p: Poly, q: Poly, s=1) -> Poly:
    out = dict(p)
    for k, v in q.items():
        out[k] = out.get(k, 0) + s * v
    return {k: v for k, v in out.items() if v != 0}


def _pscale(p: Poly, c) -> Poly:
    return {k: c * v for k, v in p.items() if c * v != 0}


def _pmul(p: Poly, q: Poly) -> Poly:
    out: Poly = {}
    for (a, b), u in p.items():
        for (c, d), w in q.items():
            key = (a + c, b + d)
            out[key] = out.get(key, 0) + u * w
    return {k: v for k, v in out.items() if v != 0}


def _pdiff(p: Poly, var: int) -> Poly:
    out: Poly = {}
    for (a, b), v in p.items():
        if var == 0 and a > 0:
            out[(a - 1, b)] = out.get((a - 1, b), 0) + a * v
        elif var == 1 and b > 0:
            out[(a, b - 1)] = out.get((a, b - 1), 0) + b * v
    return out


def _mono(a: int, b: int) -> Poly:
    return {(a, b): Fraction(1)}


def _bern_poly(alpha) -> Poly:
    """Exact Bernstein polynomial K!/alpha! lambda^alpha in (xi, eta)."""
    a0, a1, a2 = alpha
    K = a0 + a1 + a2
    lam0 = {(0, 0): Fraction(1), (1, 0): Fraction(-1), (0, 1): Fraction(-1)}
    p: Poly = {(a1, a2): Fraction(factorial(K), factorial(a0) * factorial(a1) * factorial(a2))}
    for _ in range(a0):
        p = _pmul(p, lam0)
    return p


def _ref_integral(p: Poly) -> Fraction:
    return sum(
        (v * Fraction(factorial(a) * factorial(b), factorial(a + b + 2)) for (a, b), v in p.items()),
        Fraction(0),
    )


@lru_cache(maxsize=None)
def _legendre01(j: int) -> tuple:
    """Coefficients (in l) of the shifted Legendre polynomial P_j(2l - 1)."""
    return tuple(
        Fraction((-1) ** (j + c) * comb(j, c) * comb(j + c, c)) for c in range(j + 1)
    )


def _edge_integral(p: Poly, k: int, q: tuple) -> Fraction:
    """int_0^1 p(gamma_k(l)) q(l) dl along reference edge k."""
    tot = Fraction(0)
    for (a, b), v in p.items():
        for c, qc in enumerate(q):
            if qc == 0:
                continue
            if k == 0:  # (1,0) -> (0,1): xi = 1 - l, eta = l
                val = Fraction(factorial(a) * factorial(b + c), factorial(a + b + c + 1))
            elif k == 1:  # (0,0) -> (0,1)
                if a:
                    continue
                val = Fraction(1, b + c + 1)
            else:  # (0,0) -> (1,0)
                if b:
                    continue
                val = Fraction(1, a + c + 1)
            tot += v * qc * val
    return tot


def _point_value(p: Poly, vertex: int) -> Fraction:
    if vertex == 0:
        return p.get((0, 0), Fraction(0))
    if vertex == 1:
        return sum((v for (a, b), v in p.items() if b == 0), Fraction(0))
    return sum((v for (a, b), v in p.items() if a == 0), Fraction(0))


# reference edge vectors (higher local vertex minus lower)
_EDGE_VEC = ((-1, 1), (0, 1), (1, 0))


def _monomials(k: int) -> list[Poly]:
    if k < 0:
        return []
    return [_mono(a, d - a) for d in range(k + 1) for a in range(d, -1, -1)]


def _bern_tests(k: int) -> list[Poly]:
    if k < 0:
        return []
    return [_bern_poly(al) for al in multi_indices(k)]


def _solve_exact(A: list[list[Fraction]]) -> list[list[Fraction]]:
    """Inverse of a square rational matrix by Gauss-Jordan elimination."""
    n = len(A)
    M = [list(row) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(A)]
    for c in range(n):
        piv = next((r for r in range(c, n) if M[r][c] != 0), None)
        if piv is None:
            raise ArithmeticError("degree-of-freedom matrix is singular")
        M[c], M[piv] = M[piv], M[c]
        inv = 1 / M[c][c]
        M[c] = [v * inv for v in M[c]]
        for r in range(n):
            if r != c and M[r][c] != 0:
                f = M[r][c]
                Mr, Mc = M[r], M[c]
                M[r] = [x - f * y for x, y in zip(Mr, Mc)]
    return [row[n:] for row in M]


def _to_bernstein(p: Poly, K: int) -> list[Fraction]:
    """Coefficients of ``p`` (degree <= K) in the degree-K Bernstein basis."""
    index = {al: i for i, al in enumerate(multi_indices(K))}
    out = [Fraction(0)] * len(index)
    fK = factorial(K)
    for (a, b), v in p.items():
        m = K - a - b
        if m < 0:
            raise ValueError("polynomial degree exceeds Bernstein degree")
        for i in range(m + 1):
            for j in range(m + 1 - i):
                l = m - i - j
                al = (i, a + j, b + l)
                mult = Fraction(factorial(m), factorial(i) * factorial(j) * factorial(l))
                out[index[al]] += v * mult * Fraction(
                    factorial(al[0]) * factorial(al[1]) * factorial(al[2]), fK
                )
    return out


@dataclass(frozen=True, eq=False)
class RefElement:
    """Reference element with exact basis polynomials and numeric Bernstein tables."""

    kind: str
    degree: int
    ncomp: int
    entity_dofs: tuple  # dofs per vertex, per edge, interior
    bern_degree: int
    coef: np.ndarray  # (nloc, ncomp, nbern)
    basis: tuple  # exact component polynomials of each basis function
    dof_functionals: tuple

    @property
    def ndofs(self) -> int:
        return len(self.basis)

    def tabulate(self, xi: np.ndarray, nderiv: int = 0):
        """Values (..., nloc, ncomp) and optional reference derivatives."""
        B = bernstein(self.bern_degree)
        out = [np.einsum("...p,ncp->...nc", B.values(xi), self.coef)]
        if nderiv >= 1:
            out.append(np.einsum("...pa,ncp->...nca", B.gradients(xi), self.coef))
        if nderiv >= 2:
            out.append(np.einsum("...pab,ncp->...ncab", B.hessians(xi), self.coef))
        return out

    def apply_dofs(self, fn) -> list[Fraction]:
        """Evaluate all dof functionals on an exact component tuple."""
        return [phi(fn) for phi in self.dof_functionals]


def _scalar_dofs(k: int, comp: int = 0, ncomp: int = 1):
    """Lagrange-type dofs acting on component ``comp``."""
    vert, edge, inter = [], [[], [], []], []
    for i in range(3):
        vert.append(lambda f, i=i: _point_value(f[comp], i))
    for e in range(3):
        for j in range(k - 1):
            edge[e].append(lambda f, e=e, j=j: _edge_integral(f[comp], e, _legendre01(j)))
    for t in _bern_tests(k - 3):
        inter.append(lambda f, t=t: _ref_integral(_pmul(f[comp], t)))
    return vert, edge, inter


def _build(kind: str, k: int) -> RefElement:
    zero: Poly = {}
    if kind == "lagrange":
        if k < 1:
            raise ValueError("Lagrange degree must be >= 1")
        ncomp, K = 1, k
        prime = [(m,) for m in _monomials(k)]
        vert, edge, inter = _scalar_dofs(k)
        vdofs = [[vert[i]] for i in range(3)]
    elif kind == "vlagrange":
        if k < 1:
            raise ValueError("Lagrange degree must be >= 1")
        ncomp, K = 2, k
        prime = [(m, zero) for m in _monomials(k)] + [(zero, m) for m in _monomials(k)]
        v0, e0, i0 = _scalar_dofs(k, 0, 2)
        v1, e1, i1 = _scalar_dofs(k, 1, 2)
        vdofs = [[v0[i], v1[i]] for i in range(3)]
        edge = [e0[e] + e1[e] for e in range(3)]
        inter = i0 + i1
    elif kind == "nedelec":
        if k < 1:
            raise ValueError("Nedelec degree must be >= 1")
        ncomp, K = 2, k
        prime = [(m, zero) for m in _monomials(k - 1)] + [(zero, m) for m in _monomials(k - 1)]
        for a in range(k):
            m = _mono(a, k - 1 - a)
            prime.append((_pmul(m, {(0, 1): Fraction(-1)}), _pmul(m, {(1, 0): Fraction(1)})))
        vdofs = [[], [], []]
        edge = [[], [], []]
        for e in range(3):
            ex, ey = _EDGE_VEC[e]
            for j in range(k):
                edge[e].append(
                    lambda f, e=e, j=j, ex=ex, ey=ey: _edge_integral(
                        _padd(_pscale(f[0], ex), _pscale(f[1], ey)), e, _legendre01(j)
                    )
                )
        inter = []
        for c in range(2):
            for t in _bern_tests(k - 2):
                inter.append(lambda f, t=t, c=c: _ref_integral(_pmul(f[c], t)))
    elif kind == "regge":
        if k < 0:
            raise ValueError("Regge degree must be >= 0")
        ncomp, K = 3, k
        mons = _monomials(k)
        prime = (
            [(m, zero, zero) for m in mons]
            + [(zero, m, zero) for m in mons]
            + [(zero, zero, m) for m in mons]
        )
        vdofs = [[], [], []]
        edge = [[], [], []]
        for e in range(3):
            ex, ey = _EDGE_VEC[e]
            for j in range(k + 1):
                edge[e].append(
                    lambda f, e=e, j=j, ex=ex, ey=ey: _edge_integral(
                        _padd(
                            _padd(_pscale(f[0], ex * ex), _pscale(f[1], 2 * ex * ey)),
                            _pscale(f[2], ey * ey),
                        ),
                        e,
                        _legendre01(j),
                    )
                )
        inter = []
        for c, w in ((0, 1), (1, 2), (2, 1)):
            for t in _bern_tests(k - 1):
                inter.append(lambda f, t=t, c=c, w=w: w * _ref_integral(_pmul(f[c], t)))
    elif kind == "dg":
        if k < 0:
            raise ValueError("degree must be >= 0")
        ncomp, K = 1, k
        prime = [(m,) for m in _monomials(k)]
        vdofs = [[], [], []]
        edge = [[], [], []]
        inter = [lambda f, t=t: _ref_integral(_pmul(f[0], t)) for t in _bern_tests(k)]
    else:
        raise ValueError(f"unknown element kind {kind!r}")

    functionals = [phi for vd in vdofs for phi in vd] + [phi for ed in edge for phi in ed] + inter
    if len(functionals) != len(prime):
        raise AssertionError("dof count does not match space dimension")
    A = [[phi(p) for p in prime] for phi in functionals]
    C = _solve_exact(A)  # columns: coefficients of nodal basis in the prime basis
    n = len(prime)
    basis = []
    for j in range(n):
        comps = []
        for c in range(ncomp):
            acc: Poly = {}
            for p in range(n):
                if C[p][j] != 0 and prime[p][c]:
                    acc = _padd(acc, _pscale(prime[p][c], C[p][j]))
            comps.append(acc)
        basis.append(tuple(comps))
    nb = len(multi_indices(K))
    coef = np.zeros((n, ncomp, nb))
    for j, fn in enumerate(basis):
        for c in range(ncomp):
            coef[j, c] = [float(x) for x in _to_bernstein(fn[c], K)]
    ent = (len(vdofs[0]), len(edge[0]), len(inter))
    return RefElement(kind, k, ncomp, ent, K, coef, tuple(basis), tuple(functionals))


@lru_cache(maxsize=None)
def ref_element(kind: str, degree: int) -> RefElement:
    return _build(kind, int(degree))


def _grad(fn) -> tuple:
    return (_pdiff(fn[0], 0), _pdiff(fn[0], 1))


def _curl(fn) -> tuple:
    return (_padd(_pdiff(fn[1], 0), _pdiff(fn[0], 1), -1),)


@lru_cache(maxsize=None)
def ref_d0(k: int) -> tuple:
    """Exact matrix of d: P_k (Lagrange) -> P^-_k Lambda^1 on the reference element."""
    V = ref_element("lagrange", k)
    W = ref_element("nedelec", k)
    cols = [W.apply_dofs(_grad(b)) for b in V.basis]
    return tuple(tuple(cols[j][i] for j in range(len(cols))) for i in range(W.ndofs))


@lru_cache(maxsize=None)
def ref_d1(k: int) -> tuple:
    """Exact matrix of d: P^-_k Lambda^1 -> P_{k-1} Lambda^2 on the reference element."""
    W = ref_element("nedelec", k)
    X = ref_element("dg", k - 1)
    cols = [X.apply_dofs(_curl(b)) for b in W.basis]
    return tuple(tuple(cols[j][i] for j in range(len(cols))) for i in range(X.ndofs))


def exact_matrix(rows: tuple) -> np.ndarray:
    return np.array([[float(v) for v in row] for row in rows])
