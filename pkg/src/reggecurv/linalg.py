"""Sparse SPD solves and dual-norm proxies over enriched spaces."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fespace import FeSpace, assemble_matrix
from .mesh import Mesh
from .polyquad import tri_rule


class SolverError(RuntimeError):
    pass


def spd_solve(A, b, method: str = "direct", rtol: float = 1e-12) -> np.ndarray:
    """Solve A x = b for sparse SPD A and check the relative residual."""
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] == 0:
        return np.zeros(0)
    if method == "direct":
        x = spla.splu(A).solve(b)
    elif method == "cg":
        x, info = spla.cg(A, b, rtol=rtol * 1e-2, maxiter=10 * A.shape[0])
        if info != 0:
            raise SolverError(f"conjugate gradients did not converge (info={info})")
    else:
        raise ValueError(f"unknown method {method!r}")
    nb = np.linalg.norm(b)
    res = np.linalg.norm(A @ x - b)
    if nb > 0 and res > rtol * nb * max(1.0, np.sqrt(A.shape[0])):
        raise SolverError(f"residual {res / nb:.2e} above tolerance")
    return x


def solve_free(M, load: np.ndarray, space: FeSpace, method: str = "direct") -> np.ndarray:
    """Solve the system restricted to the free dofs; constrained dofs stay zero."""
    free = space.free
    M = sp.csr_matrix(M)
    x = np.zeros(space.ndofs)
    x[free] = spd_solve(M[free][:, free], np.asarray(load)[free], method)
    return x


def _seminorm_matrix(space: FeSpace, order: int, weights: np.ndarray, qdeg: int) -> sp.csr_matrix:
    rule = tri_rule(qdeg)
    cells = np.arange(space.mesh.n_triangles)
    tab = space.tabulate(cells, rule.xi, order)[order]
    w = rule.weights[None, :] * (np.abs(space.geom.detJ) / 2 * weights)[:, None]
    T = tab.reshape(tab.shape[0], tab.shape[1], tab.shape[2], -1)
    loc = np.einsum("cq,cqix,cqjx->cij", w, T, T, optimize=True)
    return assemble_matrix(space, space, loc)


class DualNormContext:
    """Riesz representer norms on an enriched space (Euclidean, mesh-weighted).

    ``V``: |v|_1^2 + sum_T h_T^2 |v|_{2,T}^2 on Lagrange of the given degree.
    ``W``: ||a||_0^2 + sum_T h_T^2 |a|_{1,T}^2 on first-kind edge elements.
    The dual norm of a load F is sqrt(F^T K^{-1} F) over free dofs.
    """

    def __init__(self, mesh: Mesh, kind: str, degree: int):
        kind = kind.upper()
        if kind not in ("V", "W"):
            raise ValueError("kind must be 'V' or 'W'")
        self.kind = kind
        self.space = FeSpace(mesh, "lagrange" if kind == "V" else "nedelec", degree)
        h2 = mesh.diameters() ** 2
        one = np.ones(mesh.n_triangles)
        q = 2 * degree
        if kind == "V":
            K = _seminorm_matrix(self.space, 1, one, q) + _seminorm_matrix(self.space, 2, h2, q)
        else:
            K = _seminorm_matrix(self.space, 0, one, q) + _seminorm_matrix(self.space, 1, h2, q)
        free = self.space.free
        self.gram = sp.csc_matrix(K[free][:, free])
        self._lu = spla.splu(self.gram)

    def dual_norm(self, load: np.ndarray) -> float:
        F = np.asarray(load)[self.space.free]
        y = self._lu.solve(F)
        return float(np.sqrt(max(F @ y, 0.0)))


def dual_norm(load: np.ndarray, ctx: DualNormContext) -> float:
    return ctx.dual_norm(load)
