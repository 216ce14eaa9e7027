"""Finite element spaces on a triangle mesh.

Kinds: ``lagrange`` (scalar V), ``nedelec`` (first-kind edge one-forms W),
``dg`` (discontinuous two-forms X), ``vlagrange`` (vector fields U) and
``regge`` (symmetric (0,2)-tensors).  Each cell uses the affine map from the
reference triangle whose reference vertices are the cell's vertices sorted by
global index; edge parametrizations then agree from both sides and the
natural dofs glue without sign bookkeeping.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .elements import exact_matrix, ref_d0, ref_d1, ref_element
from .mesh import Mesh
from .polyquad import REF_EDGES, REF_VERTICES, edge_rule, ref_edge_points, tri_rule

VALUE_SHAPE = {"lagrange": (), "dg": (), "nedelec": (2,), "vlagrange": (2,), "regge": (2, 2)}
ALIASES = {
    "lagrange-scalar": "lagrange",
    "edge-oneform": "nedelec",
    "dg-twoform": "dg",
    "lagrange-vector": "vlagrange",
}


class Geometry:
    """Affine maps of all cells, with reference vertices sorted by global index."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        s = np.sort(mesh.triangles, axis=1)
        self.sorted = s
        X = mesh.vertices
        self.x0 = X[s[:, 0]]
        J = np.empty((len(s), 2, 2))
        J[:, :, 0] = X[s[:, 1]] - X[s[:, 0]]
        J[:, :, 1] = X[s[:, 2]] - X[s[:, 0]]
        self.J = J
        self.detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        self.Jinv = np.linalg.inv(J)
        # global edge of the sorted-local edge k
        le = np.empty_like(s)
        lookup = {tuple(e): i for i, e in enumerate(mesh.edges.tolist())}
        for k, (a, b) in enumerate(REF_EDGES):
            le[:, k] = [lookup[(int(u), int(v))] for u, v in zip(s[:, a], s[:, b])]
        self.local_edges = le
        self.h_T = mesh.diameters()

    def points(self, cells: np.ndarray, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if xi.ndim == 2:
            return self.x0[cells][:, None, :] + np.einsum("cab,qb->cqa", self.J[cells], xi)
        return self.x0[cells][:, None, :] + np.einsum("cab,cqb->cqa", self.J[cells], xi)

    def vertex_ref(self, cell: int, vertex: int) -> np.ndarray:
        k = int(np.flatnonzero(self.sorted[cell] == vertex)[0])
        return REF_VERTICES[k]

    @cached_property
    def sides(self) -> "Sides":
        return Sides(self)


class Sides:
    """All (cell, local edge) pairs with Euclidean edge data.

    For side ``i``: ``t`` is the edge vector in global orientation (lower to
    higher vertex index), ``nu`` the outward Euclidean unit normal of the
    cell, and ``ccw`` = +1 when ``t`` runs counterclockwise around the cell.
    """

    def __init__(self, geom: Geometry):
        mesh = geom.mesh
        nt = mesh.n_triangles
        self.cells = np.repeat(np.arange(nt), 3)
        self.local = np.tile(np.arange(3), nt)
        self.edges = geom.local_edges.ravel()
        X = mesh.vertices
        a = X[mesh.edges[self.edges, 0]]
        b = X[mesh.edges[self.edges, 1]]
        self.t = b - a
        opp = X[geom.sorted[self.cells, self.local]]
        nu = np.column_stack([self.t[:, 1], -self.t[:, 0]])
        nu /= np.linalg.norm(nu, axis=1)[:, None]
        flip = np.einsum("ia,ia->i", nu, opp - a) > 0
        nu[flip] *= -1
        self.nu = nu
        self.ccw = np.sign(nu[:, 0] * self.t[:, 1] - nu[:, 1] * self.t[:, 0]).astype(int)
        self.interior = ~mesh.boundary_edges[self.edges]

    def xi(self, ell: np.ndarray, which=None) -> np.ndarray:
        loc = self.local if which is None else self.local[which]
        table = np.stack([ref_edge_points(k, ell) for k in range(3)])
        return table[loc]


@lru_cache(maxsize=64)
def geometry(mesh: Mesh) -> Geometry:
    return Geometry(mesh)


class FeSpace:
    """Global dof layout and physical basis tabulation for one element kind."""

    def __init__(self, mesh: Mesh, kind: str, degree: int):
        kind = ALIASES.get(kind, kind)
        self.mesh = mesh
        self.kind = kind
        self.degree = int(degree)
        self.element = ref_element(kind, self.degree)
        self.geom = geometry(mesh)
        self.value_shape = VALUE_SHAPE[kind]
        nvd, ned, nid = self.element.entity_dofs
        nv, ne, nt = mesh.n_vertices, mesh.n_edges, mesh.n_triangles
        self.offsets = (0, nv * nvd, nv * nvd + ne * ned)
        self.ndofs = nv * nvd + ne * ned + nt * nid
        g = self.geom
        cols = []
        for i in range(3):
            cols.append(g.sorted[:, i : i + 1] * nvd + np.arange(nvd))
        for k in range(3):
            cols.append(self.offsets[1] + g.local_edges[:, k : k + 1] * ned + np.arange(ned))
        cols.append(self.offsets[2] + np.arange(nt)[:, None] * nid + np.arange(nid))
        self.cell_dofs = np.hstack(cols).astype(np.int64)
        bmask = np.zeros(self.ndofs, dtype=bool)
        if kind in ("lagrange", "vlagrange", "nedelec"):
            bv = np.flatnonzero(mesh.boundary_vertices)
            be = np.flatnonzero(mesh.boundary_edges)
            bmask[(bv[:, None] * nvd + np.arange(nvd)).ravel()] = True
            bmask[(self.offsets[1] + be[:, None] * ned + np.arange(ned)).ravel()] = True
        self.boundary = bmask
        self.free = np.flatnonzero(~bmask)

    def __repr__(self) -> str:
        return f"FeSpace({self.kind}, degree={self.degree}, ndofs={self.ndofs})"

    def vertex_dofs(self, v) -> np.ndarray:
        nvd = self.element.entity_dofs[0]
        return np.asarray(v)[..., None] * nvd + np.arange(nvd)

    def edge_dofs(self, e) -> np.ndarray:
        ned = self.element.entity_dofs[1]
        return self.offsets[1] + np.asarray(e)[..., None] * ned + np.arange(ned)

    def cell_interior_dofs(self, t) -> np.ndarray:
        nid = self.element.entity_dofs[2]
        return self.offsets[2] + np.asarray(t)[..., None] * nid + np.arange(nid)

    # --- tabulation -------------------------------------------------------
    def tabulate(self, cells: np.ndarray, xi: np.ndarray, nderiv: int = 0) -> list[np.ndarray]:
        """Physical basis values and derivatives at reference points.

        ``xi`` is (nq, 2) or (nc, nq, 2).  Output arrays are shaped
        (nc, nq, nloc, *value_shape, [2, [2]]), derivative axes last.
        """
        cells = np.asarray(cells)
        nc = len(cells)
        ref = self.element.tabulate(xi, nderiv)
        if np.asarray(xi).ndim == 2:
            ref = [np.broadcast_to(a, (nc,) + a.shape) for a in ref]
        K = self.geom.Jinv[cells]
        kind = self.kind
        if kind == "dg":
            scale = 1.0 / self.geom.detJ[cells]
            ref = [a * scale.reshape((-1,) + (1,) * (a.ndim - 1)) for a in ref]
        out = []
        if kind in ("lagrange", "vlagrange", "dg"):
            if kind != "vlagrange":
                ref = [a[:, :, :, 0] for a in ref]
            out.append(ref[0])
            if nderiv >= 1:
                out.append(np.einsum("cba,cq...b->cq...a", K, ref[1]))
            if nderiv >= 2:
                out.append(np.einsum("cba,cdg,cq...bd->cq...ag", K, K, ref[2], optimize=True))
            return out
        if kind == "nedelec":
            out.append(np.einsum("cai,cqna->cqni", K, ref[0]))
            if nderiv >= 1:
                out.append(np.einsum("cai,cbk,cqnab->cqnik", K, K, ref[1], optimize=True))
            if nderiv >= 2:
                out.append(
                    np.einsum("cai,cbk,cdl,cqnabd->cqnikl", K, K, K, ref[2], optimize=True)
                )
            return out
        # regge: components (11, 12, 22) -> symmetric matrix
        full = [_sym_full(a) for a in ref]
        out.append(np.einsum("cai,cbj,cqnab->cqnij", K, K, full[0], optimize=True))
        if nderiv >= 1:
            out.append(
                np.einsum("cai,cbj,cdk,cqnabd->cqnijk", K, K, K, full[1], optimize=True)
            )
        if nderiv >= 2:
            out.append(
                np.einsum(
                    "cai,cbj,cdk,cel,cqnabde->cqnijkl", K, K, K, K, full[2], optimize=True
                )
            )
        return out

    def function(self, coeffs=None) -> "FeFunction":
        if coeffs is None:
            coeffs = np.zeros(self.ndofs)
        return FeFunction(self, np.asarray(coeffs, dtype=float))

    # --- assembly helpers ---------------------------------------------------
    def scatter(self, cells: np.ndarray, local: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """Accumulate cell-local vectors (nc, nloc) into a global vector."""
        if out is None:
            out = np.zeros(self.ndofs)
        idx = self.cell_dofs[cells].ravel()
        out += np.bincount(idx, weights=np.asarray(local).ravel(), minlength=self.ndofs)
        return out

    def default_qdeg(self) -> int:
        return 2 * self.degree + 4


def _sym_full(a: np.ndarray) -> np.ndarray:
    """(c, q, nloc, 3, *d) component layout to (c, q, nloc, 2, 2, *d)."""
    s11, s12, s22 = a[:, :, :, 0], a[:, :, :, 1], a[:, :, :, 2]
    return np.stack([np.stack([s11, s12], axis=3), np.stack([s12, s22], axis=3)], axis=3)


@dataclass
class FeFunction:
    """Coefficient vector over an FeSpace."""

    space: FeSpace
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != (self.space.ndofs,):
            raise ValueError("coefficient length does not match space dimension")

    @property
    def shape(self) -> tuple:
        return self.space.value_shape

    @property
    def mesh(self) -> Mesh:
        return self.space.mesh

    def evaluate(self, geom, cells, xi, nderiv: int = 0) -> list[np.ndarray]:
        cells = np.asarray(cells)
        tab = self.space.tabulate(cells, xi, nderiv)
        u = self.coeffs[self.space.cell_dofs[cells]]
        return [np.einsum("cn,cqn...->cq...", u, t) for t in tab]

    def __add__(self, other: "FeFunction") -> "FeFunction":
        return type(self)(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other: "FeFunction") -> "FeFunction":
        return type(self)(self.space, self.coeffs - other.coeffs)

    def __mul__(self, c: float) -> "FeFunction":
        return type(self)(self.space, self.coeffs * c)

    __rmul__ = __mul__


FeOneForm = FeFunction
FeTwoForm = FeFunction
FeVectorField = FeFunction


@dataclass
class Functional:
    """Element of a dual space, represented by its action on each basis function."""

    space: FeSpace
    load: np.ndarray

    def __post_init__(self):
        self.load = np.asarray(self.load, dtype=float).copy()
        if self.load.shape != (self.space.ndofs,):
            raise ValueError("load length does not match space dimension")
        self.load[self.space.boundary] = 0.0

    def __call__(self, f: FeFunction) -> float:
        return float(self.load @ f.coeffs)

    def __add__(self, other: "Functional") -> "Functional":
        return Functional(self.space, self.load + other.load)

    def __sub__(self, other: "Functional") -> "Functional":
        return Functional(self.space, self.load - other.load)

    def __mul__(self, c: float) -> "Functional":
        return Functional(self.space, self.load * c)

    __rmul__ = __mul__


# --- exterior derivative ------------------------------------------------------
def _dedupe_coo(rows, cols, vals, shape) -> sp.csr_matrix:
    rows, cols, vals = np.ravel(rows), np.ravel(cols), np.ravel(vals)
    keep = vals != 0
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    key = rows * shape[1] + cols
    _, first = np.unique(key, return_index=True)
    return sp.csr_matrix((vals[first], (rows[first], cols[first])), shape=shape)


def d0_matrix(Vh: FeSpace, Wh: FeSpace) -> sp.csr_matrix:
    """Matrix of d: V_h^{k} -> W_h^{k} in the nodal bases."""
    if Vh.kind != "lagrange" or Wh.kind != "nedelec" or Vh.degree != Wh.degree:
        raise ValueError("d0 needs Lagrange and Nedelec spaces of the same degree")
    if Vh.mesh is not Wh.mesh:
        raise ValueError("spaces live on different meshes")
    D = exact_matrix(ref_d0(Vh.degree))
    rows = np.broadcast_to(Wh.cell_dofs[:, :, None], (Vh.mesh.n_triangles,) + D.shape)
    cols = np.broadcast_to(Vh.cell_dofs[:, None, :], rows.shape)
    vals = np.broadcast_to(D, rows.shape)
    return _dedupe_coo(rows, cols, vals, (Wh.ndofs, Vh.ndofs))


def d1_matrix(Wh: FeSpace, Xh: FeSpace) -> sp.csr_matrix:
    """Matrix of d: W_h^{k} -> X_h^{k-1} in the nodal bases."""
    if Wh.kind != "nedelec" or Xh.kind != "dg" or Xh.degree != Wh.degree - 1:
        raise ValueError("d1 needs Nedelec degree k and dg degree k-1")
    if Wh.mesh is not Xh.mesh:
        raise ValueError("spaces live on different meshes")
    D = exact_matrix(ref_d1(Wh.degree))
    rows = np.broadcast_to(Xh.cell_dofs[:, :, None], (Wh.mesh.n_triangles,) + D.shape)
    cols = np.broadcast_to(Wh.cell_dofs[:, None, :], rows.shape)
    vals = np.broadcast_to(D, rows.shape)
    return _dedupe_coo(rows, cols, vals, (Xh.ndofs, Wh.ndofs))


def exact_d1d0(mesh: Mesh, k: int) -> dict:
    """Nonzero entries of D1 @ D0 computed in rational arithmetic."""
    Vh, Wh, Xh = FeSpace(mesh, "lagrange", k), FeSpace(mesh, "nedelec", k), FeSpace(mesh, "dg", k - 1)
    D0, D1 = ref_d0(k), ref_d1(k)
    d0: dict = {}
    for t in range(mesh.n_triangles):
        for i, w in enumerate(Wh.cell_dofs[t]):
            for j, v in enumerate(Vh.cell_dofs[t]):
                if D0[i][j] != 0:
                    d0.setdefault(int(w), {})[int(v)] = D0[i][j]
    out: dict = {}
    for t in range(mesh.n_triangles):
        for i, x in enumerate(Xh.cell_dofs[t]):
            acc: dict = {}
            for j, w in enumerate(Wh.cell_dofs[t]):
                c = D1[i][j]
                if c == 0:
                    continue
                for v, val in d0.get(int(w), {}).items():
                    acc[v] = acc.get(v, Fraction(0)) + c * val
            for v, val in acc.items():
                if val != 0:
                    out[(int(x), v)] = val
    return out


# --- metric-weighted mass matrices ---------------------------------------------
def _metric_values(g, geom, cells, xi) -> np.ndarray:
    if g is None:
        shape = (len(cells),) + (np.asarray(xi).shape[-2],) + (2, 2)
        return np.broadcast_to(np.eye(2), shape)
    return g.evaluate(geom, cells, xi, 0)[0]


def mass_matrix(space: FeSpace, g=None, qdeg: int | None = None) -> sp.csr_matrix:
    """Metric-weighted L2 Gram matrix of a space (g = None means Euclidean).

    V: int u v omega; W: int g^{-1}(a, b) omega; X: int f h / sqrt(det g) dx;
    U: int g(u, w) omega; Regge: int <s, t>_g omega.
    """
    if qdeg is None:
        qdeg = 2 * space.degree + (_metric_degree(g) + 4 if g is not None else 0)
    rule = tri_rule(qdeg)
    geom = space.geom
    nt = space.mesh.n_triangles
    cells = np.arange(nt)
    gv = _metric_values(g, geom, cells, rule.xi)
    det = gv[..., 0, 0] * gv[..., 1, 1] - gv[..., 0, 1] * gv[..., 1, 0]
    if np.any(det <= 0) or np.any(gv[..., 0, 0] <= 0):
        raise ValueError("metric is not positive definite at a quadrature point")
    G = np.linalg.inv(gv)
    w = rule.weights * np.abs(geom.detJ)[:, None] / 2.0  # (nt, nq)
    phi = space.tabulate(cells, rule.xi, 0)[0]
    kind = space.kind
    if kind == "lagrange":
        wq = w * np.sqrt(det)
        loc = np.einsum("cq,cqi,cqj->cij", wq, phi, phi)
    elif kind == "dg":
        wq = w / np.sqrt(det)
        loc = np.einsum("cq,cqi,cqj->cij", wq, phi, phi)
    elif kind == "nedelec":
        wq = w * np.sqrt(det)
        loc = np.einsum("cq,cqab,cqia,cqjb->cij", wq, G, phi, phi, optimize=True)
    elif kind == "vlagrange":
        wq = w * np.sqrt(det)
        loc = np.einsum("cq,cqab,cqia,cqjb->cij", wq, gv, phi, phi, optimize=True)
    else:
        wq = w * np.sqrt(det)
        loc = np.einsum(
            "cq,cqac,cqbd,cqiab,cqjcd->cij", wq, G, G, phi, phi, optimize=True
        )
    # exact symmetry regardless of summation order inside einsum
    loc = 0.5 * (loc + np.swapaxes(loc, 1, 2))
    return assemble_matrix(space, space, loc)


def _metric_degree(g) -> int:
    return int(getattr(g, "degree", 2) or 0)


def assemble_matrix(rows: FeSpace, cols: FeSpace, local: np.ndarray, cells=None) -> sp.csr_matrix:
    if cells is None:
        cells = np.arange(rows.mesh.n_triangles)
    R = np.broadcast_to(rows.cell_dofs[cells][:, :, None], local.shape)
    C = np.broadcast_to(cols.cell_dofs[cells][:, None, :], local.shape)
    M = sp.coo_matrix((local.ravel(), (R.ravel(), C.ravel())), shape=(rows.ndofs, cols.ndofs))
    return M.tocsr()


def export_coo(matrix, path) -> None:
    """Write a sparse matrix as 'i j value' lines."""
    M = sp.coo_matrix(matrix)
    order = np.lexsort((M.col, M.row))
    with Path(path).open("w") as fh:
        fh.write(f"# {M.shape[0]} {M.shape[1]} {M.nnz}\n")
        for i, j, v in zip(M.row[order], M.col[order], M.data[order]):
            fh.write(f"{i} {j} {v:.17g}\n")


# --- canonical interpolation ------------------------------------------------
def interpolate(space: FeSpace, field, qdeg: int | None = None) -> FeFunction:
    """Canonical interpolant: apply every global dof functional to ``field``.

    ``field`` follows the evaluate(geom, cells, xi, nderiv) protocol and is
    expressed in physical coordinates with the space's value shape.
    """
    geom = space.geom
    mesh = space.mesh
    el = space.element
    nvd, ned, nid = el.entity_dofs
    k = space.degree
    if qdeg is None:
        qdeg = 2 * k + 8
    out = np.zeros(space.ndofs)
    kind = space.kind

    if nvd:
        owner = np.array([s[0] for s in mesh.stars])
        xi = np.stack([geom.vertex_ref(t, v) for v, t in enumerate(owner)])[:, None, :]
        val = field.evaluate(geom, owner, xi, 0)[0][:, 0]  # (nv, *shape)
        out[: mesh.n_vertices * nvd] = val.reshape(mesh.n_vertices, -1).ravel()

    if ned:
        er = edge_rule(qdeg)
        sides = geom.sides
        owner_side = np.full(mesh.n_edges, -1)
        owner_side[sides.edges[::-1]] = np.arange(len(sides.edges))[::-1]
        cells = sides.cells[owner_side]
        xi = sides.xi(er.points, owner_side)
        val = field.evaluate(geom, cells, xi, 0)[0]  # (ne, nq, *shape)
        t = sides.t[owner_side]
        from .elements import _legendre01

        nleg = {"lagrange": k - 1, "vlagrange": k - 1, "nedelec": k, "regge": k + 1}[kind]
        L = np.array(
            [np.polyval([float(c) for c in _legendre01(j)[::-1]], er.points) for j in range(nleg)]
        )  # (nleg, nq)
        if kind == "lagrange":
            mom = np.einsum("eq,q,jq->ej", val, er.weights, L)
        elif kind == "vlagrange":
            mom = np.einsum("eqc,q,jq->ecj", val, er.weights, L).reshape(len(cells), -1)
        elif kind == "nedelec":
            mom = np.einsum("eqa,ea,q,jq->ej", val, t, er.weights, L)
        else:
            mom = np.einsum("eqab,ea,eb,q,jq->ej", val, t, t, er.weights, L)
        out[space.offsets[1] : space.offsets[2]] = mom.ravel()

    if nid:
        rule = tri_rule(qdeg)
        cells = np.arange(mesh.n_triangles)
        val = field.evaluate(geom, cells, rule.xi, 0)[0]
        J = geom.J
        from .elements import _bern_tests

        if kind == "lagrange":
            tests = _tests_numeric(_bern_tests(k - 3), rule.xi)
            mom = np.einsum("cq,q,jq->cj", val, rule.weights / 2, tests)
        elif kind == "vlagrange":
            tests = _tests_numeric(_bern_tests(k - 3), rule.xi)
            mom = np.einsum("cqa,q,jq->caj", val, rule.weights / 2, tests).reshape(len(cells), -1)
        elif kind == "nedelec":
            tests = _tests_numeric(_bern_tests(k - 2), rule.xi)
            ref = np.einsum("cia,cqi->cqa", J, val)
            mom = np.einsum("cqa,q,jq->caj", ref, rule.weights / 2, tests).reshape(len(cells), -1)
        elif kind == "dg":
            tests = _tests_numeric(_bern_tests(k), rule.xi)
            ref = val * geom.detJ[:, None]
            mom = np.einsum("cq,q,jq->cj", ref, rule.weights / 2, tests)
        else:
            tests = _tests_numeric(_bern_tests(k - 1), rule.xi)
            ref = np.einsum("cia,cjb,cqij->cqab", J, J, val)
            comps = np.stack([ref[..., 0, 0], 2 * ref[..., 0, 1], ref[..., 1, 1]], axis=-1)
            mom = np.einsum("cqa,q,jq->caj", comps, rule.weights / 2, tests).reshape(len(cells), -1)
        out[space.offsets[2] :] = mom.ravel()
    return FeFunction(space, out)


def _tests_numeric(polys, xi: np.ndarray) -> np.ndarray:
    x, y = xi[:, 0], xi[:, 1]
    out = np.zeros((len(polys), len(xi)))
    for i, p in enumerate(polys):
        for (a, b), v in p.items():
            out[i] += float(v) * x**a * y**b
    return out


def interp_lagrange_vector(u, Uh: FeSpace, reference=None, qdeg: int | None = None) -> FeFunction:
    """Lagrange interpolant of a vector field.

    The moment dofs are unchanged by a piecewise constant reference metric
    (it only rescales each moment), so ``reference`` is accepted and ignored.
    """
    if Uh.kind != "vlagrange":
        raise ValueError("expected a vector Lagrange space")
    return interpolate(Uh, u, qdeg)


def project_functional(F, space: FeSpace | None = None, g=None, qdeg: int | None = None) -> FeFunction:
    """g-weighted L2 representer of a load over the free dofs of ``space``."""
    from .linalg import solve_free

    if isinstance(F, Functional):
        space, load = F.space, F.load
    else:
        if space is None:
            raise ValueError("a raw load vector needs its space")
        load = np.asarray(F, dtype=float)
    return FeFunction(space, solve_free(mass_matrix(space, g, qdeg), load, space))
