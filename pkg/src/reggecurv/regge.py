"""Regge fields: piecewise polynomial symmetric (0,2)-tensors with single-valued
tangential-tangential traces, and the canonical interpolant onto them."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .elements import _legendre01
from .fespace import FeFunction, FeSpace, geometry
from .geom import MetricJet, det2, inv2
from .mesh import Mesh
from .polyquad import bernstein, edge_rule, tri_rule


class ReggeField(FeFunction):
    """Element of the Regge space of degree r on a mesh."""

    @classmethod
    def zeros(cls, mesh: Mesh, r: int) -> "ReggeField":
        S = FeSpace(mesh, "regge", r)
        return cls(S, np.zeros(S.ndofs))

    @property
    def degree(self) -> int:
        return self.space.degree

    def metric_jet(self, triangle: int, bary) -> MetricJet:
        """Exact jet of the local polynomial at a barycentric point of ``triangle``.

        Barycentric coordinates refer to the triangle's stored vertex order.
        """
        mesh = self.mesh
        geom = geometry(mesh)
        x = np.asarray(bary, dtype=float) @ mesh.vertices[mesh.triangles[triangle]]
        xi = geom.Jinv[triangle] @ (x - geom.x0[triangle])
        vals = self.evaluate(geom, np.array([triangle]), xi[None, :], 2)
        jet = MetricJet(vals[0][0, 0], vals[1][0, 0], vals[2][0, 0])
        if det2(jet.g) <= 0 or jet.g[0, 0] <= 0:
            raise ValueError(f"not a Regge metric at triangle {triangle}")
        return jet

    def to_json(self) -> dict:
        S = self.space
        ne, nt = self.mesh.n_edges, self.mesh.n_triangles
        return {
            "degree": self.degree,
            "edges": self.coeffs[S.offsets[1] : S.offsets[2]].reshape(ne, -1).tolist(),
            "interiors": self.coeffs[S.offsets[2] :].reshape(nt, -1).tolist(),
        }

    @classmethod
    def from_json(cls, mesh: Mesh, doc) -> "ReggeField":
        if isinstance(doc, (str, Path)):
            doc = json.loads(Path(doc).read_text())
        S = FeSpace(mesh, "regge", int(doc["degree"]))
        edges = np.asarray(doc["edges"], dtype=float).reshape(mesh.n_edges, -1)
        inter = np.asarray(doc["interiors"], dtype=float).reshape(mesh.n_triangles, -1)
        return cls(S, np.concatenate([edges.ravel(), inter.ravel()]))


def regge_space(mesh: Mesh, r: int) -> FeSpace:
    if r not in (0, 1, 2, 3):
        raise ValueError("Regge degree must be in {0, 1, 2, 3}")
    return FeSpace(mesh, "regge", r)


def interp_regge(mesh: Mesh, r: int, sigma, reference=None, qdeg: int | None = None) -> ReggeField:
    """Canonical interpolant onto the Regge space of degree r.

    The local problem on each triangle matches edge moments of
    sigma(tau, tau) against P_r(e) and interior moments against P_{r-1}
    symmetric tensors, both taken with respect to the piecewise constant
    metric ``reference`` (Euclidean by default).  Edge values are shared;
    each edge takes them from its lowest-numbered incident triangle.
    """
    S = regge_space(mesh, r)
    geom = S.geom
    el = S.element
    nt = mesh.n_triangles
    if qdeg is None:
        qdeg = 2 * r + 8
    cells = np.arange(nt)
    if reference is None:
        gbar = np.broadcast_to(np.eye(2), (nt, 2, 2))
    else:
        gbar = reference.evaluate(geom, cells, np.array([[1 / 3, 1 / 3]]), 0)[0][:, 0]
    if np.any(det2(gbar) <= 0):
        raise ValueError("reference metric is not positive definite")
    Gbar = inv2(gbar)
    sq = np.sqrt(det2(gbar))

    nloc = el.ndofs
    A = np.zeros((nt, nloc, nloc))
    b = np.zeros((nt, nloc))

    # edge rows: int_e sigma(tau, tau) p ds with tau, ds from gbar
    er = edge_rule(qdeg)
    L = np.array([np.polyval([float(c) for c in _legendre01(j)[::-1]], er.points) for j in range(r + 1)])
    sides = geom.sides
    xi_e = sides.xi(er.points)  # (3 nt, nq, 2)
    sc = sides.cells
    phi = S.tabulate(sc, xi_e, 0)[0]  # (3nt, nq, nloc, 2, 2)
    val = sigma.evaluate(geom, sc, xi_e, 0)[0]  # (3nt, nq, 2, 2)
    t = sides.t
    lt = np.sqrt(np.einsum("sab,sa,sb->s", gbar[sc], t, t))
    wt = er.weights[None, :] / lt[:, None]  # tau = t/|t|, ds = |t| dl
    row_phi = np.einsum("sqnab,sa,sb,sq,jq->sjn", phi, t, t, wt, L)
    row_rhs = np.einsum("sqab,sa,sb,sq,jq->sj", val, t, t, wt, L)
    ned = r + 1
    for k in range(3):
        sel = sides.local == k
        A[:, k * ned : (k + 1) * ned, :] = row_phi[sel]
        b[:, k * ned : (k + 1) * ned] = row_rhs[sel]

    # interior rows: <sigma, rho>_{gbar, T} for rho in P_{r-1} S2
    if r >= 1:
        rule = tri_rule(qdeg)
        B = bernstein(r - 1).values(rule.xi)  # (nq, nb)
        E = np.array([[[1, 0], [0, 0]], [[0, 1], [1, 0]], [[0, 0], [0, 1]]], dtype=float)
        rho = np.einsum("qb,eij->qebij", B, E).reshape(len(rule.xi), -1, 2, 2)  # (nq, nrho, 2, 2)
        w = rule.weights[None, :] * (np.abs(geom.detJ) / 2 * sq)[:, None]
        phi = S.tabulate(cells, rule.xi, 0)[0]  # (nt, nq, nloc, 2, 2)
        val = sigma.evaluate(geom, cells, rule.xi, 0)[0]
        # raise indices of rho with gbar
        rr = np.einsum("cik,cjl,qmkl->cqmij", Gbar, Gbar, rho)
        A[:, 3 * ned :, :] = np.einsum("cq,cqmij,cqnij->cmn", w, rr, phi, optimize=True)
        b[:, 3 * ned :] = np.einsum("cq,cqmij,cqij->cm", w, rr, val, optimize=True)

    local = np.linalg.solve(A, b[..., None])[..., 0]
    out = np.zeros(S.ndofs)
    # edge dofs from the owner triangle of each edge (first listed incident triangle)
    owner = mesh.edge_triangles[:, 0]
    e_ids = np.arange(mesh.n_edges)
    kloc = np.argmax(geom.local_edges[owner] == e_ids[:, None], axis=1)
    for j in range(ned):
        out[S.offsets[1] + e_ids * ned + j] = local[owner, kloc * ned + j]
    if r >= 1:
        out[S.offsets[2] :] = local[:, 3 * ned :].ravel()
    return ReggeField(S, out)


def is_metric(field, qdeg: int = 6) -> dict:
    """Positive-definiteness probe at triangle and edge quadrature points."""
    geom = geometry(field.mesh)
    nt = field.mesh.n_triangles
    rule = tri_rule(qdeg)
    g = field.evaluate(geom, np.arange(nt), rule.xi, 0)[0]
    sides = geom.sides
    er = edge_rule(qdeg)
    ge = field.evaluate(geom, sides.cells, sides.xi(er.points), 0)[0]
    for label, arr, cells, pts in (
        ("triangle", g, np.arange(nt), None),
        ("edge", ge, sides.cells, None),
    ):
        lam = np.linalg.eigvalsh(arr)
        bad = np.argwhere(lam[..., 0] <= 0)
        if len(bad):
            c, q = bad[0]
            return {
                "ok": False,
                "where": label,
                "triangle": int(cells[c]),
                "point": int(q),
                "min_eigenvalue": float(lam[c, q, 0]),
            }
    return {"ok": True, "min_eigenvalue": float(min(np.linalg.eigvalsh(g)[..., 0].min(), np.linalg.eigvalsh(ge)[..., 0].min()))}


def tt_jump(field, npts: int | None = None) -> float:
    """Largest mismatch of sigma(t, t) across interior edges at sample points."""
    mesh = field.mesh
    geom = geometry(mesh)
    if npts is None:
        npts = getattr(field, "degree", 2) + 1
    ell = (np.arange(npts) + 0.5) / npts
    sides = geom.sides
    vals = field.evaluate(geom, sides.cells, sides.xi(ell), 0)[0]
    tt = np.einsum("sqab,sa,sb->sq", vals, sides.t, sides.t)
    worst = 0.0
    for e in mesh.interior_edges:
        s0, s1 = np.flatnonzero(sides.edges == e)
        worst = max(worst, float(np.abs(tt[s0] - tt[s1]).max()))
    return worst


def random_regge(mesh: Mesh, r: int, rng: np.random.Generator, scale: float = 1.0) -> ReggeField:
    S = regge_space(mesh, r)
    return ReggeField(S, scale * rng.uniform(-1.0, 1.0, S.ndofs))


def constant_regge(mesh: Mesh, r: int, value) -> ReggeField:
    from .fields import ConstantField

    return interp_regge(mesh, r, ConstantField(np.asarray(value, dtype=float)))


def random_regge_metric(
    mesh: Mesh, r: int, rng: np.random.Generator, amplitude: float = 0.1, base=None
) -> ReggeField:
    """Regge metric  base + p  with p a random Regge field scaled so that its
    largest pointwise spectral norm (sampled) equals ``amplitude``.

    ``base`` defaults to the identity.  Raises if the result is not a metric.
    """
    S = regge_space(mesh, r)
    p = random_regge(mesh, r, rng)
    geom = geometry(mesh)
    xi = tri_rule(2 * r + 2).xi
    vals = p.evaluate(geom, np.arange(mesh.n_triangles), xi, 0)[0]
    size = float(np.abs(np.linalg.eigvalsh(vals)).max())
    if base is None:
        base = constant_regge(mesh, r, np.eye(2))
    out = ReggeField(S, base.coeffs + (amplitude / size) * p.coeffs)
    probe = is_metric(out)
    if not probe["ok"]:
        raise ValueError(f"perturbed field is not a metric: {probe}")
    return out


def regge_from_edge_lengths(mesh: Mesh, lengths) -> ReggeField:
    """Piecewise constant Regge metric whose edge e has g-length lengths[e]."""
    from .fields import PiecewiseConstantField

    lengths = np.asarray(lengths, dtype=float)
    X = mesh.vertices
    vals = np.empty((mesh.n_triangles, 2, 2))
    for c, tri in enumerate(mesh.triangles):
        rows, rhs = [], []
        for k in range(3):
            e = mesh.tri_edges[c, k]
            a, b = mesh.edges[e]
            t = X[b] - X[a]
            rows.append([t[0] ** 2, 2 * t[0] * t[1], t[1] ** 2])
            rhs.append(lengths[e] ** 2)
        s11, s12, s22 = np.linalg.solve(np.array(rows), np.array(rhs))
        vals[c] = [[s11, s12], [s12, s22]]
    g = interp_regge(mesh, 0, PiecewiseConstantField(vals))
    probe = is_metric(g)
    if not probe["ok"]:
        raise ValueError("edge lengths violate the triangle inequality")
    return g
