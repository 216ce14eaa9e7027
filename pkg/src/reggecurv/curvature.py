"""Distributional and discrete Gaussian curvature, and canonical connection one-forms."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fespace import FeFunction, FeSpace, mass_matrix
from .fields import ConstantField, minus_delta
from .forms import FormContext, PointFunctional, bh_direct_functional, ch_direct_functional
from .geom import (
    MetricJet,
    SymTensorJet,
    det2,
    div_s_sigma,
    gauss_curvature,
    geodesic_curvature,
    interior_angle,
    inv2,
)
from .linalg import solve_free
from .polyquad import tri_rule

TWO_PI = 2.0 * np.pi


class TimeQuadratureError(RuntimeError):
    pass


# --- time quadrature on [0, 1] --------------------------------------------------
_GL5 = np.polynomial.legendre.leggauss(5)


def time_integrate(fn, tol: float = 1e-10, max_panels: int = 1024, atol: float = 1e-14):
    """Composite 5-point Gauss-Legendre on [0, 1], halving panels until the
    relative change of the (vector) sum is at most ``tol``.  Changes below
    ``atol`` are round-off and also count as converged.

    Returns (value, meta) with meta = {panels, nodes, estimated_error}.
    """
    cache: dict = {}

    def f(t):
        key = float(t)
        if key not in cache:
            cache[key] = np.asarray(fn(key), dtype=float)
        return cache[key]

    def composite(m):
        x, w = _GL5
        edges = np.linspace(0.0, 1.0, m + 1)
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            for xi, wi in zip(x, w):
                total = total + 0.5 * (b - a) * wi * f(0.5 * (a + b) + 0.5 * (b - a) * xi)
        return total

    m = 1
    prev = composite(m)
    while True:
        m *= 2
        if m > max_panels:
            raise TimeQuadratureError("time quadrature did not reach tolerance")
        cur = composite(m)
        err = float(np.max(np.abs(cur - prev)))
        scale = float(np.max(np.abs(cur)))
        if err <= max(tol * scale, atol):
            return cur, {"panels": m, "nodes": len(cache), "estimated_error": err}
        prev = cur


# --- per-entity pieces ----------------------------------------------------------
def _corner_angles(ctx: FormContext) -> np.ndarray:
    """theta_{zT} for every (triangle, sorted-local corner), shape (nt, 3)."""
    geom, mesh = ctx.geom, ctx.mesh
    g = ctx.jet("corner", 0).g[:, 0].reshape(mesh.n_triangles, 3, 2, 2)
    X = mesh.vertices
    s = geom.sorted
    out = np.empty((mesh.n_triangles, 3))
    for k in range(3):
        z = X[s[:, k]]
        t1 = X[s[:, (k + 1) % 3]] - z
        t2 = X[s[:, (k + 2) % 3]] - z
        out[:, k] = interior_angle(g[:, k], t1, t2)
    return out


def angle_defects(ctx: FormContext) -> np.ndarray:
    """Theta_z for every vertex (NaN at boundary vertices)."""
    mesh = ctx.mesh
    ang = _corner_angles(ctx)
    total = np.bincount(ctx.geom.sorted.ravel(), weights=ang.ravel(), minlength=mesh.n_vertices)
    out = TWO_PI - total
    out[mesh.boundary_vertices] = np.nan
    return out


def angle_defect(g, z: int, ctx: FormContext | None = None) -> float:
    ctx = ctx if ctx is not None else FormContext(g.mesh, g)
    if ctx.mesh.boundary_vertices[z]:
        raise ValueError(f"vertex {z} is on the boundary")
    return float(angle_defects(ctx)[z])


def _side_geodesic(ctx: FormContext) -> np.ndarray:
    jet = ctx.jet("side", 1)
    s = ctx.geom.sides
    t = np.broadcast_to(s.t[:, None, :], jet.g.shape[:-1])
    nu = np.broadcast_to(s.nu[:, None, :], jet.g.shape[:-1])
    return geodesic_curvature(jet, t, nu)  # (nsides, nq)


def jump_geodesic(g, e: int, ell, ctx: FormContext | None = None) -> np.ndarray:
    """[[k_e]] = k_e(g_T1) + k_e(g_T2) at edge parameters ``ell`` (global orientation)."""
    mesh = g.mesh
    if mesh.boundary_edges[e]:
        raise ValueError(f"edge {e} is on the boundary")
    ctx = ctx if ctx is not None else FormContext(mesh, g)
    geom = ctx.geom
    s = geom.sides
    ell = np.atleast_1d(np.asarray(ell, dtype=float))
    total = np.zeros(len(ell))
    for i in np.flatnonzero(s.edges == e):
        xi = s.xi(ell, np.array([i]))
        vals = g.evaluate(geom, s.cells[[i]], xi, 1)
        jet = MetricJet(vals[0][0], vals[1][0])
        total += geodesic_curvature(jet, np.broadcast_to(s.t[i], (len(ell), 2)), np.broadcast_to(s.nu[i], (len(ell), 2)))
    return total


def curvature_functional(ctx: FormContext) -> PointFunctional:
    """v -> sum_T <kappa_T, v>_g + sum_{interior e} <[[k_e]], v>_g + sum_{interior z} Theta_z v(z)."""
    mesh, geom = ctx.mesh, ctx.geom
    jet = ctx.jet("tri", 2)
    kap = gauss_curvature(jet)
    c_tri = (kap * np.sqrt(det2(jet.g)) * ctx.tri.weights)[:, :, None]
    lt, _, _ = ctx.side_frame()
    ke = _side_geodesic(ctx)
    c_side = (ke * lt * ctx.side.weights * geom.sides.interior[:, None])[:, :, None]
    # each corner carries 2 pi / deg(z) - theta_zT, so the star sums to Theta_z
    ang = _corner_angles(ctx)
    verts = geom.sorted
    deg = np.bincount(verts.ravel(), minlength=mesh.n_vertices)
    share = TWO_PI / deg[verts] - ang
    share[mesh.boundary_vertices[verts]] = 0.0
    c_corner = share.reshape(-1, 1, 1)
    return PointFunctional(ctx, {"tri": {0: c_tri}, "side": {0: c_side}, "corner": {0: c_corner}}, ())


@dataclass
class CurvatureReport:
    triangles: np.ndarray  # per-triangle  int_T kappa v omega
    edges: np.ndarray  # per-edge  int_e [[k_e]] v ds  (0 on boundary edges)
    defects: np.ndarray  # Theta_z (NaN on boundary vertices)
    vertex_terms: np.ndarray  # Theta_z v(z) (0 on boundary vertices)
    total: float = field(init=False)

    def __post_init__(self):
        self.total = float(self.triangles.sum() + self.edges.sum() + self.vertex_terms.sum())

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "triangle_sum": float(self.triangles.sum()),
            "edge_sum": float(self.edges.sum()),
            "vertex_sum": float(self.vertex_terms.sum()),
            "triangles": self.triangles.tolist(),
            "edges": self.edges.tolist(),
            "angle_defects": [None if np.isnan(d) else float(d) for d in self.defects],
            "vertex_terms": self.vertex_terms.tolist(),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))


def distributional_curvature(g, v=None, ctx: FormContext | None = None) -> tuple[float, CurvatureReport]:
    """Action of the distributional curvature two-form of ``g`` on ``v``.

    ``v`` defaults to the constant 1, which reports the raw integrals.
    """
    ctx = ctx if ctx is not None else FormContext(g.mesh, g)
    mesh, geom = ctx.mesh, ctx.geom
    if v is None:
        v = ConstantField(1.0)
    F = curvature_functional(ctx)
    parts = {}
    for name, coefs in F.blocks.items():
        ps = ctx.points(name)
        vals = v.evaluate(geom, ps.cells, ps.xi, 0)[0]
        parts[name] = np.sum(coefs[0][:, :, 0] * vals, axis=1)
    tri = parts["tri"]
    edges = np.bincount(geom.sides.edges, weights=parts["side"], minlength=mesh.n_edges)
    defects = angle_defects(ctx)
    vz = np.zeros(mesh.n_vertices)
    corner_v = v.evaluate(geom, ctx.corner.cells, ctx.corner.xi, 0)[0][:, 0]
    vz[geom.sorted.ravel()] = corner_v
    vterms = np.where(mesh.boundary_vertices, 0.0, np.nan_to_num(defects) * vz)
    rep = CurvatureReport(tri, edges, defects, vterms)
    return rep.total, rep


def curvature_load(g, Vh: FeSpace, ctx: FormContext | None = None) -> np.ndarray:
    ctx = ctx if ctx is not None else FormContext(Vh.mesh, g)
    F = curvature_functional(ctx).load(Vh)
    F[Vh.boundary] = 0.0
    return F


def discrete_curvature(g, Vh: FeSpace | None = None, ctx: FormContext | None = None) -> FeFunction:
    """kappa_h in V_h^{r+1}: the g-weighted L2 representer of the curvature load."""
    if Vh is None:
        Vh = FeSpace(g.mesh, "lagrange", g.degree + 1)
    ctx = ctx if ctx is not None else FormContext(Vh.mesh, g)
    M = mass_matrix(Vh, g, qdeg=ctx.qdeg)
    return FeFunction(Vh, solve_free(M, curvature_load(g, Vh, ctx), Vh))


class _Cached:
    """Memoized field evaluation at the fixed point sets of a context."""

    def __init__(self, f):
        self.f = f
        self.shape = f.shape
        self._memo: dict = {}

    def evaluate(self, geom, cells, xi, nderiv=0):
        key = (id(cells), id(xi), nderiv)
        if key not in self._memo:
            self._memo[key] = (cells, xi, self.f.evaluate(geom, cells, xi, nderiv))
        return self._memo[key][2]


def curvature_time_integral(g, Vh: FeSpace, ctx: FormContext | None = None, tol: float = 1e-10):
    """Load  v -> 1/2 int_0^1 b_h((1-t) delta + t g; g - delta, v) dt  over V_h."""
    ctx = ctx if ctx is not None else FormContext(Vh.mesh, g)
    sigma = _Cached(minus_delta(g))
    ctx.jet("tri", 1)
    ctx.jet("side", 1)

    def integrand(t):
        return 0.5 * bh_direct_functional(ctx.path(t), sigma).load(Vh)

    F, meta = time_integrate(integrand, tol)
    F[Vh.boundary] = 0.0
    return F, meta


@dataclass
class ConnectionOneForm:
    load: np.ndarray  # distributional action on the basis of ``space``
    space: FeSpace
    discrete: FeFunction | None
    meta: dict

    def pair(self, alpha: FeFunction) -> float:
        return float(self.load @ alpha.coeffs)


def connection_load(g, Wh: FeSpace, ctx: FormContext | None = None, tol: float = 1e-10):
    """alpha -> -1/2 int_0^1 c_h((1-t) delta + t g; g - delta, alpha) dt over W_h."""
    ctx = ctx if ctx is not None else FormContext(Wh.mesh, g)
    sigma = _Cached(minus_delta(g))
    ctx.jet("tri", 1)
    ctx.jet("side", 1)

    def integrand(t):
        return -0.5 * ch_direct_functional(ctx.path(t), sigma).load(Wh)

    F, meta = time_integrate(integrand, tol)
    F[Wh.boundary] = 0.0
    return F, meta


def canonical_connection(
    g, target: str = "discrete", Wh: FeSpace | None = None, ctx: FormContext | None = None, tol: float = 1e-10
) -> ConnectionOneForm:
    """Canonical connection one-form of a Regge metric with gauge F = 0.

    ``distributional`` returns the load over W_h; ``discrete`` also solves
    the g-weighted W_h mass system for Gamma_h in W_h^{r+1}.
    """
    if target not in ("distributional", "discrete"):
        raise ValueError("target must be 'distributional' or 'discrete'")
    if Wh is None:
        Wh = FeSpace(g.mesh, "nedelec", g.degree + 1)
    ctx = ctx if ctx is not None else FormContext(Wh.mesh, g)
    F, meta = connection_load(g, Wh, ctx, tol)
    disc = None
    if target == "discrete":
        M = mass_matrix(Wh, g, qdeg=ctx.qdeg)
        disc = FeFunction(Wh, solve_free(M, F, Wh))
    return ConnectionOneForm(F, Wh, disc, meta)


def reference_connection(g, Wh: FeSpace, qdeg: int | None = None, tol: float = 1e-10):
    """Load of the smooth reference connection over W_h:
    alpha -> 1/2 int_0^1 int <div S (g - delta), alpha>_G omega_G dt, G = (1 - t) delta + t g,
    for a closed-form metric ``g`` with exact jets."""
    mesh = Wh.mesh
    if qdeg is None:
        qdeg = 2 * Wh.degree + 10
    rule = tri_rule(qdeg)
    cells = np.arange(mesh.n_triangles)
    geom = Wh.geom
    vals = g.evaluate(geom, cells, rule.xi, 1)
    g0, dg = vals[0], vals[1]
    phi = Wh.tabulate(cells, rule.xi, 0)[0]  # (nc, nq, nloc, 2)
    w = rule.weights[None, :] * (np.abs(geom.detJ) / 2)[:, None]
    sj = SymTensorJet(g0 - np.eye(2), dg)

    def integrand(t):
        G = MetricJet((1 - t) * np.eye(2) + t * g0, t * dg)
        beta = div_s_sigma(G, sj)
        Gi = inv2(G.g)
        c = np.einsum("cqij,cqi->cqj", Gi, beta) * (w * np.sqrt(det2(G.g)))[:, :, None]
        loc = 0.5 * np.einsum("cqj,cqnj->cn", c, phi)
        return Wh.scatter(cells, loc)

    F, meta = time_integrate(integrand, tol)
    F[Wh.boundary] = 0.0
    return F, meta


def export_coefficients(f: FeFunction, path) -> None:
    """CSV with columns dof, value."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dof", "value"])
        for i, c in enumerate(f.coeffs):
            w.writerow([i, repr(float(c))])
