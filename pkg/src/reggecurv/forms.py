"""Metric-dependent bilinear forms b_h and c_h.

Each form is assembled as a :class:`PointFunctional`: coefficient arrays at
fixed point sets (triangle quadrature points, edge-side quadrature points,
triangle corners) that multiply values and derivatives of the test function.
Applying it to a field gives a number; applying it to a finite element basis
gives a load vector.  The second argument sigma may carry an extra basis axis,
which yields matrices.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .fespace import FeSpace, assemble_matrix, geometry
from .fields import EUCLIDEAN
from .geom import (
    MetricJet,
    SymTensorJet,
    check_spd,
    christoffel,
    det2,
    div_s_sigma,
    divdiv_s_sigma,
    edge_frame,
    inv2,
    s_operator,
)
from .mesh import Mesh
from .polyquad import REF_VERTICES, edge_rule, tri_rule


@dataclass
class PointSet:
    cells: np.ndarray
    xi: np.ndarray  # (nq, 2) shared or (np, nq, 2)
    weights: np.ndarray  # (np, nq) geometric weights (area or edge-parameter measure)


class FormContext:
    """Mesh, metric and quadrature shared by all form evaluations.

    ``g`` follows the field protocol (a ReggeField, a closed-form field, or
    None for the Euclidean metric).  ``qdeg`` defaults to 2r + 6 + ``boost``
    with r the metric degree (r = 2 when the metric has no polynomial degree).
    """

    DEFAULT_BOOST = 4

    def __init__(
        self, mesh: Mesh, g=None, qdeg: int | None = None, r: int | None = None, boost: int | None = None
    ):
        self.mesh = mesh
        self.geom = geometry(mesh)
        self.g = EUCLIDEAN if g is None else g
        if r is None:
            r = getattr(self.g, "degree", 2) if g is not None else 0
        self.r = int(r)
        if boost is None:
            boost = self.DEFAULT_BOOST
        self.qdeg = int(qdeg) if qdeg is not None else 2 * self.r + 6 + int(boost)
        self._tab: dict = {}
        self._jets: dict = {}

    # --- point sets ---------------------------------------------------------
    @cached_property
    def tri(self) -> PointSet:
        rule = tri_rule(self.qdeg)
        nt = self.mesh.n_triangles
        w = rule.weights[None, :] * (np.abs(self.geom.detJ) / 2.0)[:, None]
        return PointSet(np.arange(nt), rule.xi, w)

    @cached_property
    def side(self) -> PointSet:
        er = edge_rule(self.qdeg)
        s = self.geom.sides
        return PointSet(s.cells, s.xi(er.points), np.broadcast_to(er.weights, (len(s.cells), len(er.weights))))

    @cached_property
    def corner(self) -> PointSet:
        nt = self.mesh.n_triangles
        cells = np.repeat(np.arange(nt), 3)
        xi = REF_VERTICES[np.tile(np.arange(3), nt)][:, None, :]
        return PointSet(cells, xi, np.ones((3 * nt, 1)))

    def points(self, name: str) -> PointSet:
        return getattr(self, name)

    def jet(self, name: str, order: int = 2) -> MetricJet:
        key = (name, order)
        if key not in self._jets:
            ps = self.points(name)
            vals = self.g.evaluate(self.geom, ps.cells, ps.xi, order)
            check_spd(vals[0])
            self._jets[key] = MetricJet(*vals)
        return self._jets[key]

    def tabulate(self, space: FeSpace, name: str, order: int):
        key = (id(space), name, order)
        if key not in self._tab:
            ps = self.points(name)
            self._tab[key] = (space, space.tabulate(ps.cells, ps.xi, order))
        return self._tab[key][1]

    def with_metric(self, g) -> "FormContext":
        """Same mesh, quadrature and tabulation cache, different metric."""
        ctx = FormContext.__new__(FormContext)
        ctx.mesh, ctx.geom, ctx.g, ctx.r, ctx.qdeg = self.mesh, self.geom, g, self.r, self.qdeg
        ctx._tab = self._tab
        ctx._jets = {}
        for k in ("tri", "side", "corner"):
            if k in self.__dict__:
                ctx.__dict__[k] = self.__dict__[k]
        return ctx

    def path(self, t: float) -> "FormContext":
        """Context for (1 - t) delta + t g, reusing the jets of g."""
        ctx = self.with_metric(None)
        ctx.g = _PathMetric(self.g, t)
        for key, jet in list(self._jets.items()):
            if len(key) != 2:
                continue
            ctx._jets[key] = MetricJet(
                (1 - t) * np.eye(2) + t * jet.g,
                None if jet.dg is None else t * jet.dg,
                None if jet.d2g is None else t * jet.d2g,
            )
        return ctx

    # --- edge-side frame data ----------------------------------------------
    def side_frame(self):
        """|t|_g, counterclockwise g-unit tangent and outward g-unit normal."""
        key = ("side_frame",)
        if key not in self._jets:
            g = self.jet("side", 1).g
            s = self.geom.sides
            t = np.broadcast_to(s.t[:, None, :], g.shape[:-1])
            nu = np.broadcast_to(s.nu[:, None, :], g.shape[:-1])
            lt = np.sqrt(np.einsum("sqab,sqa,sqb->sq", g, t, t))
            tau, n = edge_frame(g, t, nu)
            self._jets[key] = (lt, tau, n)
        return self._jets[key]


class _PathMetric:
    def __init__(self, g, t):
        self.g, self.t = g, float(t)
        self.shape = (2, 2)
        self.degree = getattr(g, "degree", 2)

    def evaluate(self, geom, cells, xi, nderiv=0):
        vals = self.g.evaluate(geom, cells, xi, nderiv)
        out = [self.t * v for v in vals]
        out[0] = out[0] + (1 - self.t) * np.eye(2)
        return out


class PointFunctional:
    """Linear functional  sum over point sets of c_k : D^k f  (k = 0, 1, 2).

    ``blocks`` maps a point-set name to {order: coefficients}; coefficients
    have shape (np, nq, B, *value_shape, (2,)*order) where B indexes a family
    of functionals (B = 1 for a single functional).
    """

    def __init__(self, ctx: FormContext, blocks: dict, value_shape: tuple):
        self.ctx = ctx
        self.blocks = blocks
        self.value_shape = tuple(value_shape)

    @property
    def nfamily(self) -> int:
        for coefs in self.blocks.values():
            for c in coefs.values():
                return c.shape[2]
        return 1

    def apply(self, field) -> np.ndarray | float:
        ctx = self.ctx
        total = np.zeros(self.nfamily)
        for name, coefs in self.blocks.items():
            ps = ctx.points(name)
            order = max(coefs)
            vals = field.evaluate(ctx.geom, ps.cells, ps.xi, order)
            for k, c in coefs.items():
                v = vals[k][:, :, None]
                total += np.sum((c * v).reshape(c.shape[0], c.shape[1], c.shape[2], -1), axis=(0, 1, 3))
        return float(total[0]) if len(total) == 1 else total

    def local(self, space: FeSpace, name: str) -> np.ndarray:
        """Cell-local action on the basis of ``space`` at one point set: (np, nloc, B)."""
        coefs = self.blocks[name]
        order = max(coefs)
        tab = self.ctx.tabulate(space, name, order)
        out = 0.0
        for k, c in coefs.items():
            T = tab[k]
            nb = c.shape[2]
            cc = c.reshape(c.shape[0], c.shape[1], nb, -1)
            TT = T.reshape(T.shape[0], T.shape[1], T.shape[2], -1)
            out = out + np.einsum("cqbx,cqnx->cnb", cc, TT, optimize=True)
        return out

    def load(self, space: FeSpace) -> np.ndarray:
        """Action on every basis function of ``space`` (B must be 1)."""
        vec = np.zeros(space.ndofs)
        for name in self.blocks:
            loc = self.local(space, name)[..., 0]
            space.scatter(self.ctx.points(name).cells, loc, vec)
        return vec

    def matrix(self, test: FeSpace, trial: FeSpace) -> sp.csr_matrix:
        """Matrix with rows over ``test`` and columns over the family axis,
        identified with the local basis of ``trial``."""
        M = sp.csr_matrix((test.ndofs, trial.ndofs))
        for name in self.blocks:
            loc = self.local(test, name)
            cells = self.ctx.points(name).cells
            M = M + assemble_matrix(test, trial, loc, cells)
        return M

    def __add__(self, other: "PointFunctional") -> "PointFunctional":
        blocks = {k: dict(v) for k, v in self.blocks.items()}
        for name, coefs in other.blocks.items():
            tgt = blocks.setdefault(name, {})
            for k, c in coefs.items():
                tgt[k] = tgt[k] + c if k in tgt else c
        return PointFunctional(self.ctx, blocks, self.value_shape)

    def scaled(self, s: float) -> "PointFunctional":
        return PointFunctional(
            self.ctx, {n: {k: s * c for k, c in cs.items()} for n, cs in self.blocks.items()}, self.value_shape
        )


# --- sigma sampling --------------------------------------------------------------
def _sigma_values(ctx: FormContext, sigma, name: str, order: int) -> list[np.ndarray]:
    """Sigma and derivatives at a point set with a family axis at position 2."""
    if isinstance(sigma, FeSpace):
        tab = ctx.tabulate(sigma, name, order)
        return list(tab)
    ps = ctx.points(name)
    return [v[:, :, None] for v in sigma.evaluate(ctx.geom, ps.cells, ps.xi, order)]


def _expand(jet: MetricJet) -> MetricJet:
    return MetricJet(
        jet.g[:, :, None],
        None if jet.dg is None else jet.dg[:, :, None],
        None if jet.d2g is None else jet.d2g[:, :, None],
    )


# --- b_h and c_h, direct guise ---------------------------------------------------
def _direct_blocks(ctx: FormContext, sigma) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coefficients shared by b_h and c_h in the direct guise.

    Returns W (tri, multiplies the covariant derivative) and E (side,
    multiplies the outward normal component of the test one-form).
    """
    jet = ctx.jet("tri", 1)
    s_t = _sigma_values(ctx, sigma, "tri", 0)[0]
    g = jet.g[:, :, None]
    G = inv2(g)
    sq = np.sqrt(det2(jet.g))
    Ss = s_operator(g, s_t)
    W = np.einsum("cqbki,cqbij,cqbjl->cqbkl", np.broadcast_to(G, Ss.shape), Ss, np.broadcast_to(G, Ss.shape))
    W = W * (ctx.tri.weights * sq)[:, :, None, None, None]
    lt, tau, n = ctx.side_frame()
    s_e = _sigma_values(ctx, sigma, "side", 0)[0]
    t = ctx.geom.sides.t
    stt = np.einsum("sqbij,si,sj->sqb", s_e, t, t) / (lt**2)[:, :, None]  # sigma(tau, tau)
    E = np.einsum("sqb,sq,sqi->sqbi", stt, ctx.side.weights * lt, n)
    return W, E, christoffel(jet)


def bh_direct_functional(ctx: FormContext, sigma) -> PointFunctional:
    """v -> sum_T <S sigma, Hess v>_g + sum_e <sigma(tau, tau), [[grad_n v]]>_g."""
    W, E, Gam = _direct_blocks(ctx, sigma)
    c1 = -np.einsum("cqbij,cqkij->cqbk", W, Gam)
    return PointFunctional(ctx, {"tri": {1: c1, 2: W}, "side": {1: E}}, ())


def ch_direct_functional(ctx: FormContext, sigma) -> PointFunctional:
    """alpha -> sum_T <S sigma, nabla alpha>_g + sum_e <sigma(tau, tau), [[alpha(n)]]>_g."""
    W, E, Gam = _direct_blocks(ctx, sigma)
    # (nabla alpha)_kl = d_k alpha_l - Gamma^m_kl alpha_m, derivative arrays are [l, k]
    c1 = np.swapaxes(W, -1, -2)
    c0 = -np.einsum("cqbkl,cqmkl->cqbm", W, Gam)
    return PointFunctional(ctx, {"tri": {0: c0, 1: c1}, "side": {0: E}}, (2,))


def bh_direct(ctx: FormContext, sigma, v) -> float:
    return bh_direct_functional(ctx, sigma).apply(v)


def ch_direct(ctx: FormContext, sigma, alpha) -> float:
    return ch_direct_functional(ctx, sigma).apply(alpha)


# --- integrated-by-parts guise -----------------------------------------------------
def _side_sigma_terms(ctx: FormContext, sigma):
    """Per side: (div S sigma)(n) + nabla_tau(sigma(n, tau)) and sigma(n, tau)."""
    jet = ctx.jet("side", 1)
    vals = _sigma_values(ctx, sigma, "side", 1)
    s, ds = vals[0], vals[1]
    ej = _expand(jet)
    gj = MetricJet(np.broadcast_to(ej.g, s.shape), np.broadcast_to(ej.dg, ds.shape))
    beta = div_s_sigma(gj, SymTensorJet(s, ds))  # (ns, nq, B, 2)
    lt, tau, n = ctx.side_frame()
    sides = ctx.geom.sides
    t = sides.t
    nu = sides.nu
    # derivatives along the edge parameter l, where x = x_a + l t
    dg_l = np.einsum("sqijk,sk->sqij", jet.dg, t)
    G = inv2(jet.g)
    dG_l = -np.einsum("sqia,sqab,sqbj->sqij", G, dg_l, G)
    # tau = c t / |t|_g with c = +-1 constant along the edge
    dlt = np.einsum("sqij,si,sj->sq", dg_l, t, t) / (2 * lt)
    dtau = -tau * (dlt / lt)[:, :, None]
    # n = G nu / |nu|_G
    Gnu = np.einsum("sqij,sj->sqi", G, nu)
    lnu = np.sqrt(np.einsum("sqi,si->sq", Gnu, nu))
    dGnu = np.einsum("sqij,sj->sqi", dG_l, nu)
    dlnu = np.einsum("sqi,si->sq", dGnu, nu) / (2 * lnu)
    dn = dGnu / lnu[:, :, None] - Gnu * (dlnu / lnu**2)[:, :, None]
    ds_l = np.einsum("sqbijk,sk->sqbij", ds, t)
    snt = np.einsum("sqbij,sqi,sqj->sqb", s, n, tau)
    dsnt = (
        np.einsum("sqbij,sqi,sqj->sqb", ds_l, n, tau)
        + np.einsum("sqbij,sqi,sqj->sqb", s, dn, tau)
        + np.einsum("sqbij,sqi,sqj->sqb", s, n, dtau)
    )
    orient = np.sign(np.einsum("sqi,si->sq", tau, t))
    nabla_tau = dsnt * (orient / lt)[:, :, None]
    beta_n = np.einsum("sqbi,sqi->sqb", beta, n)
    return beta_n + nabla_tau, snt, beta


def _corner_jumps(ctx: FormContext, sigma) -> np.ndarray:
    """[[sigma(n, tau)]]_{zT} for every (triangle, sorted-local corner): (3 nt, 1, B)."""
    geom = ctx.geom
    mesh = ctx.mesh
    sides = geom.sides
    g = ctx.jet("corner", 0).g[:, 0]  # (3nt, 2, 2)
    s = _sigma_values(ctx, sigma, "corner", 0)[0][:, 0]  # (3nt, B, 2, 2)
    nt = mesh.n_triangles
    out = np.zeros((3 * nt, s.shape[1]))
    for k in range(3):
        rows = np.arange(nt) * 3 + k
        z = geom.sorted[:, k]
        acc = np.zeros((nt, s.shape[1]))
        for kk in range(3):
            if kk == k:
                continue
            sid = np.arange(nt) * 3 + kk
            t = sides.t[sid]
            nu = sides.nu[sid]
            ccw = sides.ccw[sid]
            tau, n = edge_frame(g[rows], t, nu)
            e = mesh.edges[sides.edges[sid]]
            end = np.where(ccw > 0, e[:, 1], e[:, 0])
            sign = np.where(end == z, 1.0, -1.0)  # +: tangent points toward z
            snt = np.einsum("cbij,ci,cj->cb", s[rows], n, tau)
            acc += sign[:, None] * snt
        out[rows] = acc
    out[mesh.boundary_vertices[geom.sorted.ravel()]] = 0.0
    return out[:, None, :]


def bh_ibp_functional(ctx: FormContext, sigma) -> PointFunctional:
    """b_h integrated by parts: acts on values of v only."""
    jet = ctx.jet("tri", 2)
    vals = _sigma_values(ctx, sigma, "tri", 2)
    ej = _expand(jet)
    shp = vals[0].shape
    gj = MetricJet(
        np.broadcast_to(ej.g, shp),
        np.broadcast_to(ej.dg, vals[1].shape),
        np.broadcast_to(ej.d2g, vals[2].shape),
    )
    dd = divdiv_s_sigma(gj, SymTensorJet(*vals))
    sq = np.sqrt(det2(jet.g))
    c_tri = dd * (ctx.tri.weights * sq)[:, :, None]
    edge_term, _, _ = _side_sigma_terms(ctx, sigma)
    lt, _, _ = ctx.side_frame()
    interior = ctx.geom.sides.interior
    c_side = -edge_term * (ctx.side.weights * lt)[:, :, None] * interior[:, None, None]
    c_corner = _corner_jumps(ctx, sigma)
    return PointFunctional(ctx, {"tri": {0: c_tri}, "side": {0: c_side}, "corner": {0: c_corner}}, ())


def ch_ibp_functional(ctx: FormContext, sigma) -> PointFunctional:
    """c_h integrated by parts: -sum_T <div S sigma, alpha> + sum_e <[[sigma(n, tau)]], alpha(tau)>."""
    jet = ctx.jet("tri", 1)
    vals = _sigma_values(ctx, sigma, "tri", 1)
    ej = _expand(jet)
    gj = MetricJet(np.broadcast_to(ej.g, vals[0].shape), np.broadcast_to(ej.dg, vals[1].shape))
    beta = div_s_sigma(gj, SymTensorJet(vals[0], vals[1]))  # (nc, nq, B, 2)
    G = inv2(jet.g)
    sq = np.sqrt(det2(jet.g))
    c_tri = -np.einsum("cqij,cqbi->cqbj", G, beta) * (ctx.tri.weights * sq)[:, :, None, None]
    _, snt, _ = _side_sigma_terms(ctx, sigma)
    lt, tau, _ = ctx.side_frame()
    interior = ctx.geom.sides.interior
    c_side = np.einsum("sqb,sqj->sqbj", snt, tau) * (ctx.side.weights * lt * interior[:, None])[:, :, None, None]
    return PointFunctional(ctx, {"tri": {0: c_tri}, "side": {0: c_side}}, (2,))


def bh_ibp(ctx: FormContext, sigma, v) -> float:
    return bh_ibp_functional(ctx, sigma).apply(v)


def ch_ibp(ctx: FormContext, sigma, alpha) -> float:
    return ch_ibp_functional(ctx, sigma).apply(alpha)


# --- matrices ----------------------------------------------------------------
def bh_matrix(ctx: FormContext, Sh: FeSpace, Vh: FeSpace, constrained: bool = True) -> sp.csr_matrix:
    """B[i, j] = b_h(g; psi_j, v_i) with rows over V_h and columns over Sigma_h.

    With ``constrained`` the rows of boundary V dofs are dropped.
    """
    M = bh_direct_functional(ctx, Sh).matrix(Vh, Sh)
    return M[Vh.free] if constrained else M


def ch_matrix(ctx: FormContext, Sh: FeSpace, Wh: FeSpace, constrained: bool = True) -> sp.csr_matrix:
    """C[i, j] = c_h(g; psi_j, alpha_i) with rows over W_h and columns over Sigma_h."""
    M = ch_direct_functional(ctx, Sh).matrix(Wh, Sh)
    return M[Wh.free] if constrained else M
