"""Pointwise Riemannian formulas in two dimensions.

All functions are vectorized over leading axes.  Derivative axes come last:
``dg[..., i, j, k] = d_k g_ij`` and ``d2g[..., i, j, k, l] = d_k d_l g_ij``.
Christoffel symbols are stored as ``Gam[..., k, i, j] = Gamma^k_ij``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NotPositiveDefinite(ValueError):
    pass


@dataclass
class MetricJet:
    g: np.ndarray
    dg: np.ndarray | None = None
    d2g: np.ndarray | None = None

    @classmethod
    def from_list(cls, vals: list) -> "MetricJet":
        return cls(*vals)


@dataclass
class SymTensorJet:
    s: np.ndarray
    ds: np.ndarray | None = None
    d2s: np.ndarray | None = None


def det2(a: np.ndarray) -> np.ndarray:
    return a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]


def inv2(a: np.ndarray) -> np.ndarray:
    d = det2(a)
    out = np.empty(np.shape(a))
    out[..., 0, 0] = a[..., 1, 1]
    out[..., 1, 1] = a[..., 0, 0]
    out[..., 0, 1] = -a[..., 0, 1]
    out[..., 1, 0] = -a[..., 1, 0]
    return out / d[..., None, None]


def check_spd(g: np.ndarray) -> None:
    if np.any(det2(g) <= 0) or np.any(g[..., 0, 0] <= 0):
        raise NotPositiveDefinite("metric is not positive definite")


def christoffel_lower(dg: np.ndarray) -> np.ndarray:
    """Gamma_{l,ij} = 1/2 (d_i g_jl + d_j g_il - d_l g_ij), stored [..., l, i, j]."""
    a = np.einsum("...jli->...lij", dg)
    b = np.einsum("...ilj->...lij", dg)
    c = np.einsum("...ijl->...lij", dg)
    return 0.5 * (a + b - c)


def christoffel(jet: MetricJet) -> np.ndarray:
    check_spd(jet.g)
    return np.einsum("...kl,...lij->...kij", inv2(jet.g), christoffel_lower(jet.dg))


def christoffel_derivative(jet: MetricJet) -> np.ndarray:
    """d_m Gamma^k_ij stored [..., k, i, j, m]."""
    G = inv2(jet.g)
    dG = -np.einsum("...ka,...abm,...bl->...klm", G, jet.dg, G)
    low = christoffel_lower(jet.dg)
    dlow = 0.5 * (
        np.einsum("...jlim->...lijm", jet.d2g)
        + np.einsum("...iljm->...lijm", jet.d2g)
        - np.einsum("...ijlm->...lijm", jet.d2g)
    )
    return np.einsum("...klm,...lij->...kijm", dG, low) + np.einsum("...kl,...lijm->...kijm", G, dlow)


def gauss_curvature(jet: MetricJet) -> np.ndarray:
    """kappa = R_1212 / det g with R^r_smn = d_m Gam^r_ns - d_n Gam^r_ms + Gam^r_ml Gam^l_ns - Gam^r_nl Gam^l_ms."""
    if jet.d2g is None:
        raise ValueError("second derivatives required")
    Gam = christoffel(jet)
    dGam = christoffel_derivative(jet)
    # R^r_{2 1 2} with (s, m, n) = (1, 0, 1) in zero-based indices
    R = (
        dGam[..., :, 1, 1, 0]
        - dGam[..., :, 0, 1, 1]
        + np.einsum("...rl,...l->...r", Gam[..., :, 0, :], Gam[..., :, 1, 1])
        - np.einsum("...rl,...l->...r", Gam[..., :, 1, :], Gam[..., :, 0, 1])
    )
    R1212 = np.einsum("...r,...r->...", jet.g[..., 0, :], R)
    return R1212 / det2(jet.g)


def trace_g(g: np.ndarray, s: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...ij->...", inv2(g), s)


def s_operator(g: np.ndarray, s: np.ndarray) -> np.ndarray:
    """S sigma = sigma - g tr_g sigma."""
    return s - g * trace_g(g, s)[..., None, None]


def inner(g: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """<a, b>_g = g^ik g^jl a_ij b_kl for (0,2)-tensors."""
    G = inv2(g)
    return np.einsum("...ik,...jl,...ij,...kl->...", G, G, a, b)


def hessian(jet: MetricJet, dv: np.ndarray, d2v: np.ndarray) -> np.ndarray:
    """(Hess v)_ij = d_i d_j v - Gamma^k_ij d_k v."""
    return d2v - np.einsum("...kij,...k->...ij", christoffel(jet), dv)


def covariant_oneform(jet: MetricJet, a: np.ndarray, da: np.ndarray) -> np.ndarray:
    """(nabla alpha)_kl = d_k alpha_l - Gamma^m_kl alpha_m; ``da[..., l, k] = d_k alpha_l``."""
    return np.swapaxes(da, -1, -2) - np.einsum("...mkl,...m->...kl", christoffel(jet), a)


def covariant_sym(jet: MetricJet, s: np.ndarray, ds: np.ndarray) -> np.ndarray:
    """(nabla sigma)_kij = d_k s_ij - Gamma^m_ki s_mj - Gamma^m_kj s_im, stored [..., k, i, j]."""
    Gam = christoffel(jet)
    d = np.einsum("...ijk->...kij", ds)
    return d - np.einsum("...mki,...mj->...kij", Gam, s) - np.einsum("...mkj,...im->...kij", Gam, s)


def _s_operator_jet(jet: MetricJet, sj: SymTensorJet):
    """Values and first derivatives of S sigma."""
    G = inv2(jet.g)
    dG = -np.einsum("...ka,...abm,...bl->...klm", G, jet.dg, G)
    tr = np.einsum("...ij,...ij->...", G, sj.s)
    dtr = np.einsum("...ijm,...ij->...m", dG, sj.s) + np.einsum("...ij,...ijm->...m", G, sj.ds)
    Ss = sj.s - jet.g * tr[..., None, None]
    dSs = sj.ds - jet.dg * tr[..., None, None, None] - np.einsum("...ij,...m->...ijm", jet.g, dtr)
    return Ss, dSs


def div_s_sigma(jet: MetricJet, sj: SymTensorJet) -> np.ndarray:
    """(div S sigma)_j = g^ik (nabla_i S sigma)_kj."""
    Ss, dSs = _s_operator_jet(jet, sj)
    cov = covariant_sym(jet, Ss, dSs)
    return np.einsum("...ik,...ikj->...j", inv2(jet.g), cov)


# --- second-order quantities through 2-jet arithmetic ---------------------------
class _Jet:
    """Tensor-valued function with first and second partials (axes m, n last)."""

    def __init__(self, v, d, dd):
        self.v, self.d, self.dd = v, d, dd


def _jprod(spec: str, A: _Jet, B: _Jet) -> _Jet:
    ins, out = spec.split("->")
    a, b = ins.split(",")
    v = np.einsum(f"...{a},...{b}->...{out}", A.v, B.v)
    d = np.einsum(f"...{a}m,...{b}->...{out}m", A.d, B.v) + np.einsum(
        f"...{a},...{b}m->...{out}m", A.v, B.d
    )
    dd = (
        np.einsum(f"...{a}mn,...{b}->...{out}mn", A.dd, B.v)
        + np.einsum(f"...{a}m,...{b}n->...{out}mn", A.d, B.d)
        + np.einsum(f"...{a}n,...{b}m->...{out}mn", A.d, B.d)
        + np.einsum(f"...{a},...{b}mn->...{out}mn", A.v, B.dd)
    )
    return _Jet(v, d, dd)


def _inverse_jet(jet: MetricJet) -> _Jet:
    G = inv2(jet.g)
    dG = -np.einsum("...ka,...abm,...bl->...klm", G, jet.dg, G)
    dd = -(
        np.einsum("...kan,...abm,...bl->...klmn", dG, jet.dg, G)
        + np.einsum("...ka,...abmn,...bl->...klmn", G, jet.d2g, G)
        + np.einsum("...ka,...abm,...bln->...klmn", G, jet.dg, dG)
    )
    return _Jet(G, dG, dd)


def _sqrt_det_jet(jet: MetricJet) -> _Jet:
    gj = _Jet(jet.g, jet.dg, jet.d2g)
    a = _Jet(gj.v[..., 0, 0], gj.d[..., 0, 0, :], gj.dd[..., 0, 0, :, :])
    b = _Jet(gj.v[..., 1, 1], gj.d[..., 1, 1, :], gj.dd[..., 1, 1, :, :])
    c = _Jet(gj.v[..., 0, 1], gj.d[..., 0, 1, :], gj.dd[..., 0, 1, :, :])
    ab = _jprod(",->", a, b)
    cc = _jprod(",->", c, c)
    det = _Jet(ab.v - cc.v, ab.d - cc.d, ab.dd - cc.dd)
    s = np.sqrt(det.v)
    ds = det.d / (2 * s[..., None])
    dds = det.dd / (2 * s[..., None, None]) - np.einsum("...m,...n->...mn", det.d, det.d) / (
        4 * s[..., None, None] ** 3
    )
    return _Jet(s, ds, dds)


def divdiv_s_sigma(jet: MetricJet, sj: SymTensorJet) -> np.ndarray:
    """div div S sigma, via  (1/s) d_i ( d_j (s T^ij) + s Gamma^i_jk T^jk ),
    with T^ij = g^ia g^jb (S sigma)_ab and s = sqrt(det g)."""
    if jet.d2g is None or sj.d2s is None:
        raise ValueError("second derivatives required")
    check_spd(jet.g)
    G = _inverse_jet(jet)
    gj = _Jet(jet.g, jet.dg, jet.d2g)
    sig = _Jet(sj.s, sj.ds, sj.d2s)
    # tr_g sigma and S sigma as jets
    tr = _jprod("ij,ij->", G, sig)
    gtr = _jprod("ij,->ij", gj, tr)
    Ss = _Jet(sig.v - gtr.v, sig.d - gtr.d, sig.dd - gtr.dd)
    T = _jprod("ib,jb->ij", _jprod("ia,ab->ib", G, Ss), G)
    s = _sqrt_det_jet(jet)
    u = _jprod("ij,->ij", T, s)
    term1 = np.einsum("...ijij->...", u.dd)
    Gam = christoffel(jet)
    dGam = christoffel_derivative(jet)
    term2 = np.einsum("...ijki,...jk->...", dGam, u.v) + np.einsum("...ijk,...jki->...", Gam, u.d)
    return (term1 + term2) / s.v


# --- edge frames, geodesic curvature, angles -----------------------------------------
def edge_frame(g: np.ndarray, t: np.ndarray, nu: np.ndarray):
    """g-unit tangent and outward g-unit normal on a straight edge.

    ``t`` is the Euclidean edge vector, ``nu`` an outward Euclidean normal
    covector.  The tangent is oriented so that (n, tau) is right-handed.
    """
    t = np.asarray(t, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if np.any(np.linalg.norm(t, axis=-1) == 0):
        raise ValueError("degenerate tangent")
    G = inv2(g)
    n = np.einsum("...ij,...j->...i", G, nu)
    n = n / np.sqrt(np.einsum("...i,...i->...", n, nu))[..., None]
    lt = np.sqrt(np.einsum("...ij,...i,...j->...", g, t, t))
    tau = t / lt[..., None]
    orient = np.sign(n[..., 0] * tau[..., 1] - n[..., 1] * tau[..., 0])
    return tau * orient[..., None], n


def geodesic_curvature(jet: MetricJet, t: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """k_e = -g(n, nabla_tau tau) = -n^i Gamma_{i,kl} tau^k tau^l on a straight edge."""
    tau, n = edge_frame(jet.g, t, nu)
    low = christoffel_lower(jet.dg)
    return -np.einsum("...i,...ikl,...k,...l->...", n, low, tau, tau)


def interior_angle(g: np.ndarray, t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
    """Angle between two edge vectors emanating from a vertex, measured by g."""
    a = np.einsum("...ij,...i,...j->...", g, t1, t2)
    n1 = np.sqrt(np.einsum("...ij,...i,...j->...", g, t1, t1))
    n2 = np.sqrt(np.einsum("...ij,...i,...j->...", g, t2, t2))
    c = a / (n1 * n2)
    if np.any(np.abs(c) > 1 + 1e-12):
        raise ValueError("cosine out of range")
    cross = t1[..., 0] * t2[..., 1] - t1[..., 1] * t2[..., 0]
    if np.any(cross == 0):
        raise ValueError("parallel directions")
    return np.arccos(np.clip(c, -1.0, 1.0))
