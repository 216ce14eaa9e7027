"""Fields evaluable at reference points of mesh cells.

Every field exposes ``shape`` and ``evaluate(geom, cells, xi, nderiv)``
returning ``[values, first derivatives, second derivatives]`` (as many as
requested) with shapes (nc, nq, *shape, [2, [2]]) in physical coordinates.
Finite element functions follow the same protocol.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
import sympy as sp

X, Y = sp.symbols("x y", real=True)


class SymbolicField:
    """Closed-form field given by sympy expressions in ``x``, ``y``.

    Extra parameter symbols (for instance a path parameter ``t``) may be
    declared; their values are bound with :meth:`at`.
    """

    def __init__(self, exprs, shape: tuple = (), params: Sequence[sp.Symbol] = (), values=None):
        self.shape = tuple(shape)
        flat = sp.flatten(exprs) if self.shape else [exprs]
        if len(flat) != int(np.prod(self.shape)):
            raise ValueError("expression count does not match shape")
        self.exprs = [sp.sympify(e) for e in flat]
        self.params = tuple(params)
        self.values = tuple(values) if values is not None else (0.0,) * len(self.params)
        self._compiled: dict = {}

    def at(self, **kw) -> "SymbolicField":
        vals = list(self.values)
        for i, p in enumerate(self.params):
            if p.name in kw:
                vals[i] = float(kw[p.name])
        f = SymbolicField.__new__(SymbolicField)
        f.shape, f.exprs, f.params, f.values = self.shape, self.exprs, self.params, tuple(vals)
        f._compiled = self._compiled
        return f

    def substitute(self, **kw) -> "SymbolicField":
        """Field with some parameters replaced by numbers in the expressions."""
        sub = {p: kw[p.name] for p in self.params if p.name in kw}
        rest = [p for p in self.params if p.name not in kw]
        vals = [v for p, v in zip(self.params, self.values) if p.name not in kw]
        ex = [e.subs(sub) for e in self.exprs]
        out = SymbolicField(0)
        out.shape, out.exprs, out.params, out.values = self.shape, ex, tuple(rest), tuple(vals)
        return out

    def _fn(self, order: int):
        if order not in self._compiled:
            if order == 0:
                ex = self.exprs
            elif order == 1:
                ex = [sp.diff(e, v) for e in self.exprs for v in (X, Y)]
            else:
                ex = [sp.diff(e, v, w) for e in self.exprs for v in (X, Y) for w in (X, Y)]
            self._compiled[order] = sp.lambdify((X, Y) + self.params, ex, "numpy")
        return self._compiled[order]

    def __call__(self, pts: np.ndarray, nderiv: int = 0) -> list[np.ndarray]:
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        out = []
        for order in range(nderiv + 1):
            vals = self._fn(order)(x, y, *self.values)
            arr = np.stack([np.broadcast_to(np.asarray(v, dtype=float), x.shape) for v in vals], axis=-1)
            out.append(arr.reshape(x.shape + self.shape + (2,) * order))
        return out

    def evaluate(self, geom, cells, xi, nderiv: int = 0) -> list[np.ndarray]:
        return self(geom.points(np.asarray(cells), xi), nderiv)

    def diff_param(self, name: str) -> "SymbolicField":
        p = next(q for q in self.params if q.name == name)
        f = SymbolicField(0)
        f.shape = self.shape
        f.exprs = [sp.diff(e, p) for e in self.exprs]
        f.params, f.values, f._compiled = self.params, self.values, {}
        return f

    def matrix(self) -> sp.Matrix:
        if self.shape != (2, 2):
            raise ValueError("not a 2x2 tensor field")
        return sp.Matrix(2, 2, self.exprs)


class ConstantField:
    def __init__(self, value):
        self.value = np.asarray(value, dtype=float)
        self.shape = self.value.shape
        self.degree = 0

    def evaluate(self, geom, cells, xi, nderiv: int = 0) -> list[np.ndarray]:
        nq = np.asarray(xi).shape[-2]
        lead = (len(np.asarray(cells)), nq)
        out = [np.broadcast_to(self.value, lead + self.shape)]
        for order in range(1, nderiv + 1):
            out.append(np.zeros(lead + self.shape + (2,) * order))
        return out


EUCLIDEAN = ConstantField(np.eye(2))


class Combination:
    """Field  sum_i c_i f_i + const."""

    def __init__(self, terms, const=None):
        self.terms = [(float(c), f) for c, f in terms]
        shapes = {tuple(f.shape) for _, f in self.terms}
        if const is not None:
            self.const = np.asarray(const, dtype=float)
            shapes.add(self.const.shape)
        else:
            self.const = None
        if len(shapes) != 1:
            raise ValueError("incompatible field shapes")
        self.shape = shapes.pop()
        self.degree = max((getattr(f, "degree", 2) for _, f in self.terms), default=0)

    def evaluate(self, geom, cells, xi, nderiv: int = 0) -> list[np.ndarray]:
        out = None
        for c, f in self.terms:
            vals = f.evaluate(geom, cells, xi, nderiv)
            if out is None:
                out = [c * v for v in vals]
            else:
                out = [o + c * v for o, v in zip(out, vals)]
        if out is None:
            nq = np.asarray(xi).shape[-2]
            lead = (len(np.asarray(cells)), nq)
            out = [np.zeros(lead + self.shape + (2,) * k) for k in range(nderiv + 1)]
        if self.const is not None:
            out[0] = out[0] + self.const
        return out


def metric_path(g, t: float):
    """(1 - t) delta + t g."""
    return Combination([(t, g)], const=(1.0 - t) * np.eye(2))


def minus_delta(g):
    """g - delta."""
    return Combination([(1.0, g)], const=-np.eye(2))


class DeformationField:
    """epsilon u = (1/2) L_u g for a vector field ``u`` and metric ``g``.

    In coordinates: (eps u)_ij = 1/2 (u^k d_k g_ij + g_kj d_i u^k + g_ik d_j u^k).
    First derivatives need second derivatives of both ``u`` and ``g``.
    """

    def __init__(self, u, g=None):
        self.u = u
        self.g = g if g is not None else EUCLIDEAN
        self.shape = (2, 2)
        self.degree = getattr(u, "degree", 2)

    def evaluate(self, geom, cells, xi, nderiv: int = 0) -> list[np.ndarray]:
        if nderiv > 1:
            raise ValueError("deformation fields provide at most first derivatives")
        U = self.u.evaluate(geom, cells, xi, nderiv + 1)
        G = self.g.evaluate(geom, cells, xi, nderiv + 1)
        u, du = U[0], U[1]  # du[..., k, i] = d_i u^k
        g, dg = G[0], G[1]  # dg[..., i, j, k] = d_k g_ij
        A = np.einsum("...kj,...ki->...ij", g, du)
        val = 0.5 * (np.einsum("...k,...ijk->...ij", u, dg) + A + np.swapaxes(A, -1, -2))
        out = [val]
        if nderiv == 1:
            d2u, d2g = U[2], G[2]
            B = np.einsum("...kjm,...ki->...ijm", dg, du) + np.einsum("...kj,...kim->...ijm", g, d2u)
            d = 0.5 * (
                np.einsum("...km,...ijk->...ijm", du, dg)
                + np.einsum("...k,...ijkm->...ijm", u, d2g)
                + B
                + np.swapaxes(B, -2, -3)
            )
            out.append(d)
        return out


def deformation(u, g=None) -> DeformationField:
    return DeformationField(u, g)


class PiecewiseConstantField:
    """One constant value per triangle."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)
        self.shape = self.values.shape[1:]
        self.degree = 0

    def evaluate(self, geom, cells, xi, nderiv: int = 0) -> list[np.ndarray]:
        nq = np.asarray(xi).shape[-2]
        v = self.values[np.asarray(cells)]
        out = [np.broadcast_to(v[:, None], (len(v), nq) + self.shape)]
        for order in range(1, nderiv + 1):
            out.append(np.zeros((len(v), nq) + self.shape + (2,) * order))
        return out
