"""Oriented triangulations of planar simply connected polygonal domains."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle mesh with derived edge table, boundary flags and vertex stars.

    ``tri_edges[t, k]`` is the edge opposite local vertex ``k`` of triangle
    ``t``; ``tri_edge_signs[t, k]`` is +1 when the counterclockwise traversal
    of that edge runs from ``edges[e, 0]`` to ``edges[e, 1]``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray = field(repr=False)
    edge_triangles: np.ndarray = field(repr=False)
    tri_edges: np.ndarray = field(repr=False)
    tri_edge_signs: np.ndarray = field(repr=False)
    boundary_edges: np.ndarray = field(repr=False)
    boundary_vertices: np.ndarray = field(repr=False)
    stars: tuple = field(repr=False)

    @classmethod
    def from_arrays(cls, vertices, triangles) -> "Mesh":
        V = np.array(vertices, dtype=float).reshape(-1, 2)
        T = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        if len(T) == 0:
            raise MeshError("mesh has no triangles")
        if T.min() < 0 or T.max() >= len(V):
            raise MeshError("triangle references a missing vertex")
        if np.any(_signed_areas(V, T) <= 0):
            raise MeshError("triangles must be counterclockwise with positive area")

        # local edge k joins local vertices k+1 -> k+2 (counterclockwise)
        a = T[:, [1, 2, 0]]
        b = T[:, [2, 0, 1]]
        lo = np.minimum(a, b).ravel()
        hi = np.maximum(a, b).ravel()
        keys = lo * len(V) + hi
        uniq, inv, counts = np.unique(keys, return_inverse=True, return_counts=True)
        if counts.max() > 2:
            raise MeshError("edge shared by more than two triangles")
        edges = np.column_stack([uniq // len(V), uniq % len(V)])
        tri_edges = inv.reshape(-1, 3)
        signs = np.where(a == edges[tri_edges, 0], 1, -1)
        et = np.full((len(edges), 2), -1, dtype=np.int64)
        slot = np.zeros(len(edges), dtype=np.int64)
        for t in range(len(T)):
            for k in range(3):
                e = tri_edges[t, k]
                et[e, slot[e]] = t
                slot[e] += 1
        # the two sides of an interior edge must traverse it in opposite directions
        for e in np.flatnonzero(counts == 2):
            t0, t1 = et[e]
            s0 = signs[t0][tri_edges[t0] == e][0]
            s1 = signs[t1][tri_edges[t1] == e][0]
            if s0 == s1:
                raise MeshError("inconsistently oriented neighbouring triangles")
        bedge = counts == 1
        bvert = np.zeros(len(V), dtype=bool)
        bvert[edges[bedge].ravel()] = True
        used = np.zeros(len(V), dtype=bool)
        used[T.ravel()] = True
        if not used.all():
            raise MeshError("mesh has unreferenced vertices")
        if len(V) - len(edges) + len(T) != 1:
            raise MeshError("domain is not simply connected (Euler characteristic != 1)")
        _check_single_boundary_loop(edges[bedge], len(V))
        stars = _vertex_stars(T, len(V), bvert)
        return cls(V, T, edges, et, tri_edges, signs, bedge, bvert, stars)

    # --- basic sizes -------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_edges)

    @property
    def interior_vertices(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_vertices)

    def edges_with_interior_endpoint(self) -> np.ndarray:
        """Edges having at least one endpoint off the boundary."""
        iv = ~self.boundary_vertices
        return np.flatnonzero(iv[self.edges[:, 0]] | iv[self.edges[:, 1]])

    def areas(self) -> np.ndarray:
        return 0.5 * _signed_areas(self.vertices, self.triangles)

    def diameters(self) -> np.ndarray:
        P = self.vertices[self.triangles]
        d = [np.linalg.norm(P[:, i] - P[:, j], axis=1) for i, j in ((0, 1), (1, 2), (2, 0))]
        return np.max(d, axis=0)

    @property
    def h(self) -> float:
        return float(self.diameters().max())

    def shape_regularity(self) -> float:
        """max_T h_T / rho_T with rho_T the inscribed diameter."""
        P = self.vertices[self.triangles]
        l = [np.linalg.norm(P[:, i] - P[:, j], axis=1) for i, j in ((0, 1), (1, 2), (2, 0))]
        rho = 4.0 * self.areas() / np.sum(l, axis=0)
        return float(np.max(self.diameters() / rho))

    # --- serialization -----------------------------------------------------
    def to_json(self) -> dict:
        return {"vertices": self.vertices.tolist(), "triangles": self.triangles.tolist()}

    @classmethod
    def from_json(cls, doc) -> "Mesh":
        if isinstance(doc, (str, Path)):
            doc = json.loads(Path(doc).read_text())
        return cls.from_arrays(doc["vertices"], doc["triangles"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))


def _signed_areas(V: np.ndarray, T: np.ndarray) -> np.ndarray:
    p0, p1, p2 = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
    u, w = p1 - p0, p2 - p0
    return u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0]


def _check_single_boundary_loop(bedges: np.ndarray, nv: int) -> None:
    deg = np.bincount(bedges.ravel(), minlength=nv)
    if np.any((deg != 0) & (deg != 2)):
        raise MeshError("boundary is not a simple closed curve")
    adj: dict[int, list[int]] = {}
    for a, b in bedges:
        adj.setdefault(int(a), []).append(int(b))
        adj.setdefault(int(b), []).append(int(a))
    start = int(bedges[0, 0])
    prev, cur, n = -1, start, 0
    while True:
        nxt = adj[cur][0] if adj[cur][0] != prev else adj[cur][1]
        prev, cur = cur, nxt
        n += 1
        if cur == start:
            break
    if n != len(bedges):
        raise MeshError("boundary has more than one component")


def _vertex_stars(T: np.ndarray, nv: int, bvert: np.ndarray) -> tuple:
    """Triangles around each vertex, ordered counterclockwise as a fan."""
    incident: list[list[int]] = [[] for _ in range(nv)]
    for t, tri in enumerate(T):
        for v in tri:
            incident[v].append(t)
    stars = []
    for z in range(nv):
        tris = incident[z]
        # for triangle (z, a, b) in counterclockwise order, map a -> (t, b)
        nxt = {}
        for t in tris:
            k = int(np.flatnonzero(T[t] == z)[0])
            a, b = T[t][(k + 1) % 3], T[t][(k + 2) % 3]
            nxt[int(a)] = (t, int(b))
        if bvert[z]:
            targets = {b for _, b in nxt.values()}
            starts = [a for a in nxt if a not in targets]
            if len(starts) != 1:
                raise MeshError(f"vertex {z} has a non-manifold star")
            a = starts[0]
        else:
            a = next(iter(nxt))
        order = []
        while a in nxt and len(order) < len(tris):
            t, a = nxt[a]
            order.append(t)
        if len(order) != len(tris):
            raise MeshError(f"vertex {z} has a disconnected star")
        stars.append(np.array(order, dtype=np.int64))
    return tuple(stars)


def build_structured(domain=(0.0, 1.0, 0.0, 1.0), n: int = 1) -> Mesh:
    """Structured triangulation of a rectangle with 2 n^2 triangles.

    Each cell is split by the diagonal through the domain corner of its
    quadrant, so that (for n >= 2) no triangle has two boundary edges.
    """
    if int(n) != n or n < 1:
        raise MeshError("n must be a positive integer")
    n = int(n)
    x0, x1, y0, y1 = map(float, domain)
    if not (x1 > x0 and y1 > y0):
        raise MeshError("degenerate rectangle")
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    V = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            sw, se, nw, ne = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            cx, cy = (i + 0.5) / n - 0.5, (j + 0.5) / n - 0.5
            if cx * cy >= 0:
                tris += [(sw, se, ne), (sw, ne, nw)]
            else:
                tris += [(sw, se, nw), (se, ne, nw)]
    return Mesh.from_arrays(V, tris)


def refine(mesh: Mesh) -> Mesh:
    """Uniform red refinement: every triangle is split into four."""
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    V = np.vstack([mesh.vertices, mids])
    T = mesh.triangles
    m = nv + mesh.tri_edges  # midpoint of edge opposite local vertex k
    a, b, c = T[:, 0], T[:, 1], T[:, 2]
    ma, mb, mc = m[:, 0], m[:, 1], m[:, 2]
    new = np.concatenate(
        [
            np.column_stack([a, mc, mb]),
            np.column_stack([mc, b, ma]),
            np.column_stack([mb, ma, c]),
            np.column_stack([ma, mb, mc]),
        ]
    )
    return Mesh.from_arrays(V, new)
