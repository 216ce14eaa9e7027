"""Manufactured metrics, convergence studies and verification runs."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np
import sympy as sp

from .curvature import connection_load, curvature_load, discrete_curvature, reference_connection
from .fespace import FeSpace
from .fields import X, Y, SymbolicField
from .forms import FormContext
from .geom import MetricJet, gauss_curvature
from .linalg import DualNormContext
from .mesh import build_structured
from .polyquad import tri_rule
from .regge import interp_regge, is_metric

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


# --- manufactured metrics ---------------------------------------------------------
@dataclass
class ManufacturedMetric:
    """Closed-form metric with its exact Gaussian curvature."""

    id: str
    params: dict
    g: SymbolicField
    kappa: SymbolicField
    domain: tuple = (0.0, 1.0, 0.0, 1.0)

    @classmethod
    def create(cls, id: str, params: dict | None = None) -> "ManufacturedMetric":
        params = dict(params or {})
        if id == "conformal":
            a = sp.nsimplify(params.get("amplitude", 0.2))
            k = sp.nsimplify(params.get("frequency", 1))
            phi = a * sp.sin(k * sp.pi * X) * sp.sin(k * sp.pi * Y)
            g = sp.exp(2 * phi) * sp.eye(2)
            kappa = -sp.exp(-2 * phi) * (sp.diff(phi, X, 2) + sp.diff(phi, Y, 2))
        elif id == "graph":
            a = sp.nsimplify(params.get("amplitude", 0.5))
            f = a * sp.sin(sp.pi * X / 2) * sp.cos(sp.pi * Y / 2)
            fx, fy = sp.diff(f, X), sp.diff(f, Y)
            g = sp.Matrix([[1 + fx**2, fx * fy], [fx * fy, 1 + fy**2]])
            hess = sp.diff(f, X, 2) * sp.diff(f, Y, 2) - sp.diff(f, X, Y) ** 2
            kappa = hess / (1 + fx**2 + fy**2) ** 2
        else:
            raise ConfigError(f"unknown metric id {id!r}")
        out = cls(id, params, SymbolicField(g, (2, 2)), SymbolicField(kappa))
        out.validate()
        return out

    def validate(self, npts: int = 25, tol: float = 1e-10) -> float:
        """Compare the closed-form curvature with the jet-based one at sample points."""
        rng = np.random.default_rng(1234)
        x0, x1, y0, y1 = self.domain
        pts = np.column_stack([rng.uniform(x0, x1, npts), rng.uniform(y0, y1, npts)])[None]
        jet = MetricJet(*self.g(pts, 2))
        err = float(np.abs(gauss_curvature(jet) - self.kappa(pts)[0]).max())
        if err > tol:
            raise ConfigError(f"curvature formula of {self.id!r} disagrees with the metric jets ({err:.2e})")
        return err

    def volume_density(self) -> SymbolicField:
        M = self.g.matrix()
        return SymbolicField(sp.sqrt(M.det()))


# --- configuration -------------------------------------------------------------
CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "metric": {
            "type": "object",
            "properties": {"id": {"enum": ["conformal", "graph"]}, "params": {"type": "object"}},
            "required": ["id"],
        },
        "degrees": {"type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 3}, "minItems": 1},
        "levels": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2},
        "quad_degree_boost": {"type": "integer", "minimum": 0},
        "enrich_degree": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "out": {"type": "string"},
    },
    "required": ["metric"],
    "additionalProperties": False,
}

DEFAULTS = {"degrees": [1, 2], "levels": [4, 8, 16, 32], "quad_degree_boost": 4, "enrich_degree": 3, "seed": 0}


def load_config(source) -> dict:
    if isinstance(source, dict):
        doc = dict(source)
    else:
        try:
            doc = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(exc.message) from exc
    return {**DEFAULTS, **doc}


# --- convergence study -------------------------------------------------------------
@dataclass
class LevelResult:
    r: int
    n: int
    h: float
    E_kappa_dual: float
    E_conn_dual: float
    E_kappa_L2: float
    rate_kappa: float = float("nan")
    rate_conn: float = float("nan")
    seconds: float = 0.0


def _kappa_reference_load(mm: ManufacturedMetric, Vh: FeSpace, qdeg: int) -> np.ndarray:
    """v -> int kappa v omega with exact kappa and volume density."""
    rule = tri_rule(qdeg)
    mesh = Vh.mesh
    cells = np.arange(mesh.n_triangles)
    geom = Vh.geom
    pts = geom.points(cells, rule.xi)
    dens = mm.kappa(pts)[0] * mm.volume_density()(pts)[0]
    w = rule.weights[None, :] * (np.abs(geom.detJ) / 2)[:, None]
    phi = Vh.tabulate(cells, rule.xi, 0)[0]
    F = Vh.scatter(cells, np.einsum("cq,cqn->cn", w * dens, phi))
    F[Vh.boundary] = 0.0
    return F


def _kappa_l2_error(mm: ManufacturedMetric, kh, qdeg: int) -> float:
    rule = tri_rule(qdeg)
    mesh = kh.space.mesh
    geom = kh.space.geom
    cells = np.arange(mesh.n_triangles)
    pts = geom.points(cells, rule.xi)
    diff = kh.evaluate(geom, cells, rule.xi, 0)[0] - mm.kappa(pts)[0]
    w = rule.weights[None, :] * (np.abs(geom.detJ) / 2)[:, None]
    return float(np.sqrt(np.sum(w * diff**2)))


class NotAMetric(RuntimeError):
    pass


def convergence_level(mm: ManufacturedMetric, r: int, n: int, boost: int = 4, enrich: int = 3) -> LevelResult:
    t0 = time.perf_counter()
    mesh = build_structured(mm.domain, n)
    gh = interp_regge(mesh, r, mm.g)
    probe = is_metric(gh)
    if not probe["ok"]:
        raise NotAMetric(f"interpolant is not positive definite at n={n}: {probe}")
    qdeg = 2 * r + 6 + boost
    ctx = FormContext(mesh, gh, qdeg=qdeg)
    Ve = DualNormContext(mesh, "V", r + enrich)
    We = DualNormContext(mesh, "W", r + enrich)
    Fk = curvature_load(gh, Ve.space, ctx) - _kappa_reference_load(mm, Ve.space, qdeg + 2)
    Fc, _ = connection_load(gh, We.space, ctx)
    Fa, _ = reference_connection(mm.g, We.space, qdeg=qdeg + 2)
    kh = discrete_curvature(gh, FeSpace(mesh, "lagrange", r + 1), ctx)
    res = LevelResult(
        r=r,
        n=n,
        h=mesh.h,
        E_kappa_dual=Ve.dual_norm(Fk),
        E_conn_dual=We.dual_norm(Fc - Fa),
        E_kappa_L2=_kappa_l2_error(mm, kh, qdeg + 2),
    )
    res.seconds = time.perf_counter() - t0
    return res


def observed_rates(results: list[LevelResult]) -> None:
    for prev, cur in zip(results[:-1], results[1:]):
        lh = np.log(prev.h / cur.h)
        cur.rate_kappa = float(np.log(prev.E_kappa_dual / cur.E_kappa_dual) / lh)
        cur.rate_conn = float(np.log(prev.E_conn_dual / cur.E_conn_dual) / lh)


CSV_COLUMNS = ["r", "n", "h", "E_kappa_dual", "rate_kappa", "E_conn_dual", "rate_conn", "E_kappa_L2"]

PLOT_TEMPLATE = """# Plot template for {csv}
# columns: {cols}
# gnuplot:
#   set datafile separator ','; set logscale xy; set key autotitle columnhead
#   plot for [r in "{degrees}"] '{csv}' using ($1==r ? $3 : 1/0):4 with linespoints title 'E_kappa r='.r, \\
#        for [r in "{degrees}"] '{csv}' using ($1==r ? $3 : 1/0):6 with linespoints title 'E_conn r='.r
# matplotlib:
#   import csv, matplotlib.pyplot as plt
#   rows = list(csv.DictReader(open('{csv}')))
#   for r in sorted({{row['r'] for row in rows}}):
#       sel = [row for row in rows if row['r'] == r]
#       plt.loglog([float(s['h']) for s in sel], [float(s['E_kappa_dual']) for s in sel], 'o-', label=f'kappa r={{r}}')
#       plt.loglog([float(s['h']) for s in sel], [float(s['E_conn_dual']) for s in sel], 's--', label=f'conn r={{r}}')
#   plt.legend(); plt.xlabel('h'); plt.show()
"""


def write_csv(results: list[LevelResult], path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for res in results:
            w.writerow([res.r, res.n, repr(res.h)] + [repr(float(getattr(res, c))) for c in CSV_COLUMNS[3:]])
    degrees = " ".join(sorted({str(r.r) for r in results}))
    path.with_suffix(".plot.txt").write_text(
        PLOT_TEMPLATE.format(csv=path.name, cols=", ".join(CSV_COLUMNS), degrees=degrees)
    )


def run_convergence(config, out=None) -> list[LevelResult]:
    cfg = load_config(config)
    mm = ManufacturedMetric.create(cfg["metric"]["id"], cfg["metric"].get("params"))
    results = []
    for r in cfg["degrees"]:
        if r < 1:
            raise ConfigError("convergence studies need r >= 1")
        per = []
        for n in sorted(cfg["levels"]):
            try:
                res = convergence_level(mm, r, n, cfg["quad_degree_boost"], cfg["enrich_degree"])
            except NotAMetric as exc:
                log.warning("skipping level: %s", exc)
                continue
            log.info("r=%d n=%d E_kappa=%.3e E_conn=%.3e (%.1fs)", r, n, res.E_kappa_dual, res.E_conn_dual, res.seconds)
            per.append(res)
        observed_rates(per)
        results.extend(per)
    out = out or cfg.get("out")
    if out:
        write_csv(results, out)
    return results


def rates_within(results: list[LevelResult], r: int, lo: float, hi: float, last: int = 2) -> dict:
    """Whether the last ``last`` observed rates for degree r lie in [r + lo, r + hi]."""
    sel = [x for x in results if x.r == r][-last:]
    ok = all(r + lo <= x.rate_kappa <= r + hi and r + lo <= x.rate_conn <= r + hi for x in sel)
    return {
        "ok": bool(ok),
        "rate_kappa": [x.rate_kappa for x in sel],
        "rate_conn": [x.rate_conn for x in sel],
    }


# --- verification run ---------------------------------------------------------------
VERIFY_REPORT_SCHEMA = {
    "type": "object",
    "properties": {
        "passed": {"type": "boolean"},
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "name": {"type": "string"},
                    "passed": {"type": "boolean"},
                    "details": {"type": "object"},
                },
                "required": ["name", "passed", "details"],
            },
        },
    },
    "required": ["passed", "checks"],
}


def run_verify(config) -> dict:
    from . import verify

    cfg = load_config(config)
    reports = verify.run_all(cfg)
    doc = {"passed": all(r.passed for r in reports), "checks": [r.to_json() for r in reports]}
    jsonschema.validate(doc, VERIFY_REPORT_SCHEMA)
    return doc
