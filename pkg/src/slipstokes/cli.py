"""
Batch front door: meshing, single solves, convergence studies, penalty
sweeps and boundary-geometry checks.

Every subcommand resolves a RunConfig (defaults < ``--config FILE`` <
flags), echoes it to ``run.json`` in the output directory and writes
plain CSV / markdown / SVG files.  Exit codes: 0 success, 2 usage or
config error, 3 solver non-convergence (results are still written),
4 I/O error.
"""
import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import analysis, assembly, geometry, mesh as meshmod
from .assembly import ElementChoice
from .cases import disk_case

log = logging.getLogger("slipstokes")

EXIT_OK, EXIT_USAGE, EXIT_NONCONV, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# --- configuration ------------------------------------------------------------

@dataclass
class MeshConfig:
    rings: int = None           # None: subcommand default
    refine: int = 0
    node: str = None
    ele: str = None


@dataclass
class SolverSettings:
    method: str = "sparse_lu"
    restart: int = 30
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_iter: int = None
    precond: str = "ilu0"
    dense_cap: int = 6000


@dataclass
class SweepConfig:
    eps_list: list = field(default_factory=lambda: list(analysis.DEFAULT_EPS))
    restarts: list = field(default_factory=lambda: [30, 200])
    rel_tol: float = 1e-6
    abs_tol: float = 1e-10
    max_cycles: int = 50


@dataclass
class GeometryConfig:
    domain: str = "disk"
    a: float = 1.25
    b: float = 1.0


@dataclass
class RunConfig:
    element: str = "P1"
    eta: float = 0.01
    scheme: str = "reduced"
    eps_rule: str = "0.1h2"
    eps: float = None
    reduced_data: str = "pointwise"
    case: str = "builtin_disk"
    levels: int = 4
    compare: str = "none"
    out: str = "out"
    mesh: MeshConfig = field(default_factory=MeshConfig)
    solver: SolverSettings = field(default_factory=SolverSettings)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)


_SECTIONS = {"mesh": MeshConfig, "solver": SolverSettings, "sweep": SweepConfig,
             "geometry": GeometryConfig}

_CHOICES = {
    "element": ("P1", "P1b"),
    "scheme": ("full", "reduced"),
    "eps_rule": ("0.1h", "0.1h2", "fixed"),
    "reduced_data": ("pointwise", "interpolated"),
    "case": ("builtin_disk", "zero_data"),
    "compare": ("none", "all"),
    "solver.method": ("sparse_lu", "dense_lu", "gmres", "bicgstab"),
    "solver.precond": ("ilu0", "none"),
    "geometry.domain": ("disk", "ellipse"),
}

_TYPES = {
    "element": str, "eta": float, "scheme": str, "eps_rule": str, "eps": (float, type(None)),
    "reduced_data": str, "case": str, "levels": int, "compare": str, "out": str,
    "mesh.rings": (int, type(None)), "mesh.refine": int,
    "mesh.node": (str, type(None)), "mesh.ele": (str, type(None)),
    "solver.method": str, "solver.restart": int, "solver.rel_tol": float,
    "solver.abs_tol": float, "solver.max_iter": (int, type(None)), "solver.precond": str,
    "solver.dense_cap": int,
    "sweep.eps_list": list, "sweep.restarts": list, "sweep.rel_tol": float,
    "sweep.abs_tol": float, "sweep.max_cycles": int,
    "geometry.domain": str, "geometry.a": float, "geometry.b": float,
}


def _check_type(key, value):
    want = _TYPES[key]
    want = want if isinstance(want, tuple) else (want,)
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected {want[0].__name__}, got bool")
    if float in want and isinstance(value, int):
        return float(value)
    if not isinstance(value, want):
        raise ConfigError(f"{key}: expected {want[0].__name__}, got {type(value).__name__}")
    return value


def _merge(cfg, data, prefix=""):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected an object")
    for key, value in data.items():
        name = prefix + key
        if not prefix and key in _SECTIONS:
            _merge(getattr(cfg, key), value, key + ".")
            continue
        if name not in _TYPES or not hasattr(cfg, key):
            raise ConfigError(f"unknown config key {name!r}")
        setattr(cfg, key, _check_type(name, value))


def _get(cfg, name):
    obj = cfg
    for part in name.split("."):
        obj = getattr(obj, part)
    return obj


def check_config(cfg):
    """Value-level validation; raises ConfigError."""
    for name, allowed in _CHOICES.items():
        if _get(cfg, name) not in allowed:
            raise ConfigError(f"{name} must be one of {allowed}, got {_get(cfg, name)!r}")
    if cfg.element == "P1" and not cfg.eta > 0:
        raise ConfigError("P1 needs eta > 0")
    if cfg.eps_rule == "fixed" and (cfg.eps is None or not cfg.eps > 0):
        raise ConfigError("eps_rule 'fixed' needs eps > 0")
    if cfg.levels < 2:
        raise ConfigError("levels must be >= 2")
    m = cfg.mesh
    if m.rings is not None and m.rings < 1:
        raise ConfigError("mesh.rings must be >= 1")
    if m.refine < 0:
        raise ConfigError("mesh.refine must be >= 0")
    if (m.node is None) != (m.ele is None):
        raise ConfigError("mesh.node and mesh.ele must be given together")
    s = cfg.solver
    if s.restart < 1 or s.rel_tol <= 0 or s.abs_tol < 0 or s.dense_cap < 1:
        raise ConfigError("invalid solver settings")
    w = cfg.sweep
    if not w.eps_list or any(not isinstance(e, (int, float)) or isinstance(e, bool) or e <= 0
                             for e in w.eps_list):
        raise ConfigError("sweep.eps_list must be a nonempty list of positive numbers")
    if not w.restarts or any(not isinstance(r, int) or isinstance(r, bool) or r < 1
                             for r in w.restarts):
        raise ConfigError("sweep.restarts must be a nonempty list of positive integers")
    w.eps_list = [float(e) for e in w.eps_list]
    g = cfg.geometry
    if g.domain == "ellipse" and not (g.a > 0 and g.b > 0):
        raise ConfigError("ellipse semi-axes must be positive")
    return cfg


def load_config(path=None, overrides=None):
    """Defaults, then the JSON file, then flag overrides ({dotted key: value})."""
    cfg = RunConfig()
    if path is not None:
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        _merge(cfg, data)
    for name, value in (overrides or {}).items():
        head, _, tail = name.rpartition(".")
        _merge(cfg, {tail: value} if not head else {head: {tail: value}})
    return check_config(cfg)


# --- shared plumbing ------------------------------------------------------------

def _element(cfg):
    return ElementChoice(cfg.element, cfg.eta if cfg.element == "P1" else 0.0)


def _case(cfg):
    case = disk_case()
    return case.with_zero_data() if cfg.case == "zero_data" else case


def _solver_cfg(cfg):
    return analysis.SolverConfig(**asdict(cfg.solver))


def _initial_mesh(cfg, default_rings):
    domain = geometry.UnitDisk()
    m = cfg.mesh
    if m.node is not None:
        mesh = meshmod.import_triangle(m.node, m.ele)
        mesh = meshmod.validate(meshmod.snap_boundary(mesh, domain), domain)
    else:
        mesh = meshmod.build_disk_mesh(m.rings or default_rings)
    return meshmod.refine_n(mesh, domain, m.refine), domain


def _prepare_out(cfg):
    os.makedirs(cfg.out, exist_ok=True)
    return cfg.out


def write_run_json(cfg, command, extra=None):
    payload = {"command": command, "config": asdict(cfg)}
    if extra:
        payload.update(extra)
    path = os.path.join(cfg.out, "run.json")
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(float(v))
    return v


def _write_rows(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r[k]) for k in columns})


# --- SVG ----------------------------------------------------------------------

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def loglog_svg(series, xlabel, ylabel, title, ref_slope=None, width=480, height=360):
    """Self-contained log-log chart: one <polyline> per series and, when
    ``ref_slope`` is given, one <polygon> reference triangle of that slope."""
    pad = 56
    xs = np.concatenate([np.asarray(s[1], float) for s in series])
    ys = np.concatenate([np.asarray(s[2], float) for s in series])
    ok = (xs > 0) & (ys > 0) & np.isfinite(xs) & np.isfinite(ys)
    lx, ly = np.log10(xs[ok]), np.log10(ys[ok])
    x0, x1 = lx.min(), lx.max()
    y0, y1 = ly.min(), ly.max()
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1

    def px(v):
        return pad + (np.log10(v) - x0) / (x1 - x0) * (width - 2 * pad)

    def py(v):
        return height - pad - (np.log10(v) - y0) / (y1 - y0) * (height - 2 * pad)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" style="fill:#ffffff"/>',
           f'<text x="{width / 2:.1f}" y="20" style="font:14px sans-serif;text-anchor:middle">'
           f'{title}</text>',
           f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
           'style="fill:none;stroke:#444444;stroke-width:1"/>',
           f'<text x="{width / 2:.1f}" y="{height - 14}" '
           f'style="font:12px sans-serif;text-anchor:middle">{xlabel} (log)</text>',
           f'<text x="16" y="{height / 2:.1f}" transform="rotate(-90 16 {height / 2:.1f})" '
           f'style="font:12px sans-serif;text-anchor:middle">{ylabel} (log)</text>']
    for k, (label, x, y) in enumerate(series):
        x, y = np.asarray(x, float), np.asarray(y, float)
        keep = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[keep], y[keep]))
        color = _COLORS[k % len(_COLORS)]
        out.append(f'<polyline points="{pts}" '
                   f'style="fill:none;stroke:{color};stroke-width:2"><title>{label}</title>'
                   '</polyline>')
        out.append(f'<text x="{width - pad - 4}" y="{pad + 16 + 14 * k}" '
                   f'style="font:11px sans-serif;text-anchor:end;fill:{color}">{label}</text>')
    if ref_slope is not None:
        # triangle spanning a third of a decade-range in x, below the data
        xa = 10 ** (x0 + 0.55 * (x1 - x0))
        xb = 10 ** (x0 + 0.85 * (x1 - x0))
        ya = 10 ** (y0 + 0.08 * (y1 - y0))
        if ref_slope < 0:
            ya = 10 ** (y1 - 0.08 * (y1 - y0))
        yb = ya * (xb / xa) ** ref_slope
        if ref_slope > 0:
            tri = [(xa, ya), (xb, ya), (xb, yb)]
        else:
            tri = [(xa, ya), (xb, yb), (xa, yb)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in tri)
        out.append(f'<polygon class="ref-triangle" points="{pts}" '
                   'style="fill:none;stroke:#000000;stroke-width:1"/>')
        cx, cy = np.mean([px(a) for a, _ in tri]), np.mean([py(b) for _, b in tri])
        out.append(f'<text x="{cx:.1f}" y="{cy:.1f}" style="font:10px sans-serif">'
                   f'slope {ref_slope:g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# --- markdown -----------------------------------------------------------------

_LABELS = {"full": "NR", "reduced": "R", "dirichlet": "Dir"}


def convergence_markdown(studies, cfg, key="h1u"):
    """Rate table in the layout h | DOF | error | Rate | Itr, one block per comparator."""
    names = {"h1u": "H1", "l2u": "L2", "l2p": "L2 pressure"}
    schemes = list(studies)
    first = studies[schemes[0]]
    head = ["h", "DOF"]
    for s in schemes:
        lab = _LABELS[s]
        head += [f"err {lab}", "Rate", "Itr"]
    lines = [f"### {names[key]} error ({cfg.element}, eta={cfg.eta:g}, eps rule {cfg.eps_rule})",
             "", "| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for i, rec in enumerate(first):
        cells = [f"{rec.h:.3f}", str(rec.n_dof)]
        for s in schemes:
            row = studies[s][i].row()
            itr = str(row["iters"]) if row["converged"] else "(not converged)"
            cells += [f"{row[key]:.4g}", analysis.format_rate(row[f"rate_{key}"]), itr]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def sweep_markdown(rows, restarts):
    head = ["eps", "cond2", "Rate"] + [f"Itr (restart={m})" for m in restarts] + ["Itr (BiCGSTAB)",
                                                                                "LU residual"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    prev = None
    for r in rows:
        rt = math.nan
        if prev is not None:
            rt = analysis.rate(prev["cond2"], r["cond2"], 1 / prev["eps"], 1 / r["eps"])
        cells = [f"{r['eps']:.1e}", f"{r['cond2']:.3e}", analysis.format_rate(rt)]
        for m in restarts:
            ok = r[f"conv_gmres_r{m}"]
            cells.append(str(r[f"iters_gmres_r{m}"]) if ok else "(not converged)")
        cells.append(str(r["iters_bicgstab"]) if r["conv_bicgstab"] else "(not converged)")
        cells.append(f"{r['lu_residual']:.1e}")
        lines.append("| " + " | ".join(cells) + " |")
        prev = r
    return "\n".join(lines) + "\n"


# --- subcommands ----------------------------------------------------------------

def cmd_mesh(args, cfg):
    domain = geometry.UnitDisk()
    mesh = meshmod.refine_n(meshmod.build_disk_mesh(cfg.mesh.rings or 4), domain, cfg.mesh.refine)
    meshmod.export_triangle(mesh, args.out_prefix)
    stats = meshmod.mesh_stats(mesh)
    print(json.dumps(stats, indent=2))
    write_run_json(cfg, "mesh", {"prefix": args.out_prefix, "stats": stats})
    return EXIT_OK


SOLVE_COLUMNS = ["h", "dof", "scheme", "eps", "l2u", "h1u", "l2p", "k_h",
                 "penetration", "speed", "iters", "residual", "converged"]


def cmd_solve(args, cfg):
    mesh, _ = _initial_mesh(cfg, default_rings=8)
    case, element = _case(cfg), _element(cfg)
    eps = analysis.epsilon_for(cfg.eps_rule, mesh.h, cfg.eps)
    sol = analysis.solve_penalty(mesh, case, element, eps, cfg.scheme, _solver_cfg(cfg),
                                 cfg.reduced_data)
    err = analysis.error_norms(mesh, sol.u, sol.p, case, element)
    slip = analysis.boundary_slip_report(mesh, sol.u)
    row = {"h": mesh.h, "dof": sol.system.n_dof, "scheme": cfg.scheme, "eps": eps,
           "l2u": err.l2_velocity, "h1u": err.h1_velocity, "l2p": err.l2_pressure,
           "k_h": err.k_h, "penetration": slip["penetration"], "speed": slip["speed"],
           "iters": sol.report.iterations, "residual": sol.report.residual,
           "converged": int(sol.report.converged)}
    _write_rows(os.path.join(cfg.out, "solve.csv"), SOLVE_COLUMNS, [row])
    report = ["# Single solve", "",
              "| quantity | value |", "|---|---|"]
    report += [f"| {k} | {_fmt(row[k])} |" for k in SOLVE_COLUMNS]
    with open(os.path.join(cfg.out, "report.md"), "w") as fh:
        fh.write("\n".join(report) + "\n")
    print(f"h={mesh.h:.4f} dof={row['dof']} eps={eps:.3e} H1 error={err.h1_velocity:.4e} "
          f"speed={slip['speed']:.4f} converged={bool(row['converged'])}")
    write_run_json(cfg, "solve", {"result": row})
    return EXIT_OK if sol.report.converged else EXIT_NONCONV


def cmd_convergence(args, cfg):
    mesh0, domain = _initial_mesh(cfg, default_rings=4)
    case, element = _case(cfg), _element(cfg)
    schemes = ["full", "reduced", "dirichlet"] if cfg.compare == "all" else [cfg.scheme]
    studies = {}
    for s in schemes:
        log.info("convergence study: %s", s)
        studies[s] = analysis.convergence_study(mesh0, domain, case, cfg.levels, element, s,
                                                cfg.eps_rule, cfg.eps, _solver_cfg(cfg),
                                                cfg.reduced_data)
        analysis.write_convergence_csv(os.path.join(cfg.out, f"convergence_{s}.csv"), studies[s])
    md = ["# Convergence study", ""]
    for key in ("h1u", "l2u", "l2p"):
        md.append(convergence_markdown(studies, cfg, key))
    with open(os.path.join(cfg.out, "convergence.md"), "w") as fh:
        fh.write("\n".join(md))
    for key, name in (("h1u", "H1 velocity error"), ("l2u", "L2 velocity error"),
                      ("l2p", "L2 pressure error")):
        series = [(_LABELS[s], [r.h for r in recs], [r.row()[key] for r in recs])
                  for s, recs in studies.items()]
        with open(os.path.join(cfg.out, f"convergence_{key}.svg"), "w") as fh:
            fh.write(loglog_svg(series, "h", name, name, ref_slope=1.0))
    print(md[2])
    ok = all(r.solve.converged for recs in studies.values() for r in recs)
    write_run_json(cfg, "convergence", {"converged": ok})
    return EXIT_OK if ok else EXIT_NONCONV


def cmd_epsilon_sweep(args, cfg):
    mesh, _ = _initial_mesh(cfg, default_rings=6)
    w = cfg.sweep
    rows = analysis.epsilon_sweep(mesh, _case(cfg), _element(cfg), cfg.scheme, w.eps_list,
                                  tuple(w.restarts), w.rel_tol, w.abs_tol, cfg.solver.precond,
                                  w.max_cycles, cfg.solver.dense_cap)
    analysis.write_sweep_csv(os.path.join(cfg.out, "sweep.csv"), rows, tuple(w.restarts))
    with open(os.path.join(cfg.out, "sweep.md"), "w") as fh:
        fh.write("# Penalty sweep\n\n" + sweep_markdown(rows, w.restarts))
    series = [("cond2", [r["eps"] for r in rows], [r["cond2"] for r in rows])]
    with open(os.path.join(cfg.out, "sweep_cond2.svg"), "w") as fh:
        fh.write(loglog_svg(series, "eps", "cond2", "condition number vs eps", ref_slope=-2.0))
    slope = analysis.sweep_slope(rows) if len(rows) >= 2 else math.nan
    print(sweep_markdown(rows, w.restarts))
    print(f"cond2 slope over the smallest three eps: {slope:.3f}")
    n_dof = assembly.dofmap(mesh, _element(cfg)).n_dof
    write_run_json(cfg, "epsilon-sweep", {"cond2_slope": slope, "n_dof": n_dof})
    return EXIT_OK


GEOMETRY_COLUMNS = ["level", "h", "max_d", "rate_max_d", "normal_max", "rate_normal_max",
                    "normal_mid", "rate_normal_mid", "surf_1", "rate_surf_1",
                    "surf_x2", "rate_surf_x2", "injective"]


def geometry_study(mesh, domain, levels):
    """Boundary-approximation diagnostics over ``levels`` meshes (levels-1 refinements)."""
    rows = []
    for level in range(levels):
        if level:
            mesh = meshmod.refine(mesh, domain)
        nd = geometry.normal_defect(mesh, domain)
        row = {"level": level, "h": mesh.h,
               "max_d": geometry.boundary_distance(mesh, domain),
               "normal_max": nd["max_over_edges"], "normal_mid": nd["max_at_midpoints"],
               "surf_1": geometry.surface_integral_defect(
                   mesh, domain, lambda x: np.ones(len(x)), n_param=512),
               "surf_x2": geometry.surface_integral_defect(
                   mesh, domain, lambda x: x[:, 0] ** 2, n_param=512),
               "injective": int(geometry.projection_injectivity_check(mesh, domain))}
        for k in ("max_d", "normal_max", "normal_mid", "surf_1", "surf_x2"):
            row[f"rate_{k}"] = (analysis.rate(rows[-1][k], row[k], rows[-1]["h"], row["h"])
                                if rows else math.nan)
        rows.append(row)
    return rows


def cmd_geometry_check(args, cfg):
    g = cfg.geometry
    rings = cfg.mesh.rings or 4
    if g.domain == "ellipse":
        domain = geometry.ellipse(g.a, g.b)
        mesh = meshmod.build_ellipse_mesh(rings, g.a, g.b)
    else:
        domain = geometry.UnitDisk()
        mesh = meshmod.build_disk_mesh(rings)
    rows = geometry_study(mesh, domain, cfg.levels)
    _write_rows(os.path.join(cfg.out, "geometry.csv"), GEOMETRY_COLUMNS, rows)
    for r in rows:
        print("  ".join(f"{k}={_fmt(r[k]) if not isinstance(r[k], float) else format(r[k], '.3e')}"
                        for k in GEOMETRY_COLUMNS))
    write_run_json(cfg, "geometry-check", {"injective": all(r["injective"] for r in rows)})
    return EXIT_OK


# --- argument parsing -----------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="slipstokes",
                                description="Penalty FEM for the Stokes slip problem on curved domains.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, solver=True):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", dest="o_out", help="output directory")
        sp.add_argument("--rings", dest="o_mesh.rings", type=int)
        sp.add_argument("--refine", dest="o_mesh.refine", type=int)
        if solver:
            sp.add_argument("--node", dest="o_mesh.node")
            sp.add_argument("--ele", dest="o_mesh.ele")
            sp.add_argument("--element", dest="o_element", choices=_CHOICES["element"])
            sp.add_argument("--eta", dest="o_eta", type=float)
            sp.add_argument("--scheme", dest="o_scheme", choices=_CHOICES["scheme"])
            sp.add_argument("--eps-rule", dest="o_eps_rule", choices=_CHOICES["eps_rule"])
            sp.add_argument("--eps", dest="o_eps", type=float,
                            help="fixed penalty parameter (implies --eps-rule fixed)")
            sp.add_argument("--reduced-data", dest="o_reduced_data",
                            choices=_CHOICES["reduced_data"])
            sp.add_argument("--case", dest="o_case", choices=_CHOICES["case"])
            sp.add_argument("--method", dest="o_solver.method", choices=_CHOICES["solver.method"])
            sp.add_argument("--restart", dest="o_solver.restart", type=int)
            sp.add_argument("--rel-tol", dest="o_solver.rel_tol", type=float)
            sp.add_argument("--precond", dest="o_solver.precond", choices=_CHOICES["solver.precond"])
            sp.add_argument("--dense-cap", dest="o_solver.dense_cap", type=int)

    s = sub.add_parser("mesh", help="build (and refine) a disk mesh, write Triangle files")
    s.add_argument("--config")
    s.add_argument("--rings", dest="o_mesh.rings", type=int, required=True)
    s.add_argument("--refine", dest="o_mesh.refine", type=int)
    s.add_argument("--out", dest="out_prefix", required=True, help="output prefix")
    s.set_defaults(func=cmd_mesh)

    s = sub.add_parser("solve", help="single-level penalty solve")
    common(s)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("convergence", help="refinement study with observed rates")
    common(s)
    s.add_argument("--levels", dest="o_levels", type=int)
    s.add_argument("--compare", dest="o_compare", choices=_CHOICES["compare"])
    s.set_defaults(func=cmd_convergence)

    s = sub.add_parser("epsilon-sweep", help="condition number and Krylov behaviour vs eps")
    common(s)
    s.add_argument("--eps-list", dest="o_sweep.eps_list", type=float, nargs="+")
    s.add_argument("--restarts", dest="o_sweep.restarts", type=int, nargs="+")
    s.add_argument("--max-cycles", dest="o_sweep.max_cycles", type=int)
    s.set_defaults(func=cmd_epsilon_sweep)

    s = sub.add_parser("geometry-check", help="boundary approximation rates")
    common(s, solver=False)
    s.add_argument("--levels", dest="o_levels", type=int)
    s.add_argument("--domain", dest="o_geometry.domain", choices=_CHOICES["geometry.domain"])
    s.add_argument("--a", dest="o_geometry.a", type=float)
    s.add_argument("--b", dest="o_geometry.b", type=float)
    s.set_defaults(func=cmd_geometry_check)
    return p


def _overrides(args):
    out = {}
    for key, value in vars(args).items():
        if key.startswith("o_") and value is not None:
            out[key[2:]] = value
    if "eps" in out and "eps_rule" not in out:
        out["eps_rule"] = "fixed"
    return out


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        overrides = _overrides(args)
        if args.command == "mesh":
            overrides["out"] = os.path.dirname(os.path.abspath(args.out_prefix))
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"slipstokes: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"slipstokes: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        _prepare_out(cfg)
        return args.func(args, cfg)
    except (meshmod.ParseError, OSError) as exc:
        print(f"slipstokes: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (meshmod.MeshError, geometry.GeometryError, ValueError) as exc:
        print(f"slipstokes: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
