"""
Error measurement, multiplier recovery and the numerical studies.

Errors are taken on Omega_h against the closed-form fields evaluated
directly at quadrature points.  The pressure is compared modulo its
additive constant: k_h = mean over Omega_h of (p_h - p~), and the
reported pressure error is ||(p~ + k_h) - p_h||.
"""
import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import assembly, solver
from .assembly import ElementChoice, basis, boundary_normals, quad_points
from .mesh import refine
from .quadrature import gauss_line, triangle_rule


@dataclass
class ErrorReport:
    l2_velocity: float
    h1_velocity: float
    l2_pressure: float
    k_h: float
    boundary_penetration: float = 0.0
    boundary_speed: float = 0.0

    def __post_init__(self):
        vals = (self.l2_velocity, self.h1_velocity, self.l2_pressure)
        if min(vals) < 0:
            raise ValueError("error norms must be nonnegative")
        if self.h1_velocity < self.l2_velocity * (1 - 1e-12):
            raise ValueError("H1 error must dominate the L2 error")


@dataclass
class ConvergenceRecord:
    level: int
    h: float
    n_dof: int
    errors: ErrorReport
    solve: solver.SolveReport
    rates: dict = field(default_factory=dict)

    def row(self):
        e, r = self.errors, self.rates
        return {
            "level": self.level, "h": self.h, "dof": self.n_dof,
            "l2u": e.l2_velocity, "rate_l2u": r.get("l2u", math.nan),
            "h1u": e.h1_velocity, "rate_h1u": r.get("h1u", math.nan),
            "l2p": e.l2_pressure, "rate_l2p": r.get("l2p", math.nan),
            "iters": self.solve.iterations, "converged": int(self.solve.converged),
        }


CONVERGENCE_COLUMNS = ["level", "h", "dof", "l2u", "rate_l2u", "h1u", "rate_h1u",
                       "l2p", "rate_l2p", "iters", "converged"]
SWEEP_COLUMNS = ["eps", "cond2", "iters_gmres_r30", "iters_gmres_r200", "iters_bicgstab",
                 "conv_gmres", "conv_bicgstab", "lu_residual"]


def rate(e_prev, e_cur, h_prev, h_cur):
    """Observed order log(e_prev/e_cur) / log(h_prev/h_cur); NaN if h is unchanged."""
    if h_prev == h_cur or min(e_prev, e_cur, h_prev, h_cur) <= 0:
        return math.nan
    return math.log(e_prev / e_cur) / math.log(h_prev / h_cur)


def format_rate(r):
    if r is None or (isinstance(r, float) and math.isnan(r)):
        return "---"
    return "(<0)" if r < 0 else f"{r:.2f}"


# --- discrete field evaluation ----------------------------------------------

def _element_velocity(mesh, element, uvec):
    dm = assembly.dofmap(mesh, element)
    return uvec[dm.element_velocity_dofs(mesh.triangles)].reshape(mesh.n_triangles, -1, 2)


def error_norms(mesh, u_h, p_h, case, element=None, degree=5):
    """L2/H1 velocity and shifted L2 pressure errors on Omega_h."""
    element = element or ElementChoice()
    bary, w = triangle_rule(degree)
    area, vals, grads = basis(mesh, bary, element.bubble)
    coef = _element_velocity(mesh, element, u_h)                 # (nt, nb, 2)
    uq = np.einsum("qi,tia->tqa", vals, coef)
    guq = np.einsum("tqid,tia->tqad", grads, coef)              # [a, d] = d u_a / d x_d
    pq = np.einsum("qi,ti->tq", bary, p_h[mesh.triangles])

    xq = quad_points(mesh, bary).reshape(-1, 2)
    shape = uq.shape[:2]
    eu = case.u(xq).reshape(shape + (2,)) - uq
    eg = case.grad_u(xq).reshape(shape + (2, 2)) - guq
    pex = case.p(xq).reshape(shape)

    wq = area[:, None] * w[None, :]
    total = wq.sum()
    k_h = float(np.sum(wq * (pq - pex)) / total)
    ep = pex + k_h - pq
    l2u = np.sum(wq * np.sum(eu**2, axis=-1))
    semi = np.sum(wq * np.sum(eg**2, axis=(-1, -2)))
    l2p = np.sum(wq * ep**2)
    return ErrorReport(float(np.sqrt(l2u)), float(np.sqrt(l2u + semi)), float(np.sqrt(l2p)), k_h)


def exact_norms(mesh, case, degree=5):
    """Norms of the manufactured fields over Omega_h (self-check of the quadrature)."""
    bary, w = triangle_rule(degree)
    area = mesh.areas()
    xq = quad_points(mesh, bary).reshape(-1, 2)
    wq = (area[:, None] * w[None, :]).ravel()
    u2 = np.sum(case.u(xq) ** 2, axis=1)
    g2 = np.sum(case.grad_u(xq) ** 2, axis=(1, 2))
    p = case.p(xq)
    pbar = np.sum(wq * p) / wq.sum()
    return {"l2_u": float(np.sqrt(wq @ u2)), "h1_u": float(np.sqrt(wq @ (u2 + g2))),
            "l2_p": float(np.sqrt(wq @ (p - pbar) ** 2))}


def _edge_values(mesh, u_h, s):
    """Trace of the vertex velocity at local coordinates s on every boundary edge."""
    uv = u_h[: 2 * mesh.n_vertices].reshape(-1, 2)
    ua = uv[mesh.boundary_edges[:, 0]]
    ub = uv[mesh.boundary_edges[:, 1]]
    return ua[:, None, :] * (1 - s)[None, :, None] + ub[:, None, :] * s[None, :, None]


def boundary_slip_report(mesh, u_h):
    """Penetration max |u_h . n_h| at 2-point Gauss nodes; mean |u_h| at edge midpoints."""
    s, _ = gauss_line(2)
    _, n = boundary_normals(mesh)
    un = np.einsum("kqa,ka->kq", _edge_values(mesh, u_h, s), n)
    speed = np.linalg.norm(_edge_values(mesh, u_h, np.array([0.5]))[:, 0], axis=1)
    return {"penetration": float(np.abs(un).max()), "speed": float(speed.mean())}


# --- multiplier ---------------------------------------------------------------

@dataclass
class LambdaRecovery:
    """Discrete multiplier lambda_h = (u_h . n_h - g) / eps on Gamma_h.

    full: values (nb, 2) at both endpoints of each edge (discontinuous P1);
    reduced: values (nb, 1) at edge midpoints only.
    """

    scheme: str
    values: np.ndarray
    points: np.ndarray
    epsilon: float

    def edge_mean(self):
        return self.values.mean(axis=1)


def recover_lambda(mesh, u_h, case, epsilon, scheme, reduced_data="pointwise"):
    _, n = boundary_normals(mesh)
    a = mesh.vertices[mesh.boundary_edges[:, 0]]
    b = mesh.vertices[mesh.boundary_edges[:, 1]]
    if scheme == "full":
        s = np.array([0.0, 1.0])
        g = np.column_stack([case.g(a), case.g(b)])
    elif scheme == "reduced":
        s = np.array([0.5])
        if reduced_data == "pointwise":
            g = case.g(0.5 * (a + b))[:, None]
        else:
            g = 0.5 * (case.g(a) + case.g(b))[:, None]
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    un = np.einsum("kqa,ka->kq", _edge_values(mesh, u_h, s), n)
    pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    return LambdaRecovery(scheme, (un - g) / epsilon, pts, float(epsilon))


def lambda_residual(mesh, u_h, case, lam, reduced_data="pointwise"):
    """Relative residual of c(u_h . n_h - g, mu) = eps c(lambda_h, mu) over a basis of mu.

    For the full scheme mu runs over the discontinuous P1 basis on Gamma_h
    (exact 2-point Gauss); for the reduced scheme c is the midpoint form.
    """
    length, n = boundary_normals(mesh)
    a = mesh.vertices[mesh.boundary_edges[:, 0]]
    b = mesh.vertices[mesh.boundary_edges[:, 1]]
    if lam.scheme == "full":
        s, w = gauss_line(2)
        phi = np.column_stack([1 - s, s])
        gq = case.g(a)[:, None] * phi[:, 0] + case.g(b)[:, None] * phi[:, 1]
        lq = lam.values @ phi.T
    else:
        s, w = np.array([0.5]), np.array([1.0])
        phi = np.ones((1, 1))
        mid = 0.5 * (a + b)
        gq = (case.g(mid) if reduced_data == "pointwise" else 0.5 * (case.g(a) + case.g(b)))[:, None]
        lq = lam.values
    un = np.einsum("kqa,ka->kq", _edge_values(mesh, u_h, s), n)
    lhs = np.einsum("k,q,kq,qi->ki", length, w, un - gq, phi)
    rhs = lam.epsilon * np.einsum("k,q,kq,qi->ki", length, w, lq, phi)
    scale = max(np.abs(lhs).max(), np.abs(rhs).max(), 1e-300)
    return float(np.abs(lhs - rhs).max() / scale)


def lambda_defect(mesh, lam, case, k_h=0.0):
    """max over edges |mean lambda_h - (lambda(m_S) + k_h)| with lambda = -sigma n . n."""
    a = mesh.vertices[mesh.boundary_edges[:, 0]]
    b = mesh.vertices[mesh.boundary_edges[:, 1]]
    mid = 0.5 * (a + b)
    _, n = boundary_normals(mesh)
    exact = case.normal_traction(mid, n)
    return float(np.abs(lam.edge_mean() - exact - k_h).max())


# --- end-to-end solves --------------------------------------------------------

@dataclass
class SolverConfig:
    method: str = "sparse_lu"
    restart: int = 30
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_iter: int = None
    precond: str = "ilu0"
    dense_cap: int = solver.DENSE_CAP


def epsilon_for(rule, h, fixed=None):
    if rule == "0.1h":
        return 0.1 * h
    if rule == "0.1h2":
        return 0.1 * h**2
    if rule == "fixed":
        if fixed is None:
            raise ValueError("eps_rule 'fixed' needs a value")
        return float(fixed)
    raise ValueError(f"unknown eps rule {rule!r}")


@dataclass
class Solution:
    u: np.ndarray
    p: np.ndarray
    report: solver.SolveReport
    system: object
    epsilon: float = math.nan


def solve_penalty(mesh, case, element, epsilon, scheme, cfg=None, reduced_data="pointwise"):
    cfg = cfg or SolverConfig()
    system = assembly.build_saddle_system(mesh, case, element, epsilon, scheme, reduced_data)
    x, rep = solver.solve(system.matrix(), system.rhs(), **asdict(cfg))
    u, p = system.dofmap.split(x)
    return Solution(u, p, rep, system, float(epsilon))


def solve_dirichlet(mesh, case, element, cfg=None):
    cfg = cfg or SolverConfig()
    system = assembly.build_dirichlet_system(mesh, case, element)
    x, rep = solver.solve(system.matrix(), system.rhs(), **asdict(cfg))
    u, p = system.dofmap.split(x)
    return Solution(u, p, rep, system)


def convergence_study(mesh0, domain, case, levels, element=None, scheme="reduced",
                      eps_rule="0.1h2", eps_fixed=None, cfg=None, reduced_data="pointwise"):
    """Solve on mesh0 and its successive refinements; scheme "dirichlet" gives the comparator."""
    if levels < 2:
        raise ValueError("a convergence study needs at least two levels")
    element = element or ElementChoice()
    records = []
    mesh = mesh0
    for level in range(levels):
        if level:
            mesh = refine(mesh, domain)
        if scheme == "dirichlet":
            sol = solve_dirichlet(mesh, case, element, cfg)
        else:
            eps = epsilon_for(eps_rule, mesh.h, eps_fixed)
            sol = solve_penalty(mesh, case, element, eps, scheme, cfg, reduced_data)
        err = error_norms(mesh, sol.u, sol.p, case, element)
        slip = boundary_slip_report(mesh, sol.u)
        err.boundary_penetration, err.boundary_speed = slip["penetration"], slip["speed"]
        rec = ConvergenceRecord(level, mesh.h, sol.system.n_dof, err, sol.report)
        if records:
            prev = records[-1]
            rec.rates = {
                "l2u": rate(prev.errors.l2_velocity, err.l2_velocity, prev.h, mesh.h),
                "h1u": rate(prev.errors.h1_velocity, err.h1_velocity, prev.h, mesh.h),
                "l2p": rate(prev.errors.l2_pressure, err.l2_pressure, prev.h, mesh.h),
            }
        records.append(rec)
    return records


def write_convergence_csv(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CONVERGENCE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for rec in records:
            w.writerow({k: _fmt(v) for k, v in rec.row().items()})


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(float(v))
    return v


# --- penalty sweep ------------------------------------------------------------

DEFAULT_EPS = tuple(10.0**k for k in range(2, -9, -1))


def loglog_slope(eps, values):
    """Least-squares slope of log(values) against log(1/eps)."""
    x = np.log(1.0 / np.asarray(eps, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def epsilon_sweep(mesh, case, element=None, scheme="reduced", eps_list=DEFAULT_EPS,
                  restarts=(30, 200), rel_tol=1e-6, abs_tol=1e-10, precond="ilu0",
                  max_cycles=50, dense_cap=solver.DENSE_CAP):
    """Condition number and iterative-solver behaviour against the penalty parameter.

    Returns a list of row dicts (SWEEP_COLUMNS plus per-restart
    ``conv_gmres_r<m>`` flags; ``conv_gmres`` joins them as "1/0").  GMRES is capped at
    ``max_cycles`` restart cycles and BiCGSTAB at ``max_cycles * 30``
    iterations; non-convergence is recorded, not raised.
    """
    element = element or ElementChoice()
    rows = []
    for eps in eps_list:
        system = assembly.build_saddle_system(mesh, case, element, eps, scheme)
        K, b = system.matrix(), system.rhs()
        try:
            cond = solver.condition_estimate(K, cap=dense_cap)
        except solver.SingularMatrix:
            cond = math.inf
        row = {"eps": float(eps), "cond2": cond}
        conv = []
        for m in restarts:
            _, rep = solver.gmres_solve(K, b, restart=m, rel_tol=rel_tol, abs_tol=abs_tol,
                                        max_iter=max_cycles * m, precond=precond)
            row[f"iters_gmres_r{m}"] = rep.iterations
            row[f"conv_gmres_r{m}"] = int(rep.converged)
            conv.append(str(int(rep.converged)))
        row["conv_gmres"] = "/".join(conv)     # one flag per restart, in order
        _, rep = solver.bicgstab_solve(K, b, rel_tol=rel_tol, abs_tol=abs_tol,
                                       max_iter=max_cycles * 30, precond=precond)
        row["iters_bicgstab"] = rep.iterations
        row["conv_bicgstab"] = int(rep.converged)
        x = solver.dense_lu_solve(K, b, cap=dense_cap)
        row["lu_residual"] = solver.relative_residual(K, x, b)
        rows.append(row)
    return rows


def sweep_slope(rows, window=None):
    """kappa_2 growth exponent over ``window`` (default: the smallest three eps)."""
    rows = sorted(rows, key=lambda r: r["eps"])
    if window is None:
        sel = rows[:3]
    else:
        want = [float(e) for e in window]
        sel = [r for r in rows if any(math.isclose(r["eps"], e, rel_tol=1e-9) for e in want)]
    return loglog_slope([r["eps"] for r in sel], [r["cond2"] for r in sel])


def sweep_columns(restarts=(30, 200)):
    return (["eps", "cond2"] + [f"iters_gmres_r{m}" for m in restarts]
            + ["iters_bicgstab", "conv_gmres", "conv_bicgstab", "lu_residual"])


def write_sweep_csv(path, rows, restarts=(30, 200)):
    cols = sweep_columns(restarts)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in cols})
