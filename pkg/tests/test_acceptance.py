"""Acceptance criteria at their stated tolerances.

Each ``criterion_k`` returns ``(passed, detail)``; the tests record the
outcome in ``conftest.ACCEPTANCE`` (printed as one PASS/FAIL line per
criterion at the end of the run) and then assert it.  Run this file
directly for the same table without pytest.
"""
import functools

import numpy as np
import scipy.linalg as sla

import conftest
from conftest import disk_mesh
from slipstokes import analysis as A
from slipstokes import assembly, geometry, solver
from slipstokes.assembly import ElementChoice
from slipstokes.cases import disk_case
from slipstokes.cli import geometry_study
from slipstokes.mesh import Mesh, build_disk_mesh, build_ellipse_mesh, refine

START_RINGS, LEVELS = 4, 4            # M = 4, 8, 16, 32
P1 = ElementChoice("P1", 0.01)


@functools.lru_cache(maxsize=None)
def study(scheme, eps_rule="0.1h2"):
    return A.convergence_study(build_disk_mesh(START_RINGS), geometry.UnitDisk(), disk_case(),
                               LEVELS, P1, scheme, eps_rule)


def _rates(records, key):
    return [r.rates[key] for r in records[1:]]


def _fmt(xs):
    return "/".join(f"{x:.2f}" for x in xs)


def _in(xs, lo, hi):
    return all(lo <= x <= hi for x in xs)


# --- criteria -------------------------------------------------------------------------

def criterion_1():
    red, dirichlet = study("reduced"), study("dirichlet")
    r, d = _rates(red, "h1u"), _rates(dirichlet, "h1u")
    l2 = _rates(red, "l2u")
    ok = (_in(r, 0.8, 1.4) and all(abs(a - b) <= 0.15 for a, b in zip(r, d))
          and l2[-1] >= 1.7)
    return ok, f"H1 rates reduced {_fmt(r)} vs Dirichlet {_fmt(d)}; last L2 rate {l2[-1]:.2f}"


def criterion_2():
    full, red = study("full"), study("reduced")
    r = _rates(full, "h1u")
    ef, er = full[-1].errors.h1_velocity, red[-1].errors.h1_velocity
    ok = all(x <= 0.3 for x in r) and ef >= 5 * er
    return ok, f"H1 rates {_fmt(r)}; final error {ef:.3g} vs reduced {er:.3g} ({ef / er:.1f}x)"


def criterion_3():
    r = _rates(study("full", "0.1h"), "h1u")
    return _in(r, 0.7, 1.4), f"H1 rates {_fmt(r)}"


def criterion_4():
    finest = refine(refine(refine(build_disk_mesh(START_RINGS), geometry.UnitDisk()),
                           geometry.UnitDisk()), geometry.UnitDisk())
    got = A.exact_norms(finest, disk_case())
    ref = {"l2_u": 0.886, "h1_u": 3.355, "l2_p": 2.894}
    dev = {k: abs(got[k] / ref[k] - 1) for k in ref}
    ok = all(v <= 0.01 for v in dev.values())
    return ok, ", ".join(f"{k}={got[k]:.4f}" for k in ref) + f" (max dev {max(dev.values()):.2%})"


GEOMETRY_BANDS = {"max_d": (1.8, 2.2), "normal_max": (0.8, 1.2), "normal_mid": (1.8, 2.2),
                  "surf_1": (1.8, 2.2), "surf_x2": (1.8, 2.2)}


@functools.lru_cache(maxsize=None)
def geometry_rows(domain_name):
    # 5 meshes, 4 refinements, 4 observed rates per quantity
    if domain_name == "ellipse":
        return geometry_study(build_ellipse_mesh(START_RINGS, 1.25, 1.0),
                              geometry.ellipse(1.25, 1.0), 5)
    return geometry_study(build_disk_mesh(START_RINGS), geometry.UnitDisk(), 5)


def criterion_5():
    # on the disk every boundary chord's midpoint normal is radial, so the midpoint
    # defect is round-off and has no rate; all five rates are measured on an ellipse
    ell, disk = geometry_rows("ellipse"), geometry_rows("disk")
    ok, parts = True, []
    for key, (lo, hi) in GEOMETRY_BANDS.items():
        r = [row[f"rate_{key}"] for row in ell[1:]]
        ok &= _in(r, lo, hi)
        parts.append(f"{key} {_fmt(r)}")
    for key, (lo, hi) in GEOMETRY_BANDS.items():
        if key == "normal_mid":
            ok &= max(row["normal_mid"] for row in disk) <= 1e-13
            continue
        ok &= _in([row[f"rate_{key}"] for row in disk[1:]], lo, hi)
    ok &= all(row["injective"] for row in ell + disk)
    return bool(ok), "ellipse(1.25,1): " + "; ".join(parts) + " (disk checked too)"


def criterion_6():
    mesh, case = disk_mesh(6), disk_case()
    speed = {}
    for scheme in ("reduced", "full"):
        sol = A.solve_penalty(mesh, case, P1, 1e-8, scheme)
        speed[scheme] = A.boundary_slip_report(mesh, sol.u)["speed"]
    ok = speed["reduced"] >= 0.7 and speed["full"] <= 0.3
    return ok, (f"h={mesh.h:.3f}: mean boundary speed reduced {speed['reduced']:.3f}, "
                f"non-reduced {speed['full']:.2e}")


@functools.lru_cache(maxsize=None)
def sweep_rows():
    return A.epsilon_sweep(disk_mesh(6), disk_case(), P1, "reduced", A.DEFAULT_EPS,
                           restarts=(30,), rel_tol=1e-6)


def criterion_7():
    rows = sweep_rows()
    slope = A.sweep_slope(rows, window=(1e-4, 1e-5, 1e-6))
    stalled = [r["eps"] for r in rows if r["eps"] <= 1e-6 and not r["conv_gmres_r30"]]
    lu = max(r["lu_residual"] for r in rows)
    ok = abs(slope - 2.0) <= 0.3 and bool(stalled) and lu <= 1e-8
    its = "/".join(str(r["iters_gmres_r30"]) for r in rows if r["eps"] <= 1e-6)
    return ok, (f"kappa2 slope {slope:.3f}; GMRES(30) non-converged at eps<=1e-6: "
                f"{stalled or 'none'} (iterations {its}); max LU residual {lu:.1e}")


A_REF = np.array([[19 / 12, 1 / 2, -23 / 24, -1 / 2, -11 / 24, 0],
                  [1 / 2, 19 / 12, 0, -11 / 24, -1 / 2, -23 / 24],
                  [-23 / 24, 0, 13 / 12, 0, 1 / 24, 0],
                  [-1 / 2, -11 / 24, 0, 7 / 12, 1 / 2, 1 / 24],
                  [-11 / 24, -1 / 2, 1 / 24, 1 / 2, 7 / 12, 0],
                  [0, -23 / 24, 0, 1 / 24, 0, 13 / 12]])


def _mesh_invariants_ok():
    disk, ell = geometry.UnitDisk(), geometry.ellipse(1.25, 1.0)
    meshes = [(build_disk_mesh(M), disk) for M in range(1, 11)]
    m, e = build_disk_mesh(START_RINGS), build_ellipse_mesh(START_RINGS, 1.25, 1.0)
    for _ in range(3):
        m, e = refine(m, disk), refine(e, ell)
        meshes += [(m, disk), (e, ell)]
    for mesh, dom in meshes:
        if mesh.n_vertices - len(mesh.edges) + mesh.n_triangles != 1:
            return False
        b = mesh.vertices[mesh.is_boundary_vertex]
        if np.abs(geometry.signed_distance(dom, b)).max() > 1e-12:
            return False
    return True


def criterion_8():
    checks = {}
    ref = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))
    Ar = assembly.assemble_a(ref, P1, 1.0).toarray()
    Br = assembly.assemble_b(ref, P1).toarray()
    Mp = assembly.pressure_mass(ref).toarray()
    checks["reference oracles"] = (np.abs(Ar - A_REF).max() <= 1e-14
                                   and np.abs(Br - np.array([1, 1, -1, 0, 0, -1]) / 6).max() <= 1e-14
                                   and np.abs(Mp - (np.ones((3, 3)) + np.eye(3)) / 24).max() <= 1e-14)

    mesh, case = disk_mesh(4), disk_case()
    chol = True
    for el in (P1, ElementChoice("P1b")):
        for scheme in ("full", "reduced"):
            for eps in (1.0, 1e-4, 1e-8):
                S = assembly.build_saddle_system(mesh, case, el, eps, scheme)
                try:
                    sla.cholesky(S.velocity_block().toarray())
                except np.linalg.LinAlgError:
                    chol = False
    checks["Cholesky"] = chol

    lam_res = []
    for scheme in ("full", "reduced"):
        eps = 0.1 * mesh.h**2
        sol = A.solve_penalty(mesh, case, P1, eps, scheme)
        lam = A.recover_lambda(mesh, sol.u, case, eps, scheme)
        lam_res.append(A.lambda_residual(mesh, sol.u, case, lam))
    checks["lambda residual"] = max(lam_res) <= 1e-10

    e0 = A.error_norms(mesh, sol.u, sol.p, case, P1)
    e1 = A.error_norms(mesh, sol.u, sol.p + 17.3, case, P1)
    checks["k_h shift"] = (abs(e1.l2_pressure - e0.l2_pressure) <= 1e-12 * e0.l2_pressure
                           and abs(e1.k_h - e0.k_h - 17.3) <= 1e-10)

    v = np.random.default_rng(1).standard_normal((mesh.n_vertices, 2))
    v[mesh.is_boundary_vertex] = 0.0
    rot = np.column_stack([-mesh.vertices[:, 1], mesh.vertices[:, 0]]).ravel()
    kern = [abs(v.ravel() @ (assembly.assemble_penalty(mesh, s) @ v.ravel())) for s in ("full", "reduced")]
    checks["penalty kernel"] = (max(kern) <= 1e-14
                                and np.abs(assembly.assemble_penalty(mesh, "reduced") @ rot).max() <= 1e-14)

    checks["mesh invariants"] = _mesh_invariants_ok()
    failed = [k for k, ok in checks.items() if not ok]
    return not failed, f"{len(checks) - len(failed)}/{len(checks)} property checks" + (
        f"; failed: {', '.join(failed)}" if failed else "")


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4,
            5: criterion_5, 6: criterion_6, 7: criterion_7, 8: criterion_8}


def _check(k):
    ok, detail = CRITERIA[k]()
    conftest.ACCEPTANCE[k] = (bool(ok), detail)
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_1_reduced_scheme_optimal_rates():
    _check(1)


def test_criterion_2_full_scheme_stagnates():
    _check(2)


def test_criterion_3_full_scheme_with_weak_penalty():
    _check(3)


def test_criterion_4_exact_field_norms():
    _check(4)


def test_criterion_5_geometry_rates():
    _check(5)


def test_criterion_6_collapse_diagnostic():
    _check(6)


def test_criterion_7_penalty_sweep():
    _check(7)


def test_criterion_8_property_bundle():
    _check(8)


def test_gmres_stalls_on_finer_mesh():
    # not a criterion: at M = 12 the same GMRES(30) + ILU(0) setup does stall
    mesh = disk_mesh(12)
    S = assembly.build_saddle_system(mesh, disk_case(), P1, 1e-6, "reduced")
    _, rep = solver.gmres_solve(S.matrix(), S.rhs(), restart=30, rel_tol=1e-6,
                                max_iter=50 * 30, precond="ilu0")
    assert not rep.converged
    assert rep.precond == "ilu0"


if __name__ == "__main__":
    for k, fn in CRITERIA.items():
        ok, detail = fn()
        print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
