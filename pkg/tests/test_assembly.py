from dataclasses import replace
from fractions import Fraction as Fr

import numpy as np
import pytest
import scipy.linalg as sla
import sympy as sy
from hypothesis import given, strategies as st

from slipstokes import assembly as A
from slipstokes.assembly import ElementChoice
from slipstokes.cases import disk_case
from slipstokes.geometry import UnitDisk
from slipstokes.mesh import Mesh, build_disk_mesh, refine

from conftest import disk_mesh

REF = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))
P1, P1B = ElementChoice("P1", 0.01), ElementChoice("P1b")

# a_h on the reference triangle, nu = 1, dofs (u_x, u_y) per vertex; hand-integrated
A_REF = np.array([[float(Fr(s)) for s in row.split()] for row in """
    19/12 1/2 -23/24 -1/2 -11/24 0
    1/2 19/12 0 -11/24 -1/2 -23/24
    -23/24 0 13/12 0 1/24 0
    -1/2 -11/24 0 7/12 1/2 1/24
    -11/24 -1/2 1/24 1/2 7/12 0
    0 -23/24 0 1/24 0 13/12""".strip().splitlines()])


def test_element_choice_invariants():
    assert ElementChoice("P1b", 0.5).eta == 0.0
    with pytest.raises(ValueError):
        ElementChoice("P1", 0.0)
    with pytest.raises(ValueError):
        ElementChoice("P2")


def test_reference_triangle_a():
    Aref = A.assemble_a(REF, P1, nu=1.0).toarray()
    assert np.abs(Aref - A_REF).max() <= 1e-14


def test_reference_triangle_mass_only_when_nu_zero():
    M = A.assemble_a(REF, P1, nu=0.0).toarray()
    area = 0.5
    want = np.kron((np.ones((3, 3)) + np.eye(3)) * area / 12, np.eye(2))
    assert np.abs(M - want).max() <= 1e-14
    assert np.allclose(np.diag(M), area / 6, atol=1e-15)


def test_reference_triangle_b_and_pressure_forms():
    B = A.assemble_b(REF, P1).toarray()
    # B[k, (j, c)] = -d_c lambda_j |T| / 3, gradients (-1,-1), (1,0), (0,1)
    row = np.array([1, 1, -1, 0, 0, -1]) / 6
    assert np.abs(B - np.tile(row, (3, 1))).max() <= 1e-14
    K = A.pressure_stiffness(REF).toarray()
    assert np.abs(K - 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]])).max() <= 1e-14
    Mp = A.pressure_mass(REF).toarray()
    assert np.abs(Mp - (np.ones((3, 3)) + np.eye(3)) / 24).max() <= 1e-14
    D = A.assemble_d(REF, P1).toarray()
    assert np.abs(D - 0.01 * 2.0 * K).max() <= 1e-14          # h^2 = 2


def test_reference_triangle_bubble_entries_symbolic():
    X, Y = sy.symbols("x y")
    lam = [1 - X - Y, X, Y]
    b = 27 * lam[0] * lam[1] * lam[2]

    def integ(e):
        return float(sy.integrate(sy.integrate(e, (Y, 0, 1 - X)), (X, 0, 1)))

    bx, by = sy.diff(b, X), sy.diff(b, Y)
    Aref = A.assemble_a(REF, P1B, nu=1.0).toarray()
    ib = 6                                     # bubble dofs follow the 3 x 2 vertex dofs
    # A[(i,a),(j,c)] = delta_ac (grad phi_i . grad phi_j + phi_i phi_j) + d_a phi_j d_c phi_i
    want_xx = integ(b * b + bx * bx + by * by + bx * bx)
    want_xy = integ(bx * by)
    assert Aref[ib, ib] == pytest.approx(want_xx, abs=1e-14)
    assert Aref[ib, ib + 1] == pytest.approx(want_xy, abs=1e-14)
    # bubble / vertex coupling (mass only survives: grad b is orthogonal to constants)
    for i, li in enumerate(lam):
        assert Aref[ib, 2 * i] == pytest.approx(integ(b * li), abs=1e-14)
    assert integ(b) == pytest.approx(9 / 40, rel=1e-14)        # 27 |T| / 60
    Bb = A.assemble_b(REF, P1B).toarray()
    for k, lk in enumerate(lam):
        assert Bb[k, ib] == pytest.approx(-integ(bx * lk), abs=1e-14)
        assert Bb[k, ib + 1] == pytest.approx(-integ(by * lk), abs=1e-14)


def test_constant_field_energy_is_area():
    m = disk_mesh(4)
    Am = A.assemble_a(m, P1, nu=1.0)
    v = np.zeros(Am.shape[0])
    v[0 : 2 * m.n_vertices : 2] = 1.0
    assert v @ (Am @ v) == pytest.approx(m.areas().sum(), rel=1e-13)


@pytest.mark.parametrize("element", [P1, P1B], ids=["P1", "P1b"])
def test_rotation_is_discretely_divergence_free(element):
    m = disk_mesh(4)
    dm = A.dofmap(m, element)
    v = np.zeros(dm.n_velocity)
    v[: 2 * m.n_vertices] = np.column_stack([-m.vertices[:, 1], m.vertices[:, 0]]).ravel()
    assert np.abs(A.assemble_b(m, element) @ v).max() <= 1e-12


def test_b_row_sum_is_boundary_flux():
    m = disk_mesh(3)
    rng = np.random.default_rng(0)
    uv = rng.standard_normal((m.n_vertices, 2))
    lhs = np.ones(m.n_vertices) @ (A.assemble_b(m, P1) @ uv.ravel())
    length, n = A.boundary_normals(m)
    ua, ub = uv[m.boundary_edges[:, 0]], uv[m.boundary_edges[:, 1]]
    flux = np.sum(length * np.sum(0.5 * (ua + ub) * n, axis=1))
    assert lhs == pytest.approx(-flux, abs=1e-12)


def test_b_of_position_field():
    m = disk_mesh(3)
    Bv = A.assemble_b(m, P1) @ m.vertices.ravel()
    rows = A.pressure_mass(m) @ np.ones(m.n_vertices)
    assert np.abs(Bv + 2 * rows).max() <= 1e-13


def test_d_properties():
    m = disk_mesh(3)
    D = A.assemble_d(m, P1)
    assert np.abs(D @ np.ones(m.n_vertices)).max() <= 1e-14
    assert A.assemble_d(m, P1B).nnz == 0
    D2 = A.assemble_d(m, ElementChoice("P1", 0.02))
    assert abs(D2 - 2 * D).max() <= 1e-15


def _penalty_oracle(mesh, scheme, edges=None):
    """|S| n n^T times the exact edge mass (full) or the midpoint rule (reduced)."""
    n_dof = 2 * mesh.n_vertices
    C = np.zeros((n_dof, n_dof))
    w = np.array([[1 / 3, 1 / 6], [1 / 6, 1 / 3]]) if scheme == "full" else np.full((2, 2), 0.25)
    for a, b in (mesh.boundary_edges if edges is None else edges):
        t = mesh.vertices[b] - mesh.vertices[a]
        L = np.hypot(*t)
        n = np.array([t[1], -t[0]]) / L
        for i, p in enumerate((a, b)):
            for j, q in enumerate((a, b)):
                C[2 * p : 2 * p + 2, 2 * q : 2 * q + 2] += L * w[i, j] * np.outer(n, n)
    return C


def test_penalty_unit_edge():
    tri = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]]), np.array([[0, 1, 2]]))
    k = [tuple(e) for e in tri.boundary_edges].index((0, 1))
    _, n = A.boundary_normals(tri)
    np.testing.assert_allclose(n[k], [0, -1], atol=1e-15)
    others = tri.boundary_edges[np.arange(3) != k]
    for scheme, (diag, off) in [("full", (1 / 3, 1 / 6)), ("reduced", (1 / 4, 1 / 4))]:
        C = A.assemble_penalty(tri, scheme).toarray()
        edge = C - _penalty_oracle(tri, scheme, others)
        want = np.zeros((6, 6))
        want[1, 1] = want[3, 3] = diag
        want[1, 3] = want[3, 1] = off
        assert np.abs(edge - want).max() <= 1e-15


@pytest.mark.parametrize("scheme", ["full", "reduced"])
def test_penalty_matches_closed_form_on_disk(scheme):
    m = disk_mesh(3)
    C = A.assemble_penalty(m, scheme).toarray()
    assert np.abs(C - _penalty_oracle(m, scheme)).max() <= 1e-14
    assert np.abs(C - C.T).max() == 0.0
    assert np.linalg.eigvalsh(C).min() > -1e-14
    interior = np.repeat(~m.is_boundary_vertex, 2)
    assert not C[interior].any()


@pytest.mark.parametrize("scheme", ["full", "reduced"])
def test_penalty_kernel(scheme):
    m = disk_mesh(4)
    rng = np.random.default_rng(1)
    v = rng.standard_normal((m.n_vertices, 2))
    v[m.is_boundary_vertex] = 0.0          # tangential at both endpoints and midpoints
    C = A.assemble_penalty(m, scheme)
    assert abs(v.ravel() @ (C @ v.ravel())) <= 1e-14


def test_rotation_in_reduced_kernel_only():
    m = disk_mesh(4)
    v = np.column_stack([-m.vertices[:, 1], m.vertices[:, 0]]).ravel()
    red = A.assemble_penalty(m, "reduced")
    full = A.assemble_penalty(m, "full")
    assert np.abs(red @ v).max() <= 1e-14
    assert v @ (full @ v) > 1e-3


@pytest.mark.parametrize("element", [P1, P1B], ids=["P1", "P1b"])
@pytest.mark.parametrize("scheme", ["full", "reduced"])
@pytest.mark.parametrize("eps", [1.0, 1e-4, 1e-8])
def test_velocity_block_cholesky(element, scheme, eps):
    m = disk_mesh(3)
    S = A.build_saddle_system(m, disk_case(), element, eps, scheme)
    sla.cholesky(S.velocity_block().toarray())


@pytest.mark.parametrize("element, n", [(P1, 57), (P1B, 105)], ids=["P1", "P1b"])
def test_dof_counts_and_symmetry(element, n):
    m = disk_mesh(2)
    S = A.build_saddle_system(m, disk_case(), element, 1e-3, "reduced")
    assert S.n_dof == n
    K = S.matrix()
    assert abs(K - K.T).max() <= 1e-13


def test_dofmap_is_a_bijection():
    m = disk_mesh(3)
    dm = A.dofmap(m, P1B)
    used = np.unique(dm.element_velocity_dofs(m.triangles))
    np.testing.assert_array_equal(used, np.arange(dm.n_velocity))
    p = dm.pressure_dofs(np.arange(m.n_vertices))
    np.testing.assert_array_equal(p, np.arange(dm.n_velocity, dm.n_dof))


def test_rhs_partition_of_unity():
    m = disk_mesh(4)
    case = disk_case().with_zero_data()
    case = replace(case, f=lambda x: np.column_stack([np.ones(len(x)), np.zeros(len(x))]))
    for element in (P1, P1B):
        F, G = A.assemble_rhs(m, case, element, 1e-3, "reduced")
        assert F[0 : 2 * m.n_vertices : 2].sum() == pytest.approx(m.areas().sum(), abs=1e-10)
        assert not G.any()


def test_zero_data_gives_zero_rhs():
    m = disk_mesh(3)
    S = A.build_saddle_system(m, disk_case().with_zero_data(), P1, 1e-3, "full")
    assert not S.rhs().any()


def test_g_zero_penalty_data_term_vanishes():
    m = disk_mesh(3)
    Fa, _ = A.assemble_rhs(m, disk_case(), P1, 1.0, "full")
    Fb, _ = A.assemble_rhs(m, disk_case(), P1, 1e-8, "full")
    np.testing.assert_array_equal(Fa, Fb)


@pytest.mark.parametrize("scheme", ["full", "reduced"])
def test_constant_g_data_term_is_divergence(scheme):
    m = disk_mesh(3)
    case = replace(disk_case().with_zero_data(), g=lambda x: np.ones(len(x)))
    eps = 1e-2
    F, _ = A.assemble_rhs(m, case, P1, eps, scheme)
    # (1/eps) int_{Gamma_h} v . n_h for v = x equals 2 |Omega_h| / eps
    assert F @ m.vertices.ravel() == pytest.approx(2 * m.areas().sum() / eps, rel=1e-12)


def test_reduced_data_variants_differ_for_curved_g():
    m = disk_mesh(3)
    case = replace(disk_case().with_zero_data(), g=lambda x: x[:, 0] ** 2)
    Fp, _ = A.assemble_rhs(m, case, P1, 1.0, "reduced", "pointwise")
    Fi, _ = A.assemble_rhs(m, case, P1, 1.0, "reduced", "interpolated")
    assert np.abs(Fp - Fi).max() > 1e-4
    with pytest.raises(ValueError):
        A.assemble_rhs(m, case, P1, 1.0, "reduced", "bogus")


def test_galerkin_consistency_residual_decays():
    case = disk_case()
    m = build_disk_mesh(4)
    h, res = [], []
    for level in range(3):
        if level:
            m = refine(m, UnitDisk())
        S = A.build_saddle_system(m, case, P1, 0.1 * m.h**2, "reduced")
        x = np.concatenate([case.u(m.vertices).ravel(), case.p(m.vertices)])
        r = S.rhs() - S.matrix() @ x
        h.append(m.h)
        res.append(np.abs(r[: 2 * m.n_vertices]).max())
    rates = np.log(np.array(res[:-1]) / res[1:]) / np.log(np.array(h[:-1]) / h[1:])
    assert np.all(rates >= 0.5)


def test_dirichlet_system_structure():
    m = disk_mesh(3)
    S = A.build_dirichlet_system(m, disk_case(), P1)
    K = S.matrix()
    assert abs(K - K.T).max() <= 1e-13
    Kd = K.toarray()
    for k, val in zip(S.fixed, S.values):
        row = Kd[k].copy()
        assert row[k] == 1.0
        row[k] = 0.0
        assert not row.any()
        assert S.rhs()[k] == val
    # interior residual of constrained rows is zero for the exact nodal trace
    x = np.linalg.solve(Kd, S.rhs())
    np.testing.assert_allclose(x[S.fixed], S.values, atol=1e-13)


@given(st.floats(0.1, 3.0), st.floats(-np.pi, np.pi))
def test_a_invariant_under_rigid_motion(scale, angle):
    # a_h scales like the area for the mass part and is rotation covariant
    c, s = np.cos(angle), np.sin(angle)
    R = np.array([[c, -s], [s, c]])
    moved = Mesh(scale * REF.vertices @ R.T, REF.triangles)
    A0 = A.assemble_a(REF, P1, nu=0.0).toarray()
    A1 = A.assemble_a(moved, P1, nu=0.0).toarray()
    np.testing.assert_allclose(A1, scale**2 * A0, atol=1e-13)
    K0 = A.assemble_a(REF, P1, nu=1.0).toarray() - A0
    K1 = A.assemble_a(moved, P1, nu=1.0).toarray() - A1
    Q = np.kron(np.eye(3), R)
    np.testing.assert_allclose(K1, Q @ K0 @ Q.T, atol=1e-12)
