"""
Finite element spaces and assembly of the penalty Stokes system.

Velocity is P1 (optionally enriched with one cubic bubble per triangle,
the MINI / P1b element), pressure is P1.  Unknowns are ordered

    [u_x, u_y of vertex 0, ..., vertex nv-1,  bubble dofs,  pressures]

so the velocity block precedes the pressure block.  The discrete problem
solved is

    [A + C/eps   B^T] [u]   [F + C g / eps]
    [B           -D ] [p] = [0            ]

with A the mass plus symmetric-gradient form, B the (negative) divergence,
C the boundary penalty on (u . n_h)(v . n_h) and D = eta h^2 (grad p, grad q).
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .quadrature import gauss_line, triangle_rule

SCHEMES = ("full", "reduced")


@dataclass(frozen=True)
class ElementChoice:
    """Element pair and pressure-stabilization weight.

    P1 needs eta > 0; P1b is inf-sup stable and always uses eta = 0.
    """

    l: str = "P1"
    eta: float = 0.01

    def __post_init__(self):
        if self.l not in ("P1", "P1b"):
            raise ValueError(f"unknown element {self.l!r}")
        if self.l == "P1b":
            object.__setattr__(self, "eta", 0.0)
        elif not self.eta > 0:
            raise ValueError("P1/P1 requires a positive stabilization weight eta")

    @property
    def bubble(self):
        return self.l == "P1b"


@dataclass(frozen=True)
class DofMap:
    n_vertices: int
    n_triangles: int
    bubble: bool

    @property
    def n_velocity(self):
        return 2 * self.n_vertices + (2 * self.n_triangles if self.bubble else 0)

    @property
    def n_pressure(self):
        return self.n_vertices

    @property
    def n_dof(self):
        return self.n_velocity + self.n_pressure

    def vertex_dofs(self, vertices):
        v = np.asarray(vertices)
        return np.stack([2 * v, 2 * v + 1], axis=-1)

    def element_velocity_dofs(self, triangles):
        """(nt, 6 or 8) global velocity dofs in local order v0x v0y v1x v1y v2x v2y [bx by]."""
        d = self.vertex_dofs(triangles).reshape(len(triangles), 6)
        if self.bubble:
            t = np.arange(len(triangles))
            b = 2 * self.n_vertices + np.column_stack([2 * t, 2 * t + 1])
            d = np.hstack([d, b])
        return d

    def pressure_dofs(self, vertices):
        return self.n_velocity + np.asarray(vertices)

    def split(self, x):
        """Solution vector -> (velocity part, pressure part)."""
        return x[: self.n_velocity], x[self.n_velocity:]

    def vertex_velocity(self, uvec):
        return uvec[: 2 * self.n_vertices].reshape(-1, 2)


def dofmap(mesh, element):
    return DofMap(mesh.n_vertices, mesh.n_triangles, element.bubble)


# --- reference basis --------------------------------------------------------

def _p1_gradients(mesh):
    """Areas (nt,) and barycentric gradients (nt, 3, 2)."""
    p = mesh.vertices[mesh.triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    g1 = np.column_stack([e2[:, 1], -e2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-e1[:, 1], e1[:, 0]]) / det[:, None]
    grads = np.stack([-g1 - g2, g1, g2], axis=1)
    return 0.5 * det, grads


def basis(mesh, bary, bubble):
    """Scalar basis values (nq, nb) and gradients (nt, nq, nb, 2) at barycentric points."""
    area, gl = _p1_gradients(mesh)
    nq = len(bary)
    vals = bary
    grads = np.broadcast_to(gl[:, None, :, :], (len(area), nq, 3, 2))
    if bubble:
        l0, l1, l2 = bary.T
        bval = 27 * l0 * l1 * l2
        coef = 27 * np.column_stack([l1 * l2, l0 * l2, l0 * l1])   # (nq, 3)
        bgrad = np.einsum("qi,tid->tqd", coef, gl)
        vals = np.column_stack([bary, bval])
        grads = np.concatenate([grads, bgrad[:, :, None, :]], axis=2)
    return area, vals, grads


def quad_points(mesh, bary):
    """Physical coordinates (nt, nq, 2) of barycentric points."""
    return np.einsum("qi,tid->tqd", bary, mesh.vertices[mesh.triangles])


def _scatter(rows, cols, local, shape):
    r = np.broadcast_to(rows[:, :, None], local.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], local.shape).ravel()
    m = sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()
    m.sum_duplicates()
    m.sort_indices()
    return m


def _vector_local(scalar):
    """(nt, nb, nb) scalar block -> (nt, 2nb, 2nb) block-diagonal in components."""
    nt, nb, _ = scalar.shape
    out = np.zeros((nt, nb, 2, nb, 2))
    out[:, :, 0, :, 0] = scalar
    out[:, :, 1, :, 1] = scalar
    return out.reshape(nt, 2 * nb, 2 * nb)


# --- bilinear forms ---------------------------------------------------------

def assemble_a(mesh, element, nu):
    """a_h(u, v) = (u, v) + (nu/2)(grad u + grad u^T, grad v + grad v^T)."""
    dm = dofmap(mesh, element)
    bary, w = triangle_rule(6 if element.bubble else 2)
    area, vals, grads = basis(mesh, bary, element.bubble)
    wq = area[:, None] * w[None, :]                         # (nt, nq)
    mass = np.einsum("tq,qi,qj->tij", wq, vals, vals)
    stiff = np.einsum("tq,tqid,tqjd->tij", wq, grads, grads)
    # cross[t, i, a, j, b] = int d_a phi_j d_b phi_i
    cross = np.einsum("tq,tqja,tqib->tiajb", wq, grads, grads)
    nb = vals.shape[1]
    local = _vector_local(mass + nu * stiff) + nu * cross.reshape(len(area), 2 * nb, 2 * nb)
    dofs = dm.element_velocity_dofs(mesh.triangles)
    return _scatter(dofs, dofs, local, (dm.n_velocity, dm.n_velocity))


def assemble_b(mesh, element):
    """B[k, j] = -int div(phi_j) psi_k over Omega_h (pressure rows, velocity columns)."""
    dm = dofmap(mesh, element)
    bary, w = triangle_rule(3)
    area, vals, grads = basis(mesh, bary, element.bubble)
    wq = area[:, None] * w[None, :]
    psi = bary                                              # P1 pressure basis
    local = -np.einsum("tq,qk,tqjb->tkjb", wq, psi, grads)
    local = local.reshape(len(area), 3, -1)
    rows = dm.pressure_dofs(mesh.triangles) - dm.n_velocity
    cols = dm.element_velocity_dofs(mesh.triangles)
    return _scatter(rows, cols, local, (dm.n_pressure, dm.n_velocity))


def pressure_stiffness(mesh):
    area, gl = _p1_gradients(mesh)
    local = area[:, None, None] * np.einsum("tid,tjd->tij", gl, gl)
    t = mesh.triangles
    return _scatter(t, t, local, (mesh.n_vertices, mesh.n_vertices))


def pressure_mass(mesh):
    area, _ = _p1_gradients(mesh)
    ref = (np.ones((3, 3)) + np.eye(3)) / 12
    local = area[:, None, None] * ref[None]
    t = mesh.triangles
    return _scatter(t, t, local, (mesh.n_vertices, mesh.n_vertices))


def assemble_d(mesh, element):
    """d_h(p, q) = eta h^2 (grad p, grad q) with the global mesh size h."""
    if element.eta == 0.0:
        n = mesh.n_vertices
        return sp.csr_matrix((n, n))
    return (element.eta * mesh.h**2) * pressure_stiffness(mesh)


def boundary_normals(mesh):
    """Edge lengths (nb,) and outward unit normals (nb, 2) of Gamma_h."""
    a = mesh.vertices[mesh.boundary_edges[:, 0]]
    b = mesh.vertices[mesh.boundary_edges[:, 1]]
    t = b - a
    length = np.linalg.norm(t, axis=1)
    return length, np.column_stack([t[:, 1], -t[:, 0]]) / length[:, None]


def penalty_rule(scheme):
    """Line rule for c_h: 2-point Gauss (exact) or the midpoint (reduced)."""
    if scheme == "full":
        return gauss_line(2)
    if scheme == "reduced":
        return np.array([0.5]), np.array([1.0])
    raise ValueError(f"unknown scheme {scheme!r}")


def assemble_penalty(mesh, scheme, element=None):
    """C with C[u, v] = c_h(u . n_h, v . n_h) or its midpoint version c_h^1."""
    dm = dofmap(mesh, element or ElementChoice())
    s, w = penalty_rule(scheme)
    length, n = boundary_normals(mesh)
    phi = np.column_stack([1 - s, s])                       # (nq, 2) trace basis
    edge_mass = np.einsum("q,qi,qj->ij", w, phi, phi)       # (2, 2)
    nn = np.einsum("ka,kb->kab", n, n)
    local = length[:, None, None, None, None] * edge_mass[None, :, None, :, None] * nn[:, None, :, None, :]
    local = local.reshape(len(length), 4, 4)
    dofs = dm.vertex_dofs(mesh.boundary_edges).reshape(-1, 4)
    return _scatter(dofs, dofs, local, (dm.n_velocity, dm.n_velocity))


# --- right-hand side --------------------------------------------------------

def volume_load(mesh, f, element):
    """(f, v_h) over Omega_h with the degree-6 rule."""
    dm = dofmap(mesh, element)
    F = np.zeros(dm.n_velocity)
    bary, w = triangle_rule(6)
    area, vals, _ = basis(mesh, bary, element.bubble)
    xq = quad_points(mesh, bary)
    fq = f(xq.reshape(-1, 2)).reshape(xq.shape)
    local = np.einsum("t,q,qi,tqa->tia", area, w, vals, fq).reshape(len(area), -1)
    np.add.at(F, dm.element_velocity_dofs(mesh.triangles), local)
    return F


def assemble_rhs(mesh, case, element, epsilon, scheme, reduced_data="pointwise"):
    """Velocity and pressure load vectors.

    ``reduced_data`` selects g~(m_S) ("pointwise") or (I_h g~)(m_S)
    ("interpolated") in the reduced penalty data term.
    """
    dm = dofmap(mesh, element)
    F = volume_load(mesh, case.f, element)

    length, n = boundary_normals(mesh)
    a = mesh.vertices[mesh.boundary_edges[:, 0]]
    b = mesh.vertices[mesh.boundary_edges[:, 1]]
    edofs = dm.vertex_dofs(mesh.boundary_edges).reshape(-1, 4)

    s, ws = gauss_line(3)
    phi = np.column_stack([1 - s, s])
    xs = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    tq = case.tau(xs.reshape(-1, 2)).reshape(xs.shape)
    local = np.einsum("k,q,qi,kqa->kia", length, ws, phi, tq).reshape(-1, 4)
    np.add.at(F, edofs, local)

    s, ws = penalty_rule(scheme)
    phi = np.column_stack([1 - s, s])
    if scheme == "full" or reduced_data == "interpolated":
        gq = case.g(a)[:, None] * phi[None, :, 0] + case.g(b)[:, None] * phi[None, :, 1]
    elif reduced_data == "pointwise":
        xs = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
        gq = case.g(xs.reshape(-1, 2)).reshape(len(a), len(s))
    else:
        raise ValueError(f"unknown reduced_data {reduced_data!r}")
    local = np.einsum("k,q,kq,qi,ka->kia", length, ws, gq, phi, n).reshape(-1, 4) / epsilon
    np.add.at(F, edofs, local)
    return F, np.zeros(dm.n_pressure)


# --- systems ----------------------------------------------------------------

@dataclass
class SaddleSystem:
    A: sp.csr_matrix
    C: sp.csr_matrix
    B: sp.csr_matrix
    D: sp.csr_matrix
    rhs_velocity: np.ndarray
    rhs_pressure: np.ndarray
    epsilon: float
    scheme: str
    dofmap: DofMap
    element: ElementChoice = field(default_factory=ElementChoice)

    def velocity_block(self):
        return (self.A + self.C / self.epsilon).tocsr()

    def matrix(self):
        K = sp.bmat([[self.velocity_block(), self.B.T], [self.B, -self.D]], format="csr")
        K.sort_indices()
        return K

    def rhs(self):
        return np.concatenate([self.rhs_velocity, self.rhs_pressure])

    @property
    def n_dof(self):
        return self.dofmap.n_dof


def build_saddle_system(mesh, case, element, epsilon, scheme, reduced_data="pointwise"):
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    F, G = assemble_rhs(mesh, case, element, epsilon, scheme, reduced_data)
    system = SaddleSystem(
        A=assemble_a(mesh, element, case.nu),
        C=assemble_penalty(mesh, scheme, element),
        B=assemble_b(mesh, element),
        D=assemble_d(mesh, element),
        rhs_velocity=F, rhs_pressure=G,
        epsilon=float(epsilon), scheme=scheme,
        dofmap=dofmap(mesh, element), element=element,
    )
    K = system.matrix()
    asym = abs(K - K.T).max() if K.nnz else 0.0
    if asym > 1e-13 * max(1.0, abs(K).max()):
        raise AssertionError(f"assembled saddle matrix not symmetric ({asym:.3g})")
    return system


@dataclass
class DirichletSystem:
    """Symmetric system with velocity fixed on Gamma_h and one pressure pinned."""

    K: sp.csr_matrix
    rhs_vector: np.ndarray
    fixed: np.ndarray
    values: np.ndarray
    dofmap: DofMap
    element: ElementChoice

    def matrix(self):
        return self.K

    def rhs(self):
        return self.rhs_vector

    @property
    def n_dof(self):
        return self.dofmap.n_dof


def build_dirichlet_system(mesh, case, element):
    """Comparison problem with u_h = I_h u~ on Gamma_h (row/column elimination).

    With velocity prescribed on all of Gamma_h the pressure is determined
    only up to a constant, so the pressure at the first interior vertex is
    pinned to p~ as well; errors are measured modulo constants anyway.
    """
    dm = dofmap(mesh, element)
    A = assemble_a(mesh, element, case.nu)
    B = assemble_b(mesh, element)
    D = assemble_d(mesh, element)
    K = sp.bmat([[A, B.T], [B, -D]], format="csr")
    rhs = np.concatenate([volume_load(mesh, case.f, element), np.zeros(dm.n_pressure)])

    bverts = np.nonzero(mesh.is_boundary_vertex)[0]
    pin = int(np.nonzero(~mesh.is_boundary_vertex)[0][0])
    fixed = np.concatenate([dm.vertex_dofs(bverts).ravel(), [dm.pressure_dofs(pin)]])
    values = np.concatenate([case.u(mesh.vertices[bverts]).ravel(),
                             case.p(mesh.vertices[[pin]])])
    x0 = np.zeros(dm.n_dof)
    x0[fixed] = values
    rhs = rhs - K @ x0
    keep = np.ones(dm.n_dof)
    keep[fixed] = 0.0
    P = sp.diags(keep)
    K = (P @ K @ P + sp.diags(1.0 - keep)).tocsr()
    K.eliminate_zeros()
    K.sort_indices()
    rhs[fixed] = values
    return DirichletSystem(K, rhs, fixed, values, dm, element)
