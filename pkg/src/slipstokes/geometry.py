"""
Analytic smooth domains and the curved-boundary machinery.

A domain Omega = {phi < 0} is described through its signed distance d,
the orthogonal projection pi onto Gamma = dOmega and the outward normal
n = grad d on Gamma.  Every point x in the tubular neighbourhood
|d(x)| < delta decomposes uniquely as

    x = pi(x) + d(x) n(pi(x)).

The mesh-dependent diagnostics at the bottom of this module measure how
well a polygonal boundary Gamma_h with vertices on Gamma approximates
Gamma: distance of Gamma_h to Gamma, normal defects, surface-integral
defects and injectivity of pi restricted to Gamma_h.

All functions accept a single point of shape (2,) or a batch of shape
(n, 2) and return results of matching leading shape.
"""
from dataclasses import dataclass

import numpy as np

from .quadrature import gauss_line


class GeometryError(Exception):
    """Base class for geometry failures."""


class NonConvergence(GeometryError):
    """The projection Newton iteration did not converge."""


class OutsideTubularNeighborhood(GeometryError):
    """The point is too far from Gamma for the projection to be unique."""


class NotOnBoundary(GeometryError):
    """A boundary-only quantity was requested away from Gamma."""


@dataclass(frozen=True)
class ProjectionResult:
    foot: np.ndarray
    distance: np.ndarray
    normal_at_foot: np.ndarray


class SmoothDomain:
    """Common interface of the analytic domains.

    Subclasses provide ``_project(x) -> (foot, distance, normal)`` for a
    batch of points and may override ``signed_distance``.
    """

    kind = "abstract"
    curvature_bound = 1.0
    delta = 0.5

    def _project(self, x):
        raise NotImplementedError

    def parametrization(self, t):
        """Return (points, speed) of a 2*pi-periodic parametrization, if known."""
        raise NotImplementedError(f"{self.kind} domain has no parametrization")


class UnitDisk(SmoothDomain):
    kind = "unit_disk"
    curvature_bound = 1.0
    delta = 0.9

    def signed_distance(self, x):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x, axis=-1) - 1.0

    def _project(self, x):
        r = np.linalg.norm(x, axis=-1)
        if np.any(r == 0.0):
            raise OutsideTubularNeighborhood("the centre has no unique projection")
        n = x / r[..., None]
        return n.copy(), r - 1.0, n

    def parametrization(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([np.cos(t), np.sin(t)], axis=-1), np.ones_like(t)


class LevelSetDomain(SmoothDomain):
    """Omega = {phi < 0} for a smooth scalar field phi.

    Parameters
    ----------
    phi, grad_phi : callable
        Vectorised over the trailing axis of an (n, 2) array.
    curvature_bound : float
        Upper bound of the boundary curvature; sets delta = 0.5 / bound.
    hess_phi : callable, optional
        Returns (n, 2, 2) Hessians.  Approximated by central differences of
        ``grad_phi`` when omitted.
    delta : float, optional
        Explicit tubular width, overriding the curvature rule.
    param : callable, optional
        t -> (points, speed) periodic parametrization of Gamma, used only by
        the surface-integral oracle.
    """

    kind = "level_set"

    def __init__(self, phi, grad_phi, curvature_bound, hess_phi=None,
                 delta=None, param=None, tol=1e-12, max_iter=50):
        if curvature_bound <= 0:
            raise ValueError("curvature_bound must be positive")
        self.phi = phi
        self.grad_phi = grad_phi
        self.hess_phi = hess_phi or self._fd_hessian
        self.curvature_bound = float(curvature_bound)
        self.delta = float(delta) if delta is not None else 0.5 / self.curvature_bound
        self._param = param
        self.tol = tol
        self.max_iter = max_iter

    def _fd_hessian(self, y):
        e = 1e-6
        cols = []
        for k in range(2):
            dy = np.zeros(2)
            dy[k] = e
            cols.append((self.grad_phi(y + dy) - self.grad_phi(y - dy)) / (2 * e))
        return np.stack(cols, axis=-1)

    def parametrization(self, t):
        if self._param is None:
            return super().parametrization(t)
        return self._param(np.asarray(t, dtype=float))

    def _residual(self, x, y):
        g = self.grad_phi(y)
        r = x - y
        return np.stack([self.phi(y), r[:, 0] * g[:, 1] - r[:, 1] * g[:, 0]], axis=-1)

    def _project(self, x):
        # Damped Newton on {phi(y) = 0, (x - y) x grad phi(y) = 0}.
        g = self.grad_phi(x)
        y = x - (self.phi(x) / np.sum(g * g, axis=-1))[:, None] * g
        scale = 1.0 + np.abs(x).max(axis=-1)
        F = self._residual(x, y)
        done = np.zeros(len(x), dtype=bool)
        for _ in range(self.max_iter):
            done = np.linalg.norm(F, axis=-1) <= self.tol * scale
            if done.all():
                break
            act = ~done
            xa, ya, Fa = x[act], y[act], F[act]
            g = self.grad_phi(ya)
            H = self.hess_phi(ya)
            r = xa - ya
            J = np.empty((len(ya), 2, 2))
            J[:, 0, :] = g
            J[:, 1, 0] = -g[:, 1] + r[:, 0] * H[:, 1, 0] - r[:, 1] * H[:, 0, 0]
            J[:, 1, 1] = g[:, 0] + r[:, 0] * H[:, 1, 1] - r[:, 1] * H[:, 0, 1]
            step = np.linalg.solve(J, -Fa[..., None])[..., 0]
            fnorm = np.linalg.norm(Fa, axis=-1)
            alpha = np.ones(len(ya))
            for _ in range(30):
                trial = ya + alpha[:, None] * step
                bad = np.linalg.norm(self._residual(xa, trial), axis=-1) > (1 - 1e-4 * alpha) * fnorm
                if not bad.any():
                    break
                alpha[bad] *= 0.5
            y[act] = ya + alpha[:, None] * step
            F[act] = self._residual(xa, y[act])
        else:
            done = np.linalg.norm(F, axis=-1) <= self.tol * scale
        if not done.all():
            raise NonConvergence(
                f"projection Newton failed for {np.count_nonzero(~done)} point(s) "
                f"within {self.max_iter} iterations")
        g = self.grad_phi(y)
        n = g / np.linalg.norm(g, axis=-1)[:, None]
        d = np.sum((x - y) * n, axis=-1)
        return y, d, n

    def signed_distance(self, x):
        x = np.asarray(x, dtype=float)
        pts = np.atleast_2d(x)
        _, d, _ = self._project(pts)
        return d if x.ndim > 1 else d[0]


def ellipse(a, b, delta=None):
    """Level-set domain x^2/a^2 + y^2/b^2 < 1 with analytic derivatives."""
    a, b = float(a), float(b)
    ia, ib = 1 / a**2, 1 / b**2

    def phi(y):
        return ia * y[..., 0] ** 2 + ib * y[..., 1] ** 2 - 1.0

    def grad_phi(y):
        return np.stack([2 * ia * y[..., 0], 2 * ib * y[..., 1]], axis=-1)

    def hess_phi(y):
        H = np.zeros(y.shape[:-1] + (2, 2))
        H[..., 0, 0] = 2 * ia
        H[..., 1, 1] = 2 * ib
        return H

    def param(t):
        pts = np.stack([a * np.cos(t), b * np.sin(t)], axis=-1)
        return pts, np.hypot(a * np.sin(t), b * np.cos(t))

    kappa = max(a / b**2, b / a**2)
    return LevelSetDomain(phi, grad_phi, kappa, hess_phi=hess_phi, delta=delta, param=param)


def disk_level_set():
    """The unit disk expressed as a level set, for cross-checking the fast path."""
    dom = ellipse(1.0, 1.0, delta=0.9)
    return dom


def signed_distance(domain, x):
    """Signed distance to Gamma; negative inside."""
    return domain.signed_distance(x)


def project(domain, x):
    """Orthogonal projection onto Gamma.

    Raises OutsideTubularNeighborhood when |d(x)| >= delta.
    """
    x = np.asarray(x, dtype=float)
    pts = np.atleast_2d(x)
    foot, d, n = domain._project(pts)
    if np.any(np.abs(d) >= domain.delta):
        raise OutsideTubularNeighborhood(
            f"max |d| = {np.abs(d).max():.3g} exceeds delta = {domain.delta:.3g}")
    if x.ndim == 1:
        return ProjectionResult(foot[0], d[0], n[0])
    return ProjectionResult(foot, d, n)


def outward_normal(domain, x, tol=1e-8):
    """Unit outward normal at a point of Gamma."""
    x = np.asarray(x, dtype=float)
    pts = np.atleast_2d(x)
    _, d, n = domain._project(pts)
    if np.any(np.abs(d) > tol):
        raise NotOnBoundary(f"|d(x)| = {np.abs(d).max():.3g} > {tol:g}")
    return n[0] if x.ndim == 1 else n


# --- polygonal boundary diagnostics -----------------------------------------

def _edge_geometry(mesh):
    edges = mesh.boundary_edges
    a = mesh.vertices[edges[:, 0]]
    b = mesh.vertices[edges[:, 1]]
    t = b - a
    length = np.linalg.norm(t, axis=1)
    nh = np.column_stack([t[:, 1], -t[:, 0]]) / length[:, None]
    return a, b, length, nh


def _edge_points(a, b, s):
    # points a + s (b - a) for every edge and every local coordinate s
    return a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]


def boundary_distance(mesh, domain, npts=2):
    """max |d(x)| over Gauss points of the boundary edges."""
    a, b, _, _ = _edge_geometry(mesh)
    s, _ = gauss_line(npts)
    pts = _edge_points(a, b, s).reshape(-1, 2)
    return float(np.abs(domain._project(pts)[1]).max())


def normal_defect(mesh, domain):
    """Maximal |n o pi - n_h| at 2-point Gauss nodes and at edge midpoints."""
    a, b, _, nh = _edge_geometry(mesh)
    s, _ = gauss_line(2)
    pts = _edge_points(a, b, s)
    n = domain._project(pts.reshape(-1, 2))[2].reshape(pts.shape)
    gauss = np.linalg.norm(n - nh[:, None, :], axis=-1).max()
    mid = 0.5 * (a + b)
    nm = domain._project(mid)[2]
    midpoint = np.linalg.norm(nm - nh, axis=-1).max()
    return {"max_over_edges": float(gauss), "max_at_midpoints": float(midpoint)}


def surface_integral_defect(mesh, domain, f, n_param=64, n_gauss=3):
    """|int_Gamma f - int_Gamma_h f o pi| for a scalar field f(points).

    The reference integral uses the periodic trapezoid rule on the exact
    parametrization of Gamma with ``n_param`` nodes.
    """
    t = 2 * np.pi * np.arange(n_param) / n_param
    pts, speed = domain.parametrization(t)
    exact = 2 * np.pi / n_param * np.sum(f(pts) * speed)
    a, b, length, _ = _edge_geometry(mesh)
    s, w = gauss_line(n_gauss)
    q = _edge_points(a, b, s)
    foot = domain._project(q.reshape(-1, 2))[0]
    vals = f(foot).reshape(q.shape[:2])
    approx = np.sum(length * (vals @ w))
    return float(abs(exact - approx))


def projection_injective_polygon(vertices, domain, samples_per_edge=16):
    """True iff polar angles of pi(samples) increase strictly along the loop."""
    v = np.asarray(vertices, dtype=float)
    a, b = v, np.roll(v, -1, axis=0)
    s = np.arange(samples_per_edge) / samples_per_edge
    pts = _edge_points(a, b, s).reshape(-1, 2)
    foot = domain._project(pts)[0]
    theta = np.unwrap(np.arctan2(foot[:, 1], foot[:, 0]))
    steps = np.diff(np.append(theta, theta[0] + 2 * np.pi))
    return bool(np.all(steps > 0.0) and abs(theta[-1] - theta[0]) < 2 * np.pi)


def projection_injectivity_check(mesh, domain, samples_per_edge=16):
    """Sampling test that pi restricted to Gamma_h is injective."""
    return projection_injective_polygon(
        mesh.vertices[mesh.boundary_loop()], domain, samples_per_edge)
