"""
Manufactured solutions for the slip problem

    u - nu Lap u + grad p = f,  div u = 0    in Omega,
    u . n = g,  (I - n n) sigma(u, p) n = tau  on Gamma,

with sigma(u, p) = -p I + nu (grad u + grad u^T).  All fields are closed
forms vectorised over (n, 2) point arrays; their natural polynomial
extensions are used on Omega_h and Gamma_h.
"""
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class ManufacturedCase:
    u: Callable
    grad_u: Callable          # (n, 2, 2) with [k, i, j] = d u_i / d x_j
    p: Callable
    f: Callable
    g: Callable
    tau: Callable
    nu: float = 1.0
    norms: dict = None        # exact {"l2_u", "h1_u", "l2_p"} on Omega
    name: str = "custom"

    def stress(self, x):
        G = self.grad_u(x)
        S = self.nu * (G + np.swapaxes(G, 1, 2))
        S[:, 0, 0] -= self.p(x)
        S[:, 1, 1] -= self.p(x)
        return S

    def normal_traction(self, x, n):
        """lambda = -sigma(u, p) n . n, the multiplier of the constraint u . n = g."""
        return -np.einsum("ki,kij,kj->k", n, self.stress(x), n)

    def with_zero_data(self):
        """Same reference solution, zero forcing: the discrete solution is zero."""
        def zero_vec(x):
            return np.zeros((len(x), 2))

        def zero(x):
            return np.zeros(len(x))

        return replace(self, f=zero_vec, g=zero, tau=zero_vec, name=self.name + "-zero-data")

    def pde_residual(self, points, step=1e-3):
        """max |u - nu Lap u + grad p - f| with fourth-order central differences."""
        x = np.asarray(points, dtype=float)
        c = np.array([-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12]) / step**2
        c1 = np.array([1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12]) / step
        lap = np.zeros((len(x), 2))
        gp = np.zeros((len(x), 2))
        for k in range(2):
            e = np.zeros(2)
            e[k] = step
            for j, s in enumerate(range(-2, 3)):
                lap += c[j] * self.u(x + s * e)
                gp[:, k] += c1[j] * self.p(x + s * e)
        r = self.u(x) - self.nu * lap + gp - self.f(x)
        return float(np.abs(r).max())

    def compatibility_defect(self, n_param=256):
        """|int_Gamma g| on the unit circle by the periodic trapezoid rule."""
        t = 2 * np.pi * np.arange(n_param) / n_param
        pts = np.column_stack([np.cos(t), np.sin(t)])
        return float(abs(2 * np.pi / n_param * self.g(pts).sum()))


def _r2(x):
    return x[:, 0] ** 2 + x[:, 1] ** 2


def disk_case():
    """Rotational flow in the unit disk: u = r^2 (-y, x), p = 8xy, nu = 1, g = 0."""

    def u(x):
        r2 = _r2(x)
        return np.column_stack([-x[:, 1] * r2, x[:, 0] * r2])

    def grad_u(x):
        X, Y = x[:, 0], x[:, 1]
        G = np.empty((len(x), 2, 2))
        G[:, 0, 0] = -2 * X * Y
        G[:, 0, 1] = -(X**2 + 3 * Y**2)
        G[:, 1, 0] = 3 * X**2 + Y**2
        G[:, 1, 1] = 2 * X * Y
        return G

    def p(x):
        return 8 * x[:, 0] * x[:, 1]

    def f(x):
        r2 = _r2(x)
        return np.column_stack([-x[:, 1] * r2 + 16 * x[:, 1], x[:, 0] * r2])

    def g(x):
        return np.zeros(len(x))

    def tau(x):
        X, Y = x[:, 0], x[:, 1]
        P = np.empty((len(x), 2, 2))
        P[:, 0, 0], P[:, 0, 1], P[:, 1, 0], P[:, 1, 1] = 1 - X**2, -X * Y, -X * Y, 1 - Y**2
        S = np.empty((len(x), 2, 2))
        S[:, 0, 0] = -12 * X * Y
        S[:, 0, 1] = S[:, 1, 0] = 2 * (X**2 - Y**2)
        S[:, 1, 1] = -4 * X * Y
        return np.einsum("kij,kjl,kl->ki", P, S, x)

    # |u|^2 = r^6, |grad u|^2 = 10 r^4, p^2 = 64 x^2 y^2 integrated over the disk
    norms = {
        "l2_u": np.sqrt(np.pi / 4),
        "h1_u": np.sqrt(np.pi / 4 + 10 * np.pi / 3),
        "l2_p": np.sqrt(8 * np.pi / 3),
    }
    return ManufacturedCase(u, grad_u, p, f, g, tau, nu=1.0, norms=norms, name="builtin_disk")
