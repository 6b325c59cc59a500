"""
Sparse linear algebra for the penalty saddle systems.

Matrices are scipy CSR matrices with sorted, duplicate-free column
indices.  The Krylov solvers are right-preconditioned, so the residual
they monitor is the true residual ||b - A x||.  Non-convergence is an
outcome recorded in the SolveReport, never an exception.
"""
from dataclasses import dataclass, field
import warnings

import numpy as np
import scipy.io
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_CAP = 6000


class SolverError(Exception):
    pass


class BreakdownError(SolverError):
    """Zero pivot in the incomplete factorization."""


class SingularMatrix(SolverError):
    pass


class TooLarge(SolverError):
    """Dense path requested above the configured size cap."""


@dataclass
class SolveReport:
    iterations: int
    residual: float            # final ||b - A x|| / ||b||
    converged: bool
    method: str
    precond: str = "none"
    history: list = field(default_factory=list, repr=False)


def as_csr(A):
    """CSR copy with canonical (sorted, unique) column indices."""
    A = sp.csr_matrix(A, dtype=float, copy=True)
    A.sum_duplicates()
    A.sort_indices()
    return A


# --- ILU(0) -----------------------------------------------------------------

class ILU0:
    """Incomplete LU with the sparsity pattern of A (no fill-in).

    L is unit lower triangular; both factors share A's pattern.
    """

    def __init__(self, A):
        A = as_csr(A)
        n = A.shape[0]
        indptr, indices = A.indptr, A.indices
        data = A.data.copy()
        cols = indices.tolist()
        ptr = indptr.tolist()
        diag = np.full(n, -1)
        for i in range(n):
            for jj in range(ptr[i], ptr[i + 1]):
                if cols[jj] == i:
                    diag[i] = jj
                    break
        if np.any(diag < 0):
            raise BreakdownError("structurally zero diagonal entry")
        vals = data.tolist()
        for i in range(n):
            start, end = ptr[i], ptr[i + 1]
            pos = {cols[jj]: jj for jj in range(start, end)}
            for kk in range(start, end):
                k = cols[kk]
                if k >= i:
                    break
                pivot = vals[diag[k]]
                if pivot == 0.0:
                    raise BreakdownError(f"zero pivot in row {k}")
                lik = vals[kk] / pivot
                vals[kk] = lik
                for jj in range(diag[k] + 1, ptr[k + 1]):
                    target = pos.get(cols[jj])
                    if target is not None:
                        vals[target] -= lik * vals[jj]
            if vals[diag[i]] == 0.0:
                raise BreakdownError(f"zero pivot in row {i}")
        LU = sp.csr_matrix((np.array(vals), indices.copy(), indptr.copy()), shape=A.shape)
        self.L = (sp.tril(LU, k=-1) + sp.identity(n)).tocsr()
        self.U = sp.triu(LU).tocsr()
        self.LU = LU

    def solve(self, r):
        y = spla.spsolve_triangular(self.L, r, lower=True, unit_diagonal=True)
        return spla.spsolve_triangular(self.U, y, lower=False)


def _preconditioner(A, precond):
    if precond == "none":
        return None, "none"
    if precond == "ilu0":
        try:
            return ILU0(A).solve, "ilu0"
        except BreakdownError:
            return None, "none (ilu0 breakdown)"
    raise ValueError(f"unknown preconditioner {precond!r}")


def _targets(b, rel_tol, abs_tol):
    bnorm = np.linalg.norm(b)
    return bnorm, max(rel_tol * bnorm, abs_tol)


# --- GMRES ------------------------------------------------------------------

def gmres_solve(A, b, restart=30, rel_tol=1e-6, abs_tol=1e-10, max_iter=None,
                precond="ilu0", x0=None):
    """Restarted GMRES with right preconditioning.

    ``max_iter`` counts inner iterations and defaults to 50 restart cycles.
    Returns the best iterate and a SolveReport.
    """
    A = as_csr(A)
    b = np.asarray(b, dtype=float)
    n = len(b)
    max_iter = 50 * restart if max_iter is None else max_iter
    M, pc_name = _preconditioner(A, precond)
    apply_m = M if M is not None else (lambda v: v)
    bnorm, target = _targets(b, rel_tol, abs_tol)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True, "gmres", pc_name)
    r = b - A @ x
    rnorm = np.linalg.norm(r)
    history = [rnorm]
    its = 0
    m = min(restart, n)
    while rnorm > target and its < max_iter:
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n))
        H = np.zeros((m + 1, m))
        cs, sn = np.zeros(m), np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = rnorm
        V[0] = r / rnorm
        k = 0
        for k in range(m):
            Z[k] = apply_m(V[k])
            w = A @ Z[k]
            for j in range(k + 1):          # modified Gram-Schmidt
                H[j, k] = w @ V[j]
                w -= H[j, k] * V[j]
            hk1 = np.linalg.norm(w)
            for j in range(k):
                t = cs[j] * H[j, k] + sn[j] * H[j + 1, k]
                H[j + 1, k] = -sn[j] * H[j, k] + cs[j] * H[j + 1, k]
                H[j, k] = t
            denom = np.hypot(H[k, k], hk1)
            cs[k], sn[k] = (H[k, k] / denom, hk1 / denom) if denom else (1.0, 0.0)
            H[k, k] = denom
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            its += 1
            history.append(abs(g[k + 1]))
            if abs(g[k + 1]) <= target or its >= max_iter or hk1 == 0.0:
                break
            V[k + 1] = w / hk1
        kk = k + 1
        if np.all(np.diag(H[:kk, :kk]) != 0):
            y = sla.solve_triangular(H[:kk, :kk], g[:kk])
        else:
            y = np.linalg.lstsq(H[:kk, :kk], g[:kk], rcond=None)[0]
        x = x + Z[:kk].T @ y
        r = b - A @ x
        new = np.linalg.norm(r)
        if new >= rnorm and abs(g[kk]) >= rnorm:
            rnorm = new
            break                           # stagnation: no progress in a full cycle
        rnorm = new
    return x, SolveReport(its, rnorm / bnorm, bool(rnorm <= target), "gmres", pc_name, history)


# --- BiCGSTAB ---------------------------------------------------------------

def bicgstab_solve(A, b, rel_tol=1e-6, abs_tol=1e-10, max_iter=None, precond="ilu0", x0=None):
    """Right-preconditioned BiCGSTAB; one iteration = two matrix-vector products."""
    A = as_csr(A)
    b = np.asarray(b, dtype=float)
    n = len(b)
    max_iter = 50 * 30 if max_iter is None else max_iter
    M, pc_name = _preconditioner(A, precond)
    apply_m = M if M is not None else (lambda v: v)
    bnorm, target = _targets(b, rel_tol, abs_tol)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True, "bicgstab", pc_name)
    r = b - A @ x
    rhat = r.copy()
    rho = alpha = omega = 1.0
    v = p = np.zeros(n)
    best_x, best = x.copy(), np.linalg.norm(r)
    history = [best]
    its = 0
    while best > target and its < max_iter:
        rho_new = rhat @ r
        if rho_new == 0.0:
            break
        beta = (rho_new / rho) * (alpha / omega) if its else 0.0
        rho = rho_new
        p = r + beta * (p - omega * v) if its else r.copy()
        phat = apply_m(p)
        v = A @ phat
        denom = rhat @ v
        if denom == 0.0:
            break
        alpha = rho / denom
        s = r - alpha * v
        its += 1
        if np.linalg.norm(s) <= target:
            x = x + alpha * phat
            r = s
        else:
            shat = apply_m(s)
            t = A @ shat
            tt = t @ t
            if tt == 0.0:
                break
            omega = (t @ s) / tt
            x = x + alpha * phat + omega * shat
            r = s - omega * t
        rn = np.linalg.norm(r)
        history.append(rn)
        if not np.isfinite(rn):
            break
        if rn < best:
            best, best_x = rn, x.copy()
        if omega == 0.0:
            break
    true = np.linalg.norm(b - A @ best_x)
    return best_x, SolveReport(its, true / bnorm, bool(true <= target), "bicgstab", pc_name, history)


# --- dense paths ------------------------------------------------------------

def _dense(A, cap):
    n = A.shape[0]
    if n > cap:
        raise TooLarge(f"n = {n} exceeds the dense cap {cap}")
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


def lu_factor(A, cap=DENSE_CAP):
    """Partial-pivoting LU; SingularMatrix if a pivot is below 1e-300."""
    Ad = _dense(A, cap)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(Ad, check_finite=True)
    if np.abs(np.diag(lu)).min() < 1e-300:
        raise SingularMatrix("zero pivot in dense LU")
    return lu, piv


def dense_lu_solve(A, b, cap=DENSE_CAP):
    return sla.lu_solve(lu_factor(A, cap), np.asarray(b, dtype=float))


def condition_estimate(A, tol=1e-6, max_iter=500, cap=DENSE_CAP, seed=0):
    """2-norm condition number sigma_max / sigma_min.

    sigma_max from power iteration on A^T A, sigma_min from inverse power
    iteration through the dense LU factors.  Returns inf for singular A.
    """
    Ad = _dense(A, cap)
    n = Ad.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    smax = 0.0
    for _ in range(max_iter):
        w = Ad.T @ (Ad @ v)
        lam = np.linalg.norm(w)
        if lam == 0.0:
            return np.inf
        v = w / lam
        done = abs(lam - smax) <= tol * lam
        smax = lam
        if done:
            break
    try:
        factors = lu_factor(Ad, cap)
    except SingularMatrix:
        return np.inf
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    mu = 0.0
    for _ in range(max_iter):
        y = sla.lu_solve(factors, v, trans=1)
        w = sla.lu_solve(factors, y)
        lam = np.linalg.norm(w)
        if not np.isfinite(lam) or lam == 0.0:
            return np.inf
        v = w / lam
        done = abs(lam - mu) <= tol * lam
        mu = lam
        if done:
            break
    return float(np.sqrt(smax) * np.sqrt(mu))


def sparse_lu_solve(A, b):
    """Direct sparse solve through SuperLU (the desk-scale stand-in for UMFPACK)."""
    lu = spla.splu(sp.csc_matrix(A))
    return lu.solve(np.asarray(b, dtype=float))


def solve(A, b, method="sparse_lu", restart=30, rel_tol=1e-8, abs_tol=1e-10,
          max_iter=None, precond="ilu0", dense_cap=DENSE_CAP):
    """Dispatch to one of the solvers; returns (x, SolveReport)."""
    b = np.asarray(b, dtype=float)
    if method == "gmres":
        return gmres_solve(A, b, restart, rel_tol, abs_tol, max_iter, precond)
    if method == "bicgstab":
        return bicgstab_solve(A, b, rel_tol, abs_tol, max_iter, precond)
    if method in ("dense_lu", "sparse_lu"):
        try:
            x = dense_lu_solve(A, b, dense_cap) if method == "dense_lu" else sparse_lu_solve(A, b)
        except (SingularMatrix, RuntimeError):
            return np.full(len(b), np.nan), SolveReport(0, np.inf, False, method)
        bnorm = np.linalg.norm(b)
        res = np.linalg.norm(b - A @ x) / bnorm if bnorm else np.linalg.norm(A @ x)
        return x, SolveReport(1, float(res), bool(np.isfinite(res)), method)
    raise ValueError(f"unknown solver method {method!r}")


def relative_residual(A, x, b):
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    r = np.linalg.norm(b - A @ x)
    return r / bnorm if bnorm else r


def export_matrix_market(path, A):
    scipy.io.mmwrite(str(path), sp.coo_matrix(A))


def import_matrix_market(path):
    return as_csr(scipy.io.mmread(str(path)))
