"""Convex QP with inequality constraints, solved through its NNLS dual.

Solves min_x 0.5 x'Hx + g'x subject to C x >= 0 for positive definite H.
With H = R'R (Cholesky), the Lagrange dual is the nonnegative least-squares
problem min_{lam >= 0} ||(C R^-1)' lam - R^-T g||, solved by the
Lawson-Hanson active-set iteration; the primal solution is recovered as
x = H^-1 (C' lam - g). NNLS optimality of lam is equivalent to primal
feasibility plus complementary slackness, because the NNLS gradient equals
C x exactly.
"""

import numpy as np
import scipy.linalg

from .errors import DimensionError, NumericalError


def solve_qp(H, g, C=None, max_iter=None):
    """Minimize 0.5 x'Hx + g'x subject to C x >= 0.

    Returns (x, active) where active lists the constraints with nonzero
    multipliers at the optimum. H must be positive definite (a relative
    jitter of 1e-12 is applied if its Cholesky factorization fails once).
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float).ravel()
    p = g.size
    if H.shape != (p, p):
        raise DimensionError(f"H has shape {H.shape}, expected ({p}, {p})")
    if C is None or len(C) == 0:
        return _chol_solve(H, -g)[0], []
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape[1] != p:
        raise DimensionError(f"C has {C.shape[1]} columns, expected {p}")

    x_free, R = _chol_solve(H, -g)
    if np.min(C @ x_free) >= 0.0:
        return x_free, []

    A = scipy.linalg.solve_triangular(R, C.T, trans="T", lower=False)
    a0 = scipy.linalg.solve_triangular(R, g, trans="T", lower=False)
    lam = _nnls(A, a0, max_iter=max_iter)
    x = scipy.linalg.cho_solve((R, False), C.T @ lam - g)
    if not np.all(np.isfinite(x)):
        raise NumericalError("QP dual produced non-finite solution")
    active = [int(j) for j in np.nonzero(lam > 0.0)[0]]
    return x, active


def _nnls(A, b, max_iter=None):
    """Lawson-Hanson nonnegative least squares: min ||A lam - b||, lam >= 0."""
    p, m = A.shape
    if max_iter is None:
        max_iter = max(200, 10 * m)
    lam = np.zeros(m)
    free = np.zeros(m, dtype=bool)
    tol = 1e-10 * max(1.0, np.abs(A).max() * np.abs(b).max())
    for _ in range(max_iter):
        w = A.T @ (b - A @ lam)
        w[free] = -np.inf
        j = int(np.argmax(w))
        if w[j] <= tol:
            return lam
        free[j] = True
        while True:
            idx = np.nonzero(free)[0]
            s = np.zeros(m)
            s[idx] = np.linalg.lstsq(A[:, idx], b, rcond=None)[0]
            if s[idx].min() > 0:
                lam = s
                break
            # Step to the boundary and drop variables that hit zero.
            neg = idx[s[idx] <= 0]
            alpha = np.min(lam[neg] / (lam[neg] - s[neg]))
            lam = lam + alpha * (s - lam)
            drop = free & (lam <= 1e-14 * max(1.0, np.abs(lam).max()))
            lam[drop] = 0.0
            free[drop] = False
            if not free.any():
                lam = np.zeros(m)
                break
    raise NumericalError(f"NNLS did not converge in {max_iter} iterations")


def _chol_solve(H, rhs):
    """Solve H x = rhs via Cholesky, with a one-shot jitter retry."""
    try:
        R = scipy.linalg.cholesky(H, lower=False)
    except scipy.linalg.LinAlgError:
        jitter = 1e-12 * max(np.trace(H) / H.shape[0], 1.0)
        try:
            R = scipy.linalg.cholesky(H + jitter * np.eye(H.shape[0]), lower=False)
        except scipy.linalg.LinAlgError as exc:
            raise NumericalError("QP Hessian is not positive definite") from exc
    return scipy.linalg.cho_solve((R, False), rhs), R
