"""Closed-form Gaussian benchmark: assignment map, wage, and parametric ML.

When worker and firm attributes are standard bivariate normal with
correlations rho_x and rho_y and the technology matrix A is diagonal, the
equilibrium assignment is linear, y* = J x, and the wage is quadratic in x.
The ML estimator fits that parametric model directly; its corrected variant
de-attenuates the firm-side correlation for measurement error.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import DimensionError, NumericalError
from .ot import ProductionTech

_RHO_CLAMP = 0.999


def closed_form_J(rho_x: float, rho_y: float, delta: float) -> np.ndarray:
    """Linear assignment map y* = J x for the diagonal-technology Gaussian model."""
    for name, r in (("rho_x", rho_x), ("rho_y", rho_y)):
        if not -1.0 < r < 1.0:
            raise ValueError(f"{name}={r} must lie in (-1, 1)")
    if delta <= 0:
        raise ValueError(f"delta={delta} must be positive")
    s = np.sqrt(1.0 - rho_y**2) / np.sqrt(1.0 - rho_x**2)
    norm = np.sqrt(1.0 + 2.0 * delta * (rho_x * rho_y + np.sqrt(1.0 - rho_y**2) * np.sqrt(1.0 - rho_x**2)) + delta**2)
    J = np.array(
        [
            [1.0 + delta * s, delta * (rho_y - rho_x * s)],
            [rho_y - rho_x * s, delta + s],
        ]
    )
    return J / norm


def closed_form_wage(X, tech: ProductionTech, rho_x: float, rho_y: float, c: float = 0.0) -> np.ndarray:
    """Equilibrium wage w*(x) under the Gaussian model.

    Quadratic part (alpha_CC / 2)(J11 xC^2 + 2 J12 xC xM + delta J22 xM^2)
    plus the linear payoff x'b and the constant c. Emits a warning if the
    wage Hessian is not positive semidefinite (non-convex wage profile).
    """
    if not tech.is_diagonal:
        raise ValueError("closed form requires a diagonal technology matrix")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != 2:
        raise DimensionError(f"X has shape {X.shape}, expected 2 columns")
    delta = tech.delta
    J = closed_form_J(rho_x, rho_y, delta)
    H = tech.alpha_cc * np.array([[J[0, 0], J[0, 1]], [J[0, 1], delta * J[1, 1]]])
    eigs = np.linalg.eigvalsh(H)
    if eigs.min() < -1e-10 * max(1.0, eigs.max()):
        warnings.warn(
            f"wage Hessian has negative eigenvalue {eigs.min():.3e}; "
            "the closed-form wage is not convex for these parameters",
            RuntimeWarning,
        )
    quad = 0.5 * np.einsum("ni,ij,nj->n", X, H, X)
    return quad + X @ tech.b + c


@dataclass(frozen=True)
class GaussianEquilibrium:
    """Noise-free equilibrium draw from the closed-form Gaussian model."""

    X: np.ndarray
    Y_star: np.ndarray
    W_star: np.ndarray
    J: np.ndarray


def draw_gaussian_equilibrium(n, tech: ProductionTech, rho_x, rho_y, c=0.0, rng=None) -> GaussianEquilibrium:
    """Sample workers and compute their closed-form matches and wages."""
    rng = np.random.default_rng(rng)
    cov = np.array([[1.0, rho_x], [rho_x, 1.0]])
    X = rng.multivariate_normal(np.zeros(2), cov, size=n, method="cholesky")
    J = closed_form_J(rho_x, rho_y, tech.delta)
    Y_star = X @ J.T
    W_star = closed_form_wage(X, tech, rho_x, rho_y, c)
    return GaussianEquilibrium(X=X, Y_star=Y_star, W_star=W_star, J=J)


@dataclass
class MLFit:
    """Parametric ML estimate of the Gaussian matching model."""

    alpha_cc: float
    alpha_mm: float
    beta_c: float
    beta_m: float
    c: float
    sigma_w: float
    sigma_c: float
    sigma_m: float
    rho_x: float
    rho_y: float
    loglik: float
    corrected: bool
    rho_clamped: bool = False
    n_fixed_point_iter: int = 0

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.alpha_cc, self.alpha_mm, self.beta_c, self.beta_m])


def _profile_nll(log_alpha, W, X, Y, rho_x, rho_y):
    """Concentrated negative log-likelihood given the complementarities.

    For fixed (alpha_CC, alpha_MM) the assignment map J is determined, and
    (beta, c, sigma) have closed-form profile estimates; only the three log
    error variances remain in the criterion.
    """
    a_cc, a_mm = np.exp(np.clip(log_alpha, -300.0, 300.0))
    if not (np.isfinite(a_cc) and np.isfinite(a_mm)) or min(a_cc, a_mm) <= 0:
        return np.inf, np.zeros(3), (np.inf, np.inf, np.inf)
    delta = a_mm / a_cc
    if not np.isfinite(delta) or delta <= 0:
        return np.inf, np.zeros(3), (np.inf, np.inf, np.inf)
    J = closed_form_J(rho_x, rho_y, delta)
    Ry = Y - X @ J.T
    s2_c = np.mean(Ry[:, 0] ** 2)
    s2_m = np.mean(Ry[:, 1] ** 2)
    quad = 0.5 * a_cc * (
        J[0, 0] * X[:, 0] ** 2 + 2.0 * J[0, 1] * X[:, 0] * X[:, 1] + delta * J[1, 1] * X[:, 1] ** 2
    )
    Z = np.column_stack([X, np.ones(len(X))])
    coef, *_ = np.linalg.lstsq(Z, W - quad, rcond=None)
    s2_w = np.mean((W - quad - Z @ coef) ** 2)
    if min(s2_w, s2_c, s2_m) <= 0:
        return np.inf, coef, (s2_w, s2_c, s2_m)
    nll = 0.5 * len(W) * (np.log(s2_w) + np.log(s2_c) + np.log(s2_m))
    return nll, coef, (s2_w, s2_c, s2_m)


def _ml_given_rho(W, X, Y, rho_x, rho_y, rng):
    base = np.log([0.5, 0.5])
    best = None
    for k in range(5):
        start = base if k == 0 else base + rng.normal(scale=0.7, size=2)
        res = minimize(
            lambda la: _profile_nll(la, W, X, Y, rho_x, rho_y)[0],
            start,
            method="BFGS",
            options={"gtol": 1e-9, "maxiter": 400},
        )
        if best is None or res.fun < best.fun:
            best = res
    nll, coef, (s2_w, s2_c, s2_m) = _profile_nll(best.x, W, X, Y, rho_x, rho_y)
    a_cc, a_mm = np.exp(best.x)
    return {
        "alpha_cc": a_cc,
        "alpha_mm": a_mm,
        "beta_c": coef[0],
        "beta_m": coef[1],
        "c": coef[2],
        "sigma_w": np.sqrt(s2_w),
        "sigma_c": np.sqrt(s2_c),
        "sigma_m": np.sqrt(s2_m),
        "loglik": -nll,
    }


def ml_fit(W, X, Y, corrected: bool = False, seed: int = 0, max_fp_iter: int = 50) -> MLFit:
    """Fit the parametric Gaussian model by maximum likelihood.

    The baseline estimator plugs in the raw firm-side correlation corr(y),
    which is attenuated by measurement error. With corrected=True the
    correlation is de-attenuated using the fitted error variances, iterating
    to a fixed point. Raises NumericalError if the implied signal variance
    var(y) - sigma^2 is not positive.
    """
    W = np.asarray(W, dtype=float).ravel()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n = W.size
    if X.shape != (n, 2) or Y.shape != (n, 2):
        raise DimensionError(f"need W (n,), X (n, 2), Y (n, 2); got {W.shape}, {X.shape}, {Y.shape}")
    rng = np.random.default_rng(seed)

    rho_x = float(np.corrcoef(X.T)[0, 1])
    rho_tilde = float(np.corrcoef(Y.T)[0, 1])
    vy1, vy2 = np.var(Y[:, 0]), np.var(Y[:, 1])

    rho_y = rho_tilde
    clamped = False
    fit = _ml_given_rho(W, X, Y, rho_x, rho_y, rng)
    n_iter = 0
    if corrected:
        for n_iter in range(1, max_fp_iter + 1):
            d1 = vy1 - fit["sigma_c"] ** 2
            d2 = vy2 - fit["sigma_m"] ** 2
            if d1 <= 0 or d2 <= 0:
                if n_iter == 1:
                    # the baseline fit itself implies an inadmissible sigma
                    raise NumericalError(
                        "correlation correction infeasible: fitted error variance "
                        "exceeds the observed variance of y"
                    )
                # the fixed point left the feasible region: the corrected
                # correlation diverges, so keep the last clamped iterate
                clamped = True
                break
            rho_new = rho_tilde * np.sqrt(vy1 * vy2) / np.sqrt(d1 * d2)
            if abs(rho_new) >= _RHO_CLAMP:
                rho_new = np.sign(rho_new) * _RHO_CLAMP
                clamped = True
            if abs(rho_new - rho_y) < 1e-8:
                rho_y = rho_new
                break
            rho_y = rho_new
            fit = _ml_given_rho(W, X, Y, rho_x, rho_y, rng)

    return MLFit(
        alpha_cc=float(fit["alpha_cc"]),
        alpha_mm=float(fit["alpha_mm"]),
        beta_c=float(fit["beta_c"]),
        beta_m=float(fit["beta_m"]),
        c=float(fit["c"]),
        sigma_w=float(fit["sigma_w"]),
        sigma_c=float(fit["sigma_c"]),
        sigma_m=float(fit["sigma_m"]),
        rho_x=rho_x,
        rho_y=float(rho_y),
        loglik=float(fit["loglik"]),
        corrected=corrected,
        rho_clamped=clamped,
        n_fixed_point_iter=n_iter,
    )
