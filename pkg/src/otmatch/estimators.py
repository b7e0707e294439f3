"""Sieve estimators of the matching technology: SLS, SGLS, and SML.

The model writes a matched observation z_i = (w_i, y_Ci, y_Mi) in terms of
an unknown convex wage function w(x), its gradient, and the technology:

    w_i  = w(x_i) + x_i'b + eps_wi
    y_Ci = kappa_C dw/dx_C (x_i) + eps_Ci
    y_Mi = kappa_M dw/dx_M (x_i) + eps_Mi

with kappa = 1 / alpha. The wage constant is absorbed into the sieve
coefficients, so theta = (kappa_C, kappa_M, beta_C, beta_M). The objective
is bilinear in (kappa, gamma): block-coordinate descent alternates a
convexity-constrained QP in (gamma, b) with a 2x2 weighted least squares
update of kappa, from several kappa starts.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .bernstein import BernsteinTensor, domain_from_data
from .errors import DataError, DimensionError, NumericalError
from .qp import solve_qp

_KAPPA_CAP = 1e4
_OUTER_TOL = 1e-10
_MAX_OUTER = 500


@dataclass(frozen=True)
class Theta:
    """Finite-dimensional technology parameters, kappa = 1 / alpha."""

    kappa_c: float
    kappa_m: float
    beta_c: float
    beta_m: float

    def __post_init__(self):
        vals = (self.kappa_c, self.kappa_m, self.beta_c, self.beta_m)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError(f"theta entries must be finite, got {vals}")
        if self.kappa_c == 0.0 or self.kappa_m == 0.0:
            raise ValueError("kappa entries must be nonzero so alpha = 1/kappa exists")

    @property
    def alpha_cc(self) -> float:
        return 1.0 / self.kappa_c

    @property
    def alpha_mm(self) -> float:
        return 1.0 / self.kappa_m

    def as_array(self) -> np.ndarray:
        return np.array([self.kappa_c, self.kappa_m, self.beta_c, self.beta_m])


@dataclass(frozen=True)
class MatchedSample:
    """Matched wage/skill/demand observations."""

    w: np.ndarray
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).ravel()
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.atleast_2d(np.asarray(self.Y, dtype=float))
        if X.shape != (w.size, 2) or Y.shape != (w.size, 2):
            raise DimensionError(
                f"inconsistent sample shapes: w {w.shape}, X {X.shape}, Y {Y.shape}"
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise DataError("sample contains non-finite values")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.w.size


@dataclass
class SigmaHat:
    """Series estimate of the conditional residual covariance Sigma_0(x).

    Six per-entry regressions of the residual outer product on the sieve
    basis; evaluation symmetrizes and floors eigenvalues at
    1e-6 * trace / 3 so the result is always positive definite.
    """

    basis: BernsteinTensor
    coefs: np.ndarray  # (6, size), entry order (ww, wC, wM, CC, CM, MM)
    scale: float = 1.0
    ridged: bool = False

    _IJ = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]

    def __call__(self, X) -> np.ndarray:
        """Evaluate Sigma_0 at each row of X; shape (n, 3, 3)."""
        vals = self.basis.design_matrix(X) @ self.coefs.T  # (n, 6)
        n = vals.shape[0]
        S = np.empty((n, 3, 3))
        for k, (i, j) in enumerate(self._IJ):
            S[:, i, j] = vals[:, k]
            S[:, j, i] = vals[:, k]
        lam, V = np.linalg.eigh(S)
        # The series fit can dip to zero or below near the domain edges, so
        # the floor is relative to the sample-average scale, not the local
        # trace; this caps the implied GLS weights at ~100x the average.
        floor = np.maximum(1e-6 * np.trace(S, axis1=1, axis2=2) / 3.0, 1e-2 * self.scale)
        lam = np.maximum(lam, np.maximum(floor, 1e-12)[:, None])
        return np.einsum("nij,nj,nkj->nik", V, lam, V)


@dataclass
class EstimateReport:
    """Converged sieve fit with variance information and diagnostics."""

    theta: Theta
    gamma: BernsteinTensor
    objective: float
    method: str
    vcov: np.ndarray | None = None
    se_alpha_cc: float | None = None
    se_alpha_mm: float | None = None
    se_beta_c: float | None = None
    se_beta_m: float | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def alpha_cc(self) -> float:
        return self.theta.alpha_cc

    @property
    def alpha_mm(self) -> float:
        return self.theta.alpha_mm

    def to_json(self, path=None) -> str:
        payload = {
            "method": self.method,
            "theta": {
                "kappa_c": self.theta.kappa_c,
                "kappa_m": self.theta.kappa_m,
                "beta_c": self.theta.beta_c,
                "beta_m": self.theta.beta_m,
            },
            "alpha_cc": self.alpha_cc,
            "alpha_mm": self.alpha_mm,
            "se": {
                "alpha_cc": self.se_alpha_cc,
                "alpha_mm": self.se_alpha_mm,
                "beta_c": self.se_beta_c,
                "beta_m": self.se_beta_m,
            },
            "objective": self.objective,
            "vcov": None if self.vcov is None else self.vcov.tolist(),
            "sieve": {
                "deg_c": self.gamma.deg_c,
                "deg_m": self.gamma.deg_m,
                "lo": self.gamma.lo.tolist(),
                "hi": self.gamma.hi.tolist(),
                "gamma": self.gamma.gamma.tolist(),
            },
            "metadata": self.metadata,
        }
        text = json.dumps(payload, indent=2, default=float)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def report_from_json(source) -> EstimateReport:
    """Rebuild an EstimateReport from to_json output (path or parsed dict)."""
    if isinstance(source, dict):
        payload = source
    else:
        with open(source) as fh:
            payload = json.load(fh)
    try:
        th = payload["theta"]
        sv = payload["sieve"]
        theta = Theta(th["kappa_c"], th["kappa_m"], th["beta_c"], th["beta_m"])
        basis = BernsteinTensor(
            sv["deg_c"], sv["deg_m"], np.array(sv["lo"]), np.array(sv["hi"]), sv["gamma"]
        )
        vcov = payload.get("vcov")
        se = payload.get("se", {})
        return EstimateReport(
            theta=theta,
            gamma=basis,
            objective=float(payload["objective"]),
            method=payload["method"],
            vcov=None if vcov is None else np.array(vcov),
            se_alpha_cc=se.get("alpha_cc"),
            se_alpha_mm=se.get("alpha_mm"),
            se_beta_c=se.get("beta_c"),
            se_beta_m=se.get("beta_m"),
            metadata=payload.get("metadata", {}),
        )
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed estimate report: missing {exc}") from exc


def residuals(sample: MatchedSample, theta: Theta, sieve: BernsteinTensor, gamma=None) -> np.ndarray:
    """Model residuals, one row (wage, cognitive, manual) per observation."""
    gamma = sieve.gamma if gamma is None else gamma
    B = sieve.design_matrix(sample.X)
    Gc, Gm = sieve.gradient_matrices(sample.X)
    g = np.asarray(gamma, dtype=float).ravel()
    return np.column_stack(
        [
            sample.w - B @ g - sample.X @ np.array([theta.beta_c, theta.beta_m]),
            sample.Y[:, 0] - theta.kappa_c * (Gc @ g),
            sample.Y[:, 1] - theta.kappa_m * (Gm @ g),
        ]
    )


class _FitProblem:
    """Precomputed design pieces shared by all weighted fits on a sample.

    For a given weight field W_i the normal-equation pieces are assembled
    from kappa-independent cross products: with per-channel designs
    d_0 = [B, X], d_1 = [G_C, 0], d_2 = [G_M, 0] and channel scalings
    s(kappa) = (1, kappa_C, kappa_M),

        H(kappa) = sum_{u,v} s_u s_v M_uv,   M_uv = sum_i W_i[u,v] d_u(i)'d_v(i)
        g(kappa) = -sum_u s_u n_u,           n_u  = sum_i d_u(i) (W_i[u,:] z_i)

    so re-solving the (gamma, beta) QP along a kappa path costs only a
    constant-size assembly plus the QP itself.
    """

    def __init__(self, sample, degrees, convexity):
        self.sample = sample
        deg_c, deg_m = degrees
        lo, hi = domain_from_data(sample.X)
        self.basis = BernsteinTensor(deg_c, deg_m, lo, hi)
        self.size = self.basis.size
        if sample.n < self.size + 4:
            raise DataError(
                f"sample size {sample.n} too small for sieve size {self.size} + 4"
            )
        self.B = self.basis.design_matrix(sample.X)
        self.Gc, self.Gm = self.basis.gradient_matrices(sample.X)
        # center wages so the fit is exactly invariant to the wage location;
        # the mean is added back to gamma via partition of unity
        self.w_mean = float(np.mean(sample.w))
        self.z = np.column_stack([sample.w - self.w_mean, sample.Y])
        self.Cfull = None
        if convexity:
            C = self.basis.convexity_constraints()
            self.Cfull = np.hstack([C, np.zeros((C.shape[0], 2))])
        self.p = self.size + 2  # (gamma, beta)
        pad = np.zeros((sample.n, 2))
        self._d = [
            np.hstack([self.B, sample.X]),
            np.hstack([self.Gc, pad]),
            np.hstack([self.Gm, pad]),
        ]
        self._forms = None

    def set_weights(self, weights):
        """Precompute the weighted cross products for a (n, 3, 3) field."""
        d = self._d
        self._weights = weights
        self._M = {
            (u, v): (d[u] * weights[:, u, v, None]).T @ d[v]
            for u in range(3)
            for v in range(u, 3)
        }
        self._n = [
            d[u].T @ np.einsum("nj,nj->n", weights[:, u, :], self.z) for u in range(3)
        ]
        self._zWz = float(np.einsum("ni,nij,nj->", self.z, weights, self.z))
        self.scale = self._zWz
        # kappa-independent ridge so both block updates minimize the same
        # (regularized) objective; covers the beta/linear-gamma overlap in
        # the wage channel
        self._ridge = 1e-10 * np.trace(self._M[(0, 0)]) / self.p

    def _assemble(self, kappa):
        s = (1.0, float(kappa[0]), float(kappa[1]))
        M = self._M
        H = s[0] * s[0] * M[(0, 0)]
        H = H + s[1] * s[1] * M[(1, 1)] + s[2] * s[2] * M[(2, 2)]
        H = H + s[0] * s[1] * (M[(0, 1)] + M[(0, 1)].T)
        H = H + s[0] * s[2] * (M[(0, 2)] + M[(0, 2)].T)
        H = H + s[1] * s[2] * (M[(1, 2)] + M[(1, 2)].T)
        g = -(s[0] * self._n[0] + s[1] * self._n[1] + s[2] * self._n[2])
        H = 0.5 * (H + H.T)
        H += self._ridge * np.eye(self.p)
        return H, g

    def objective(self, kappa, phi):
        H, g = self._assemble(kappa)
        return float(self._zWz + 2.0 * g @ phi + phi @ H @ phi)

    def solve_gamma_beta(self, kappa):
        """Constrained weighted LS over (gamma, beta) at fixed kappa."""
        H, g = self._assemble(kappa)
        if self.Cfull is None:
            phi = np.linalg.solve(H, -g)
            obj = float(self._zWz + 2.0 * g @ phi + phi @ H @ phi)
            return phi, None, obj
        phi, active = solve_qp(H, g, self.Cfull)
        obj = float(self._zWz + 2.0 * g @ phi + phi @ H @ phi)
        return phi, active, obj

    def profile(self, kappa):
        """Objective minimized over (gamma, beta) at this kappa."""
        return self.solve_gamma_beta(kappa)[2]

    def solve_kappa(self, phi, cap=None):
        """Weighted LS update of kappa at fixed (gamma, beta).

        Minimizes the convex quadratic in kappa exactly over the box
        [-cap, cap]^2 (unconstrained solve, falling back to the best
        clipped edge minimizer when the interior solution leaves the box).
        """
        if cap is None:
            cap = _KAPPA_CAP
        gam = phi[: self.size]
        beta = phi[self.size :]
        a = self.Gc @ gam
        m = self.Gm @ gam
        W = self._weights
        c0 = self.z[:, 0] - self.B @ gam - self.sample.X @ beta
        # residual = c - E kappa with E rows [[0,0],[a,0],[0,m]]
        A2 = np.array(
            [
                [np.sum(W[:, 1, 1] * a * a), np.sum(W[:, 1, 2] * a * m)],
                [np.sum(W[:, 2, 1] * m * a), np.sum(W[:, 2, 2] * m * m)],
            ]
        )
        b2 = np.array(
            [
                np.sum(a * (W[:, 1, 0] * c0 + W[:, 1, 1] * self.z[:, 1] + W[:, 1, 2] * self.z[:, 2])),
                np.sum(m * (W[:, 2, 0] * c0 + W[:, 2, 1] * self.z[:, 1] + W[:, 2, 2] * self.z[:, 2])),
            ]
        )
        try:
            kappa = np.linalg.solve(A2, b2)
        except np.linalg.LinAlgError:
            raise NumericalError("kappa update singular: sieve gradient is degenerate")
        if np.abs(kappa).max() <= cap:
            return kappa
        # Constrained minimizer lies on an edge of the box; the 1-d interior
        # minimizer along each edge (clipped) covers the corners too.
        candidates = []
        for i in (0, 1):
            j = 1 - i
            for s in (-cap, cap):
                kj = (b2[j] - A2[j, i] * s) / A2[j, j] if A2[j, j] > 0 else 0.0
                cand = np.empty(2)
                cand[i] = s
                cand[j] = min(max(kj, -cap), cap)
                candidates.append(cand)
        return min(candidates, key=lambda k: 0.5 * k @ A2 @ k - b2 @ k)


def _moment_kappa_guess(prob):
    """Scale-matched starting value for kappa from an unconstrained wage fit.

    The wage is fit on the sieve basis alone so the linear part lands in
    gamma, and the slopes use centered covariances: the model's constant
    gradient offset (from beta) then cancels exactly.
    """
    gam = np.linalg.lstsq(prob.B, prob.z[:, 0], rcond=None)[0]
    out = []
    for G, y in ((prob.Gc, prob.sample.Y[:, 0]), (prob.Gm, prob.sample.Y[:, 1])):
        g = G @ gam
        gc = g - g.mean()
        k = float(gc @ (y - y.mean()) / max(gc @ gc, 1e-12))
        out.append(k if abs(k) > 1e-3 else 1.0)
    return np.array(out)


def _block_descent(prob, kappa0, max_outer=_MAX_OUTER):
    """Alternate (gamma, beta) and kappa updates until the objective settles.

    Each pass exactly minimizes the same objective over one block, so the
    sequence is weakly decreasing; this is asserted every iteration.
    """
    kappa = np.clip(np.asarray(kappa0, dtype=float), -_KAPPA_CAP, _KAPPA_CAP)
    phi, active, obj = prob.solve_gamma_beta(kappa)
    scale = prob.scale
    for it in range(1, max_outer + 1):
        kappa = prob.solve_kappa(phi)
        phi, active, new_obj = prob.solve_gamma_beta(kappa)
        # tolerance band covers the QP dual solver's solution accuracy
        assert new_obj <= obj * (1 + 1e-6) + 1e-9 * scale, (
            f"objective increased: {obj} -> {new_obj}"
        )
        if abs(obj - new_obj) <= _OUTER_TOL * (1.0 + abs(obj)) + 1e-15 * scale:
            break
        obj = new_obj
    boundary = bool(np.abs(kappa).max() >= _KAPPA_CAP)
    return kappa, phi, new_obj, it, active, boundary


def _polish(prob, kappa, obj):
    """Refine kappa on the profiled objective (block descent is linear-rate)."""
    from scipy.optimize import minimize

    def boxed_profile(k):
        return prob.profile(np.clip(k, -_KAPPA_CAP, _KAPPA_CAP))

    res = minimize(
        boxed_profile,
        kappa,
        method="Nelder-Mead",
        options={
            "xatol": 1e-10,
            "fatol": 1e-13 * (1.0 + abs(obj)),
            "maxfev": 400,
        },
    )
    if res.fun <= obj:
        x = np.clip(np.asarray(res.x, dtype=float), -_KAPPA_CAP, _KAPPA_CAP)
        return x, res.fun, int(res.nfev)
    return kappa, obj, int(res.nfev)


def _minimize_weighted(prob, kappa_starts, max_outer=_MAX_OUTER, local=False):
    """Block descent from each start, then a profile polish of the best.

    With local=True the descent phase is skipped and only the profile polish
    runs from the (single) warm start; this keeps warm-started refits in the
    basin of their consistent initial estimate instead of chasing the
    weighted criterion's occasional degenerate boundary attractor.
    """
    if local:
        k0 = np.clip(np.asarray(kappa_starts[0], dtype=float), -_KAPPA_CAP, _KAPPA_CAP)
        kappa, obj, nfev = _polish(prob, k0, prob.profile(k0))
        phi, active, obj = prob.solve_gamma_beta(kappa)
        boundary = bool(np.abs(kappa).max() >= _KAPPA_CAP)
        return kappa, phi, obj, nfev, active, boundary
    best = None
    for k0 in kappa_starts:
        out = _block_descent(prob, k0, max_outer=max_outer)
        if best is None or out[2] < best[2]:
            best = out
    kappa, phi, obj, iters, active, boundary = best
    if not boundary:
        kappa, obj, nfev = _polish(prob, kappa, obj)
        phi, active, obj = prob.solve_gamma_beta(kappa)
        iters += nfev
        if np.abs(kappa).max() >= _KAPPA_CAP:
            boundary = True
    return kappa, phi, obj, iters, active, boundary


def _kappa_starts(prob, restarts=True):
    guess = _moment_kappa_guess(prob)
    if not restarts:
        return [guess]
    # scale multiples of the moment guess plus sign-robust fallbacks: the
    # guess can be attenuated toward zero or sign-flipped on noisy draws
    starts = [m * guess for m in (1.0, 0.25, 4.0)]
    starts.append(np.abs(guess))
    starts.append(np.ones(2))
    return starts


def _make_report(prob, method, kappa, phi, obj, iters, active, boundary, extra=None):
    gam = phi[: prob.size] + prob.w_mean
    theta = Theta(
        kappa_c=float(kappa[0]),
        kappa_m=float(kappa[1]),
        beta_c=float(phi[prob.size]),
        beta_m=float(phi[prob.size + 1]),
    )
    meta = {
        "iterations": iters,
        "active_constraints": [] if active is None else list(map(int, active)),
        "boundary_hit": bool(boundary),
        "convexity": prob.Cfull is not None,
    }
    if boundary:
        # kappa pinned at the cap means alpha is effectively zero; report the
        # reversed-regression alpha and flag standard errors as unreliable
        a = prob.Gc @ gam
        m = prob.Gm @ gam
        yc, ym = prob.sample.Y[:, 0], prob.sample.Y[:, 1]
        meta["alpha_reversed"] = [
            float(yc @ a / max(yc @ yc, 1e-12)),
            float(ym @ m / max(ym @ ym, 1e-12)),
        ]
        meta["se_status"] = "unavailable: kappa at boundary"
    if extra:
        meta.update(extra)
    return EstimateReport(
        theta=theta,
        gamma=prob.basis.with_gamma(gam),
        objective=float(obj),
        method=method,
        metadata=meta,
    )


def sls_fit(sample: MatchedSample, degrees=(4, 4), convexity: bool = True) -> EstimateReport:
    """Sieve least squares: minimize the unweighted sum of squared residuals."""
    prob = _FitProblem(sample, degrees, convexity)
    prob.set_weights(np.broadcast_to(np.eye(3), (sample.n, 3, 3)))
    kappa, phi, obj, iters, active, boundary = _minimize_weighted(prob, _kappa_starts(prob))
    return _make_report(prob, "sls", kappa, phi, obj, iters, active, boundary)


def estimate_sigma0(sample: MatchedSample, initial: EstimateReport, degrees=None) -> SigmaHat:
    """Series regression of the residual outer product on the sieve basis."""
    if degrees is None:
        basis = BernsteinTensor(
            initial.gamma.deg_c, initial.gamma.deg_m, initial.gamma.lo, initial.gamma.hi
        )
    else:
        lo, hi = domain_from_data(sample.X)
        basis = BernsteinTensor(degrees[0], degrees[1], lo, hi)
    r = residuals(sample, initial.theta, initial.gamma)
    targets = np.column_stack([r[:, i] * r[:, j] for (i, j) in SigmaHat._IJ])
    B = basis.design_matrix(sample.X)
    ridged = np.linalg.matrix_rank(B) < basis.size
    if ridged:
        BtB = B.T @ B + 1e-8 * np.eye(basis.size)
        coefs = np.linalg.solve(BtB, B.T @ targets).T
    else:
        coefs = np.linalg.lstsq(B, targets, rcond=None)[0].T
    scale = float(np.mean(targets[:, 0] + targets[:, 3] + targets[:, 5]) / 3.0)
    return SigmaHat(basis=basis, coefs=coefs, scale=scale, ridged=ridged)


def sgls_fit(
    sample: MatchedSample,
    degrees=(4, 4),
    convexity: bool = True,
    sigma: SigmaHat | None = None,
    sigma_degrees=(0, 0),
) -> EstimateReport:
    """Three-step sieve GLS: SLS, then Sigma_0 estimation, then weighted fit.

    The weighted step refines the SLS solution locally (single warm start).
    The nuisance covariance uses a constant (degree-zero) basis by default:
    raise sigma_degrees for genuinely heteroskedastic errors, but note that
    a high-degree Sigma_0 overfits at moderate n and the noisy weights
    destabilize the weighted criterion.
    """
    step1 = sls_fit(sample, degrees, convexity)
    if sigma is None:
        sigma = estimate_sigma0(sample, step1, degrees=sigma_degrees)
    prob = _FitProblem(sample, degrees, convexity)
    prob.set_weights(np.linalg.inv(sigma(sample.X)))
    kappa0 = np.array([step1.theta.kappa_c, step1.theta.kappa_m])
    kappa, phi, obj, iters, active, boundary = _minimize_weighted(prob, [kappa0], local=True)
    return _make_report(
        prob, "sgls", kappa, phi, obj, iters, active, boundary,
        extra={"sigma_ridged": sigma.ridged, "warm_start": "sls"},
    )


def sml_fit(sample: MatchedSample, degrees=(4, 4), convexity: bool = True) -> EstimateReport:
    """Sieve ML: maximize -(n/2) log det of the residual covariance.

    The Jacobian of the residual map with respect to (w, y_C, y_M) is the
    identity, so the concentrated Gaussian log-likelihood reduces to the
    log-determinant term. Iterated reweighting with W = Sigma^-1 decreases
    log det Sigma monotonically and converges to the SML solution.
    """
    prob = _FitProblem(sample, degrees, convexity)
    n = sample.n
    prob.set_weights(np.broadcast_to(np.eye(3), (n, 3, 3)))
    kappa, phi, _, iters0, active, boundary = _minimize_weighted(prob, _kappa_starts(prob))
    total_iters = iters0

    def resid(kappa, phi):
        gam, beta = phi[: prob.size], phi[prob.size :]
        fit = np.column_stack(
            [
                prob.B @ gam + sample.X @ beta,
                kappa[0] * (prob.Gc @ gam),
                kappa[1] * (prob.Gm @ gam),
            ]
        )
        return prob.z - fit

    def logdet_sigma(r):
        Sig = r.T @ r / n
        eps = 1e-12 * (1.0 + np.trace(Sig) / 3.0)
        Sig = Sig + eps * np.eye(3)
        sign, ld = np.linalg.slogdet(Sig)
        if sign <= 0:
            raise NumericalError("residual covariance not positive definite")
        return ld, Sig

    r = resid(kappa, phi)
    obj, Sig = logdet_sigma(r)
    for _ in range(_MAX_OUTER):
        if np.linalg.cond(Sig) > 1e12:
            rms = float(np.sqrt(np.mean(r**2)))
            if rms > 1e-8 * (1.0 + np.abs(prob.z).max()):
                raise NumericalError(
                    "residual covariance is singular but the fit is not exact; "
                    "the residual channels are collinear, try a lower sieve degree"
                )
        prob.set_weights(np.broadcast_to(np.linalg.inv(Sig), (n, 3, 3)))
        kappa, phi, _, iters, active, bflag = _minimize_weighted(prob, [kappa], local=True)
        boundary = boundary or bflag
        total_iters += iters
        r = resid(kappa, phi)
        new_obj, Sig = logdet_sigma(r)
        # increases below the inner solver's accuracy mean convergence
        assert new_obj <= obj + 1e-4 * (1.0 + abs(obj)), (
            f"log det increased: {obj} -> {new_obj}"
        )
        if new_obj >= obj - _OUTER_TOL * (1.0 + abs(obj)):
            obj = min(obj, new_obj)
            break
        obj = new_obj
    else:
        raise NumericalError("SML reweighting did not converge")
    loglik = -0.5 * n * obj
    return _make_report(
        prob, "sml", kappa, phi, obj, total_iters, active, boundary,
        extra={"loglik": float(loglik)},
    )


def variance_theta(report: EstimateReport, sample: MatchedSample, sigma: SigmaHat) -> EstimateReport:
    """Sandwich variance for theta, treating (theta, gamma) as one sieve block.

    V1 = mean of Dtilde' W Dtilde, V2 = mean of Dtilde' W Sigma_0 W Dtilde,
    vcov(phi) = V1^-1 V2 V1^-1 / n; the theta block is extracted and alpha
    standard errors follow from the delta method se(alpha) = se(kappa)/kappa^2.
    Returns a copy of the report with vcov and standard errors filled in.
    """
    if report.metadata.get("boundary_hit"):
        out = _copy_report(report)
        out.metadata["se_status"] = "unavailable: kappa at boundary"
        return out
    basis = report.gamma
    gam = basis.gamma
    th = report.theta
    n = sample.n
    size = gam.size
    B = basis.design_matrix(sample.X)
    Gc, Gm = basis.gradient_matrices(sample.X)
    p = 4 + size
    # phi ordering: (kappa_C, kappa_M, beta_C, beta_M, gamma)
    D = np.zeros((n, 3, p))
    D[:, 0, 2:4] = sample.X
    D[:, 0, 4:] = B
    D[:, 1, 0] = Gc @ gam
    D[:, 1, 4:] = th.kappa_c * Gc
    D[:, 2, 1] = Gm @ gam
    D[:, 2, 4:] = th.kappa_m * Gm
    Sig = sigma(sample.X)
    if report.method == "sls":
        W = np.broadcast_to(np.eye(3), (n, 3, 3))
    elif report.method == "sml":
        r = residuals(sample, th, basis)
        W = np.broadcast_to(np.linalg.inv(r.T @ r / n), (n, 3, 3))
    else:
        W = np.linalg.inv(Sig)
    V1 = np.einsum("nia,nij,njb->ab", D, W, D, optimize=True) / n
    WSW = np.einsum("nij,njk,nkl->nil", W, Sig, W, optimize=True)
    V2 = np.einsum("nia,nij,njb->ab", D, WSW, D, optimize=True) / n
    lam_min = float(np.linalg.eigvalsh(V1).min())
    if lam_min < 1e-12 * max(1.0, np.abs(V1).max()):
        raise NumericalError(
            f"bread matrix singular: smallest eigenvalue {lam_min:.3e}"
        )
    V1inv = np.linalg.solve(V1, np.eye(p))
    vcov_phi = V1inv @ V2 @ V1inv / n
    vk = vcov_phi[:4, :4]
    vk = 0.5 * (vk + vk.T)
    se_kc, se_km, se_bc, se_bm = np.sqrt(np.maximum(np.diag(vk), 0.0))
    out = _copy_report(report)
    out.vcov = vk
    out.se_alpha_cc = float(se_kc / th.kappa_c**2)
    out.se_alpha_mm = float(se_km / th.kappa_m**2)
    out.se_beta_c = float(se_bc)
    out.se_beta_m = float(se_bm)
    out.metadata["bread_min_eigenvalue"] = lam_min
    return out


def _copy_report(report: EstimateReport) -> EstimateReport:
    return EstimateReport(
        theta=report.theta,
        gamma=report.gamma,
        objective=report.objective,
        method=report.method,
        vcov=report.vcov,
        se_alpha_cc=report.se_alpha_cc,
        se_alpha_mm=report.se_alpha_mm,
        se_beta_c=report.se_beta_c,
        se_beta_m=report.se_beta_m,
        metadata=dict(report.metadata),
    )


def bic_score(report: EstimateReport, sample: MatchedSample) -> float:
    """BIC-style score for sieve degree selection (lower is better)."""
    n = sample.n
    r = residuals(sample, report.theta, report.gamma)
    Sig = r.T @ r / n + 1e-12 * np.eye(3)
    sign, ld = np.linalg.slogdet(Sig)
    k = report.gamma.gamma.size + 4
    return float(n * ld + k * np.log(n))
