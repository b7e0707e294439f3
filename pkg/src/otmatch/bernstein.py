"""Tensor-product Bernstein sieve on a rectangular domain.

The wage function is approximated by w(x) = sum_{j,k} gamma_{jk}
B_{j,kC}(u_C) B_{k,kM}(u_M) where u = (x - lo) / (hi - lo) maps the domain
onto the unit square. Coefficients are stored row-major with the cognitive
index outermost, so gamma has length (k_C + 1) * (k_M + 1).
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import binom

from .errors import DimensionError, DomainError

_CLAMP_TOL = 1e-12


def _bern_rows(u, k):
    """Bernstein basis values: rows over points, columns j = 0..k."""
    u = np.asarray(u, dtype=float)[:, None]
    j = np.arange(k + 1)[None, :]
    # 0**0 = 1 conventions hold under np.power with float bases
    return binom(k, j) * np.power(u, j) * np.power(1.0 - u, k - j)


def _bern_grad_rows(u, k):
    """Derivative of the degree-k basis with respect to u."""
    n = len(u)
    if k == 0:
        return np.zeros((n, 1))
    lower = _bern_rows(u, k - 1)
    out = np.zeros((n, k + 1))
    out[:, :k] -= k * lower
    out[:, 1:] += k * lower
    return out


@dataclass(frozen=True)
class BernsteinTensor:
    """Tensor-product Bernstein basis of degrees (deg_c, deg_m) on a box."""

    deg_c: int
    deg_m: int
    lo: np.ndarray
    hi: np.ndarray
    gamma: np.ndarray | None = None

    def __post_init__(self):
        if self.deg_c < 0 or self.deg_m < 0:
            raise ValueError("degrees must be nonnegative")
        lo = np.asarray(self.lo, dtype=float).reshape(2)
        hi = np.asarray(self.hi, dtype=float).reshape(2)
        if not np.all(hi > lo):
            raise ValueError(f"degenerate domain: lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if self.gamma is not None:
            g = np.asarray(self.gamma, dtype=float).ravel()
            if g.shape != (self.size,):
                raise DimensionError(f"gamma has length {g.size}, basis needs {self.size}")
            if not np.all(np.isfinite(g)):
                raise ValueError("gamma must be finite")
            object.__setattr__(self, "gamma", g)

    def with_gamma(self, gamma):
        """Copy of this basis carrying a coefficient vector."""
        return BernsteinTensor(self.deg_c, self.deg_m, self.lo, self.hi, gamma)

    @property
    def size(self) -> int:
        return (self.deg_c + 1) * (self.deg_m + 1)

    def _rescale(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != 2:
            raise DimensionError(f"expected 2 columns, got shape {X.shape}")
        U = (X - self.lo) / (self.hi - self.lo)
        out = np.clip(U, 0.0, 1.0)
        if np.any(U < -_CLAMP_TOL) or np.any(U > 1.0 + _CLAMP_TOL):
            bad = np.nonzero((U < -_CLAMP_TOL) | (U > 1.0 + _CLAMP_TOL))[0][0]
            raise DomainError(
                f"point {X[bad]} lies outside the sieve domain "
                f"[{self.lo}, {self.hi}]"
            )
        return out

    def design_matrix(self, X) -> np.ndarray:
        """Basis values at each row of X; shape (n, size)."""
        U = self._rescale(X)
        bc = _bern_rows(U[:, 0], self.deg_c)
        bm = _bern_rows(U[:, 1], self.deg_m)
        return (bc[:, :, None] * bm[:, None, :]).reshape(len(U), self.size)

    def gradient_matrices(self, X):
        """Per-axis derivative design matrices (G_c, G_m), each (n, size).

        Chain rule for the affine rescaling gives a 1 / (hi - lo) factor.
        """
        U = self._rescale(X)
        bc = _bern_rows(U[:, 0], self.deg_c)
        bm = _bern_rows(U[:, 1], self.deg_m)
        dc = _bern_grad_rows(U[:, 0], self.deg_c) / (self.hi[0] - self.lo[0])
        dm = _bern_grad_rows(U[:, 1], self.deg_m) / (self.hi[1] - self.lo[1])
        n = len(U)
        Gc = (dc[:, :, None] * bm[:, None, :]).reshape(n, self.size)
        Gm = (bc[:, :, None] * dm[:, None, :]).reshape(n, self.size)
        return Gc, Gm

    def basis_row(self, x) -> np.ndarray:
        """Basis values at a single point."""
        return self.design_matrix(np.asarray(x, dtype=float).reshape(1, 2))[0]

    def basis_grad_rows(self, x):
        """Gradient rows at a single point: (g_c, g_m)."""
        Gc, Gm = self.gradient_matrices(np.asarray(x, dtype=float).reshape(1, 2))
        return Gc[0], Gm[0]

    def evaluate(self, gamma, X=None) -> np.ndarray:
        if X is None:
            gamma, X = self.gamma, gamma
        gamma = self._check_gamma(gamma)
        return self.design_matrix(X) @ gamma

    def gradient(self, gamma, X=None) -> np.ndarray:
        """Gradient of the fitted function at each row of X; shape (n, 2)."""
        if X is None:
            gamma, X = self.gamma, gamma
        gamma = self._check_gamma(gamma)
        Gc, Gm = self.gradient_matrices(X)
        return np.column_stack([Gc @ gamma, Gm @ gamma])

    def _check_gamma(self, gamma):
        if gamma is None:
            raise ValueError("no gamma supplied and none stored on the basis")
        gamma = np.asarray(gamma, dtype=float).ravel()
        if gamma.shape != (self.size,):
            raise DimensionError(
                f"gamma has length {gamma.size}, basis needs {self.size}"
            )
        return gamma

    def convexity_constraints(self) -> np.ndarray:
        """Second-difference rows C with C @ gamma >= 0 enforcing convexity.

        Second differences of the coefficient net along each axis; there are
        (deg_c - 1) * (deg_m + 1) + (deg_c + 1) * (deg_m - 1) rows.
        """
        nc, nm = self.deg_c + 1, self.deg_m + 1
        rows = []
        idx = np.arange(self.size).reshape(nc, nm)
        for jc in range(nc - 2):
            for jm in range(nm):
                r = np.zeros(self.size)
                r[idx[jc + 2, jm]] = 1.0
                r[idx[jc + 1, jm]] = -2.0
                r[idx[jc, jm]] = 1.0
                rows.append(r)
        for jc in range(nc):
            for jm in range(nm - 2):
                r = np.zeros(self.size)
                r[idx[jc, jm + 2]] = 1.0
                r[idx[jc, jm + 1]] = -2.0
                r[idx[jc, jm]] = 1.0
                rows.append(r)
        if not rows:
            return np.zeros((0, self.size))
        return np.array(rows)

    def elevate(self, gamma, deg_c: int, deg_m: int):
        """Re-express gamma exactly in a basis of higher degrees."""
        if deg_c < self.deg_c or deg_m < self.deg_m:
            raise ValueError("degree elevation cannot lower a degree")
        gamma = self._check_gamma(gamma)
        G = gamma.reshape(self.deg_c + 1, self.deg_m + 1)
        G = _elevate_axis(G, self.deg_c, deg_c)
        G = _elevate_axis(G.T, self.deg_m, deg_m).T
        basis = BernsteinTensor(deg_c, deg_m, self.lo, self.hi)
        return basis, G.ravel()


def _elevate_axis(G, k, k_new):
    """Elevate the leading axis of a coefficient grid from degree k to k_new."""
    for kk in range(k, k_new):
        j = np.arange(kk + 2)[:, None]
        padded_lo = np.vstack([np.zeros((1,) + G.shape[1:]), G])
        padded_hi = np.vstack([G, np.zeros((1,) + G.shape[1:])])
        G = (j / (kk + 1)) * padded_lo + (1.0 - j / (kk + 1)) * padded_hi
    return G


def domain_from_data(X, margin: float = 0.01) -> tuple[np.ndarray, np.ndarray]:
    """Data bounding box widened by a relative margin on each side."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    span = hi - lo
    span = np.where(span > 0, span, 1.0)
    return lo - margin * span, hi + margin * span


def write_gamma_csv(path, basis: BernsteinTensor, gamma) -> None:
    """Persist a coefficient vector with enough header metadata to reload it."""
    gamma = basis._check_gamma(gamma)
    with open(path, "w") as fh:
        fh.write(f"# deg_c,{basis.deg_c},deg_m,{basis.deg_m}\n")
        fh.write(f"# lo,{float(basis.lo[0])!r},{float(basis.lo[1])!r}\n")
        fh.write(f"# hi,{float(basis.hi[0])!r},{float(basis.hi[1])!r}\n")
        fh.write("j_c,j_m,gamma\n")
        nm = basis.deg_m + 1
        for i, g in enumerate(gamma):
            fh.write(f"{i // nm},{i % nm},{float(g)!r}\n")


def read_gamma_csv(path):
    """Inverse of write_gamma_csv; returns (basis, gamma)."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    try:
        head = lines[0].lstrip("# ").split(",")
        deg_c, deg_m = int(head[1]), int(head[3])
        lo = [float(t) for t in lines[1].lstrip("# ").split(",")[1:3]]
        hi = [float(t) for t in lines[2].lstrip("# ").split(",")[1:3]]
        basis = BernsteinTensor(deg_c, deg_m, lo, hi)
        gamma = np.empty(basis.size)
        for ln in lines[4:]:
            jc, jm, g = ln.split(",")
            gamma[int(jc) * (deg_m + 1) + int(jm)] = float(g)
    except (ValueError, IndexError) as exc:
        raise ValueError(f"malformed gamma csv {path}: {exc}") from exc
    return basis, gamma
