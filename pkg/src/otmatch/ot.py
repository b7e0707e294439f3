"""Bilinear surplus matrices and exact assignment solving with dual wages.

The surplus of a worker-job pair is s(x, y) = x'Ay + x'b. Solving the square
assignment problem over sampled clouds gives the equilibrium coupling; its
dual prices are the equilibrium wages (worker side) and profits (firm side).
"""

from dataclasses import dataclass, field

import numpy as np

from .assignment import solve_lap
from .errors import DimensionError, NumericalError

_DET_TOL = 1e-12


@dataclass(frozen=True)
class ProductionTech:
    """Bilinear production technology: surplus s(x, y) = x'Ay + x'b."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got shape {A.shape}")
        if b.shape != (A.shape[0],):
            raise DimensionError(f"b has shape {b.shape}, expected ({A.shape[0]},)")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("technology entries must be finite")
        if abs(np.linalg.det(A)) < _DET_TOL:
            raise ValueError("A is singular (|det| < 1e-12)")
        object.__setattr__(self, "A", A.copy())
        object.__setattr__(self, "b", b.copy())
        self.A.setflags(write=False)
        self.b.setflags(write=False)

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return bool(np.allclose(self.A, np.diag(np.diag(self.A)), atol=0.0))

    @classmethod
    def diagonal(cls, alpha_cc, alpha_mm, beta_c=0.0, beta_m=0.0):
        """Two-dimensional technology with no between-task complementarities."""
        return cls(np.diag([float(alpha_cc), float(alpha_mm)]), [float(beta_c), float(beta_m)])

    @property
    def alpha_cc(self) -> float:
        return float(self.A[0, 0])

    @property
    def alpha_mm(self) -> float:
        return float(self.A[1, 1])

    @property
    def delta(self) -> float:
        """Relative complementarity across tasks, alpha_MM / alpha_CC."""
        return self.alpha_mm / self.alpha_cc


@dataclass(frozen=True)
class SurplusMatrix:
    """Pairwise surplus: S[i, j] = s(x_i, y_j) in wage units."""

    S: np.ndarray

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        if not np.all(np.isfinite(S)):
            raise ValueError("surplus matrix contains non-finite entries")
        object.__setattr__(self, "S", S)

    @property
    def n(self) -> int:
        return self.S.shape[0]

    @property
    def m(self) -> int:
        return self.S.shape[1]


@dataclass(frozen=True)
class Coupling:
    """Optimal permutation coupling with worker/firm dual prices.

    permutation[i] is the job matched to worker i. Duals satisfy stability
    (worker_dual[i] + firm_dual[j] >= S[i, j], equality on matched pairs)
    and strong duality (sums equal total_surplus).
    """

    permutation: np.ndarray
    worker_dual: np.ndarray
    firm_dual: np.ndarray
    total_surplus: float

    @property
    def n(self) -> int:
        return self.permutation.shape[0]

    def plan(self) -> np.ndarray:
        """Dense doubly-stochastic (here: permutation) plan matrix."""
        P = np.zeros((self.n, self.n))
        P[np.arange(self.n), self.permutation] = 1.0
        return P

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("worker_index,job_index,wage_dual,profit_dual\n")
            for i in range(self.n):
                j = int(self.permutation[i])
                fh.write(f"{i},{j},{float(self.worker_dual[i])!r},{float(self.firm_dual[j])!r}\n")


def build_surplus_matrix(X, Y, tech: ProductionTech) -> SurplusMatrix:
    """Evaluate s(x_i, y_j) = x_i'Ay_j + x_i'b over all pairs."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != tech.d:
        raise DimensionError(f"X has shape {X.shape}, expected {tech.d} columns")
    if Y.shape[1] != tech.d:
        raise DimensionError(f"Y has shape {Y.shape}, expected {tech.d} columns")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("skill arrays must be finite")
    S = X @ tech.A @ Y.T + (X @ tech.b)[:, None]
    return SurplusMatrix(S)


def solve_assignment(surplus, centered_duals: bool = True) -> Coupling:
    """Solve the surplus-maximizing assignment exactly and recover duals.

    With centered_duals (default) the duals are the average of the two
    extreme optimal dual solutions (worker-favorable and firm-favorable),
    which tracks the continuum wage function more closely. Deterministic
    given the input.
    """
    S = surplus.S if isinstance(surplus, SurplusMatrix) else np.asarray(surplus, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionError(f"assignment needs a square surplus matrix, got {S.shape}")
    if np.any(np.isnan(S)):
        raise ValueError("surplus matrix contains NaN")

    # Shift for conditioning; the optimal plan is invariant to constant shifts.
    shift = float(S.min())
    cost = shift - S  # minimize negated surplus

    perm, u, v = solve_lap(cost)
    wages = shift - u
    profits = -v
    if centered_duals:
        # Transposed solve gives the opposite extreme of the dual polytope.
        _, ut, vt = solve_lap(np.ascontiguousarray(cost.T))
        wages = 0.5 * (wages + (shift - vt))
        profits = 0.5 * (profits + (-ut))

    total = float(S[np.arange(S.shape[0]), perm].sum())
    return Coupling(
        permutation=perm.astype(np.intp),
        worker_dual=wages,
        firm_dual=profits,
        total_surplus=total,
    )


def wages_from_dual(coupling: Coupling, normalization: str = "zero_mean", anchor_index: int | None = None) -> np.ndarray:
    """Worker dual shifted to satisfy a location normalization exactly.

    normalization: "zero_mean" or "anchor" (worker anchor_index gets wage 0).
    The compensating shift goes to the firm side, so use normalize_duals to
    get a Coupling with both sides adjusted.
    """
    return normalize_duals(coupling, normalization, anchor_index).worker_dual


def normalize_duals(coupling: Coupling, normalization: str = "zero_mean", anchor_index: int | None = None) -> Coupling:
    """Shift worker/firm duals by opposite constants to fix the wage location."""
    w = coupling.worker_dual
    if normalization == "zero_mean":
        shift = -float(np.mean(w))
    elif normalization == "anchor":
        if anchor_index is None:
            raise ValueError("anchor normalization needs anchor_index")
        if not 0 <= anchor_index < coupling.n:
            raise IndexError(f"anchor_index {anchor_index} out of range for n={coupling.n}")
        shift = -float(w[anchor_index])
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    return Coupling(
        permutation=coupling.permutation,
        worker_dual=w + shift,
        firm_dual=coupling.firm_dual - shift,
        total_surplus=coupling.total_surplus,
    )


def assignment_map(coupling: Coupling, partners) -> np.ndarray:
    """Matched-partner characteristics: row i is the match of worker i."""
    partners = np.atleast_2d(np.asarray(partners, dtype=float))
    if partners.shape[0] != coupling.n:
        raise DimensionError(
            f"partner array has {partners.shape[0]} rows, coupling has n={coupling.n}"
        )
    return partners[coupling.permutation]


def check_coupling(coupling: Coupling, surplus, tol: float = 1e-8) -> None:
    """Raise NumericalError if stability or strong duality fails beyond tol."""
    S = surplus.S if isinstance(surplus, SurplusMatrix) else np.asarray(surplus, dtype=float)
    n = coupling.n
    w, v = coupling.worker_dual, coupling.firm_dual
    scale = 1.0 + float(np.abs(S).max())
    slack = w[:, None] + v[None, :] - S
    if slack.min() < -tol * scale:
        raise NumericalError(f"stability violated: min slack {slack.min():.3e}")
    matched = slack[np.arange(n), coupling.permutation]
    if np.abs(matched).max() > tol * scale:
        raise NumericalError(f"matched-pair slack {np.abs(matched).max():.3e} exceeds tol")
    gap = abs(w.sum() + v.sum() - coupling.total_surplus)
    if gap > tol * (1.0 + abs(coupling.total_surplus)):
        raise NumericalError(f"strong duality gap {gap:.3e} exceeds tol")
