"""Pre-estimation transforms and post-estimation diagnostics.

Rank-based Gaussianization of margins, Mardia's multivariate normality test,
percentile curves of relative log-wage growth, and counterfactual
decompositions that re-solve the matching equilibrium under hybrid
technologies.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2, norm, rankdata

from .errors import DataError, DimensionError, NumericalError
from .io import atomic_write
from .ot import ProductionTech, build_surplus_matrix, solve_assignment


def gaussian_rank_transform(column) -> np.ndarray:
    """Map a column through Phi^{-1}(rank / (n + 1)), averaging tied ranks."""
    x = np.asarray(column, dtype=float).ravel()
    if x.size < 2:
        raise DataError("rank transform needs at least 2 observations")
    if not np.all(np.isfinite(x)):
        raise DataError("rank transform input contains non-finite values")
    if x.max() == x.min():
        raise DataError("rank transform undefined for a constant column")
    return norm.ppf(rankdata(x, method="average") / (x.size + 1))


@dataclass(frozen=True)
class MardiaResult:
    """Mardia's multivariate skewness/kurtosis statistics and p-values."""

    b1: float
    b2: float
    skew_stat: float
    kurt_stat: float
    skew_pvalue: float
    kurt_pvalue: float
    n: int
    d: int

    def to_csv(self, path) -> None:
        with atomic_write(path) as fh:
            fh.write("statistic,value,pvalue\n")
            fh.write(f"skewness,{self.skew_stat!r},{self.skew_pvalue:.4f}\n")
            fh.write(f"kurtosis,{self.kurt_stat!r},{self.kurt_pvalue:.4f}\n")


def mardia_test(data) -> MardiaResult:
    """Mardia's test from the Mahalanobis cross-product matrix C.

    Uses the 1/n covariance of the demeaned data. The skewness statistic
    n b1 / 6 is chi-squared with d(d+1)(d+2)/6 degrees of freedom; the
    kurtosis statistic sqrt(n) (b2 - d(d+2)) / sqrt(8 d (d+2)) is standard
    normal, tested two-sided.
    """
    Z = np.atleast_2d(np.asarray(data, dtype=float))
    n, d = Z.shape
    if n <= d:
        raise DataError(f"need more rows than columns, got shape {Z.shape}")
    Zc = Z - Z.mean(axis=0)
    S = Zc.T @ Zc / n
    if np.linalg.cond(S) > 1e12:
        raise NumericalError("sample covariance is singular or near-singular")
    Sinv = np.linalg.inv(S)
    C = Zc @ Sinv @ Zc.T
    b1 = float(np.mean(C**3))
    b2 = float(np.mean(np.diag(C) ** 2))
    skew_stat = n * b1 / 6.0
    df = d * (d + 1) * (d + 2) / 6.0
    kurt_stat = np.sqrt(n) * (b2 - d * (d + 2)) / np.sqrt(8.0 * d * (d + 2))
    return MardiaResult(
        b1=b1,
        b2=b2,
        skew_stat=float(skew_stat),
        kurt_stat=float(kurt_stat),
        skew_pvalue=float(chi2.sf(skew_stat, df)),
        kurt_pvalue=float(2.0 * norm.sf(abs(kurt_stat))),
        n=n,
        d=d,
    )


@dataclass(frozen=True)
class PolarizationCurve:
    """Relative log-wage growth by percentile, net of the median's growth."""

    percentiles: np.ndarray
    values: np.ndarray

    def to_csv(self, path) -> None:
        with atomic_write(path) as fh:
            fh.write("percentile,relative_growth\n")
            for p, v in zip(self.percentiles, self.values):
                fh.write(f"{int(p)},{float(v)!r}\n")


def polarization_curve(wages_t0, wages_t1, log: bool = True) -> PolarizationCurve:
    """Quantile-by-quantile wage growth relative to the median's growth.

    curve(p) = [q_p(t1) - q_p(t0)] - [q_50(t1) - q_50(t0)], computed on log
    wages by default (requires positive wages) or on levels with log=False.
    Quantiles use the linear-interpolation convention.
    """
    w0 = np.asarray(wages_t0, dtype=float).ravel()
    w1 = np.asarray(wages_t1, dtype=float).ravel()
    if w0.size < 2 or w1.size < 2:
        raise DataError("need at least 2 wages in each period")
    if log:
        if w0.min() <= 0 or w1.min() <= 0:
            raise DataError("log mode requires strictly positive wages")
        w0, w1 = np.log(w0), np.log(w1)
    pct = np.arange(1, 100)
    q0 = np.percentile(w0, pct)
    q1 = np.percentile(w1, pct)
    growth = q1 - q0
    return PolarizationCurve(percentiles=pct, values=growth - growth[49])


_MODES = ("TaskBiasedOnly", "SkillBiasedOnly", "DistributionOnly")


def _tech_from_report(report) -> ProductionTech:
    t = report.theta
    return ProductionTech.diagonal(t.alpha_cc, t.alpha_mm, t.beta_c, t.beta_m)


def _equilibrium_wages(X, Y, tech, mean_wage) -> np.ndarray:
    surplus = build_surplus_matrix(X, Y, tech)
    coupling = solve_assignment(surplus)
    w = coupling.worker_dual
    return w - w.mean() + mean_wage


def decompose_counterfactual(
    report_t0, report_t1, sample_t0, sample_t1, mode: str
) -> PolarizationCurve:
    """Counterfactual polarization curve holding part of the change at t0.

    TaskBiasedOnly holds the linear coefficients beta at their t0 values (so
    only complementarities change); SkillBiasedOnly holds the alphas at t0;
    DistributionOnly holds both, so only the skill distributions change. The
    counterfactual equilibrium is re-solved on sample_t1's clouds and
    compared against the t0 model baseline, in level differences with each
    side's mean wage pinned to its sample mean.
    """
    if mode not in _MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {_MODES}")
    if sample_t0.X.shape[1] != 2 or sample_t1.X.shape[1] != 2:
        raise DimensionError("samples must have two skill columns")
    t0, t1 = report_t0.theta, report_t1.theta
    if mode == "TaskBiasedOnly":
        tech_cf = ProductionTech.diagonal(t1.alpha_cc, t1.alpha_mm, t0.beta_c, t0.beta_m)
    elif mode == "SkillBiasedOnly":
        tech_cf = ProductionTech.diagonal(t0.alpha_cc, t0.alpha_mm, t1.beta_c, t1.beta_m)
    else:
        tech_cf = _tech_from_report(report_t0)
    w_base = _equilibrium_wages(
        sample_t0.X, sample_t0.Y, _tech_from_report(report_t0), float(np.mean(sample_t0.w))
    )
    w_cf = _equilibrium_wages(
        sample_t1.X, sample_t1.Y, tech_cf, float(np.mean(sample_t1.w))
    )
    return polarization_curve(w_base, w_cf, log=False)


def summary_stats(sample) -> dict:
    """Per-column moments and the two within-side correlations."""
    cols = {
        "wage": sample.w,
        "x_C": sample.X[:, 0],
        "x_M": sample.X[:, 1],
        "y_C": sample.Y[:, 0],
        "y_M": sample.Y[:, 1],
    }
    table = {
        name: {
            "mean": float(np.mean(v)),
            "sd": float(np.std(v)),
            "min": float(np.min(v)),
            "max": float(np.max(v)),
        }
        for name, v in cols.items()
    }
    table["rho_x"] = float(np.corrcoef(sample.X.T)[0, 1])
    table["rho_y"] = float(np.corrcoef(sample.Y.T)[0, 1])
    return table
