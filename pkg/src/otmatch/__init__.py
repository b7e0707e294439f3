"""Multidimensional worker-job matching via exact optimal transport.

Exact assignment solving with dual wage recovery, Bernstein-sieve
estimation of production technology under measurement error, simulation
designs with a Monte Carlo harness, and wage-inequality diagnostics.
"""

__version__ = "0.1.0"

from .assignment import BACKEND, available_backends
from .bernstein import BernsteinTensor, domain_from_data, read_gamma_csv, write_gamma_csv
from .dgp import (
    DgpConfig,
    EquilibriumDraw,
    McResult,
    add_errors,
    draw_sample,
    gumbel_copula_sample,
    preset,
    run_monte_carlo,
    simulate,
    technology_sweep,
)
from .diagnostics import (
    MardiaResult,
    PolarizationCurve,
    decompose_counterfactual,
    gaussian_rank_transform,
    mardia_test,
    polarization_curve,
    summary_stats,
)
from .errors import (
    DataError,
    DimensionError,
    DomainError,
    NumericalError,
    OtmatchError,
)
from .estimators import (
    EstimateReport,
    MatchedSample,
    SigmaHat,
    Theta,
    bic_score,
    estimate_sigma0,
    report_from_json,
    residuals,
    sgls_fit,
    sls_fit,
    sml_fit,
    variance_theta,
)
from .gaussian import (
    GaussianEquilibrium,
    MLFit,
    closed_form_J,
    closed_form_wage,
    draw_gaussian_equilibrium,
    ml_fit,
)
from .io import parse_matched_csv, write_matched_csv
from .ot import (
    Coupling,
    ProductionTech,
    SurplusMatrix,
    assignment_map,
    build_surplus_matrix,
    check_coupling,
    normalize_duals,
    solve_assignment,
    wages_from_dual,
)
from .qp import solve_qp
