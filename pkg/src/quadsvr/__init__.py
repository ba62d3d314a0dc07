"""Quantile-quadrangle view of support vector regression.

Modules
-------
distribution
    Empirical distributions, quantile intervals, CVaR and related functionals.
quadrangle
    CVaR-norm and Vapnik (quantile symmetric average) quadrangles.
qp
    Interior-point solver for convex quadratic programs.
svr
    Four SVR formulations, intercept recovery and the eps/alpha link.
drr
    Distributionally robust regression and noise-based alpha selection.
casestudy, cli
    Simulated case study and the ``quadsvr`` command.
"""
from .distribution import (
    AlphaInterval,
    EmpiricalSample,
    QuantileInterval,
    cdf_pair,
    cvar,
    cvar_norm,
    cvar_via_min,
    dual_cvar_max,
    mean_excess,
    quantile_interval,
    vapnik_error,
)
from .qp import ConvexQp, QpSettings, QpSolution, QpStatus, kkt_residual, solve_qp
from .quadrangle import (
    QuadrangleQuartet,
    alpha_set,
    check_quadrangle_identities,
    cvar_norm_quadrangle,
    qsa_quadrangle,
    statistic_avg_quantiles,
)
from .svr import (
    Dataset,
    Formulation,
    KernelSpec,
    SvrConfig,
    SvrModel,
    alpha_from_eps,
    eps_from_alpha,
    predict,
    train,
)

__version__ = "0.1.0"
