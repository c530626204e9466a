"""LQ model, coefficient synthesis and field evaluation."""

from .fields import (
    EmpiricalMeasure,
    FieldCheckReport,
    benchmark_value,
    check_fields,
    eval_delta_mu_V,
    eval_M,
    eval_phi,
    eval_Phi,
    eval_U,
    eval_Ubar,
    eval_V,
    eval_V_x,
    mean_gradient_delta_mu_V,
    representation_value,
)
from .model import (
    InitialDistribution,
    LqModel,
    ValidationReport,
    sample_initial_states,
    validate,
)
from .synthesis import (
    CoefficientSet,
    MCoefficients,
    ResidualReport,
    UCoefficients,
    VCoefficients,
    assemble_U,
    check_identities,
    m_rhs,
    solve_all,
    solve_M,
    solve_V,
    solve_V_coupled,
    solve_Z,
    v_rhs,
)

__all__ = [
    "LqModel",
    "InitialDistribution",
    "ValidationReport",
    "validate",
    "sample_initial_states",
    "CoefficientSet",
    "VCoefficients",
    "MCoefficients",
    "UCoefficients",
    "ResidualReport",
    "solve_Z",
    "solve_V",
    "solve_V_coupled",
    "solve_M",
    "solve_all",
    "assemble_U",
    "check_identities",
    "v_rhs",
    "m_rhs",
    "EmpiricalMeasure",
    "FieldCheckReport",
    "eval_V",
    "eval_V_x",
    "eval_phi",
    "eval_Phi",
    "eval_Ubar",
    "eval_delta_mu_V",
    "eval_M",
    "eval_U",
    "mean_gradient_delta_mu_V",
    "representation_value",
    "benchmark_value",
    "check_fields",
]
