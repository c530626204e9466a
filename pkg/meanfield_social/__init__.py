"""
Meanfield Social

Cooperative control of large populations with linear-quadratic mean-field
interaction: coefficient ODE solvers, master-field evaluation, an N-agent
particle simulator with common noise and person-by-person optimality
experiments.

Quick Start:
-----------
    import numpy as np
    from meanfield_social import (
        EmpiricalMeasure, LqModel, TimeGrid, eval_V, eval_phi, solve_all,
    )

    model = LqModel.from_dict(config["model"])
    v, m, u = solve_all(model, TimeGrid(T=model.T, steps=2000))

    mu = EmpiricalMeasure(np.random.default_rng(0).normal(size=(9, model.n)))
    x = np.zeros(model.n)
    value = eval_V(v, 0.0, x, mu)
    control = eval_phi(v, model, 0.0, x, mu)

Simulation:
----------
    from meanfield_social import Deviation, InitialDistribution, LqProblem, SimConfig, simulate

    cfg = SimConfig(N=16, paths=256, dt_sim=0.01, seed=7,
                    initial=InitialDistribution.gaussian(np.zeros(2), np.eye(2)))
    baseline = simulate(LqProblem(model, v), cfg)
    deviated = simulate(LqProblem(model, v), cfg, Deviation.zero_control())

Command line:
------------
    meanfield-social check fixtures/lq_2d.json
    meanfield-social systemic-risk fixtures/systemic_risk.json --convergence
"""

from .__version__ import __author__, __email__, __license__, __version__

# Core functionality
from .core import (
    BlowUpError,
    ConfigError,
    InsufficientSignalError,
    MeanFieldError,
    ModelValidationError,
    NumericalError,
    OutOfRangeError,
    ReportError,
    RunConfig,
    load_config,
)

# ODE engine
from .ode import BlockLayout, TimeGrid, Trajectory, integrate_forward, integrate_terminal

# LQ model, coefficients and fields
from .lq import (
    EmpiricalMeasure,
    InitialDistribution,
    LqModel,
    MCoefficients,
    UCoefficients,
    VCoefficients,
    assemble_U,
    benchmark_value,
    check_fields,
    check_identities,
    eval_delta_mu_V,
    eval_M,
    eval_phi,
    eval_Phi,
    eval_U,
    eval_Ubar,
    eval_V,
    representation_value,
    sample_initial_states,
    solve_all,
    solve_M,
    solve_V,
    solve_Z,
    validate,
)

# Simulation
from .simulation import (
    ClosedLoopProblem,
    CostReport,
    Deviation,
    LqProblem,
    SimConfig,
    moment_audit,
    paired_simulate,
    simulate,
)

# Experiments
from .experiments import (
    default_menu,
    run_benchmark_consistency,
    run_gap,
    run_scaling,
)

# Systemic risk
from .systemic_risk import (
    SrParams,
    SystemicRiskProblem,
    control_direct,
    control_limit,
    convergence_report,
    exact_social_value,
    solve_direct,
    solve_master,
)

# Reporting
from .reporting import emit_report

__all__ = [
    # Version
    "__version__",
    "__author__",
    "__email__",
    "__license__",
    # Core
    "MeanFieldError",
    "ConfigError",
    "ModelValidationError",
    "NumericalError",
    "BlowUpError",
    "OutOfRangeError",
    "InsufficientSignalError",
    "ReportError",
    "RunConfig",
    "load_config",
    # ODE engine
    "TimeGrid",
    "Trajectory",
    "BlockLayout",
    "integrate_terminal",
    "integrate_forward",
    # LQ
    "LqModel",
    "InitialDistribution",
    "validate",
    "sample_initial_states",
    "VCoefficients",
    "MCoefficients",
    "UCoefficients",
    "solve_Z",
    "solve_V",
    "solve_M",
    "assemble_U",
    "solve_all",
    "check_identities",
    "EmpiricalMeasure",
    "eval_V",
    "eval_phi",
    "eval_Ubar",
    "eval_delta_mu_V",
    "eval_M",
    "eval_U",
    "eval_Phi",
    "representation_value",
    "benchmark_value",
    "check_fields",
    # Simulation
    "ClosedLoopProblem",
    "LqProblem",
    "SimConfig",
    "Deviation",
    "CostReport",
    "simulate",
    "paired_simulate",
    "moment_audit",
    # Experiments
    "default_menu",
    "run_gap",
    "run_scaling",
    "run_benchmark_consistency",
    # Systemic risk
    "SrParams",
    "SystemicRiskProblem",
    "solve_direct",
    "solve_master",
    "control_direct",
    "control_limit",
    "exact_social_value",
    "convergence_report",
    # Reporting
    "emit_report",
]
