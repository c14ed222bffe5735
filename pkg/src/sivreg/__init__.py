"""Saturated instrumental-variables estimation with many covariate groups.

The package groups observations by unique covariate value, interacts a binary
instrument with the group dummies, and provides a jackknife-style estimator
whose bias does not grow with the number of groups, together with a variance
estimator that is robust to treatment-effect heterogeneity, many instruments,
and heteroskedasticity.  Saturated TSLS and JIVE baselines, population-level
estimands, a dense reference implementation, a Monte Carlo harness, and a
CSV/JSON command line round out the toolkit.
"""

from .design import (
    DesignError,
    EmptyDesignError,
    GroupAudit,
    Sample,
    SaturatedDesign,
    build_design,
    design_summary,
    filter_design,
    validate_group_sizes,
)
from .blockops import (
    CellIndex,
    DegenerateGroupError,
    GroupSizeError,
    SmallCellError,
    apply_A,
    apply_M_W,
    apply_M_WZ,
    apply_MM_inv,
    apply_MM_inv_W,
    apply_P,
    cell_sizes,
    iter_cells,
    projection_diag_P,
    sive_diag_D,
    trace_A_squared,
)
from .estimators import (
    EstimationError,
    EstimatorKind,
    PopulationInputs,
    RankDeficiencyError,
    WeakDenominatorError,
    estimate_jive1,
    estimate_jive2,
    estimate_sive,
    estimate_tsls,
    estimate_tsls_generic,
    first_stage_strength,
    population_estimand,
    population_moments,
)
from .inference import (
    InferenceReport,
    NonpositiveVarianceError,
    SigmaEstimates,
    chao_variance,
    confidence_interval,
    hartley_sigma,
    robust_ci,
    robust_test,
    sive_report,
    sive_variance,
    t_test,
)
from .oracle import (
    DenseDesign,
    assemble,
    oracle_chao_variance,
    oracle_estimate,
    oracle_sigma,
    oracle_variance,
)
from .simulation import (
    SimConfig,
    SimDraw,
    generate_sample,
    halton,
    replication_seed,
    run_bias_experiment,
    run_size_experiment,
    summarize,
)
from .cli import DatasetSchema, SpecChoice, cmd_audit, cmd_estimate, cmd_robust_ci, cmd_simulate

__version__ = "0.1.0"

__all__ = [
    "DesignError",
    "EmptyDesignError",
    "GroupAudit",
    "Sample",
    "SaturatedDesign",
    "build_design",
    "design_summary",
    "filter_design",
    "validate_group_sizes",
    "CellIndex",
    "DegenerateGroupError",
    "GroupSizeError",
    "SmallCellError",
    "apply_A",
    "apply_M_W",
    "apply_M_WZ",
    "apply_MM_inv",
    "apply_MM_inv_W",
    "apply_P",
    "cell_sizes",
    "iter_cells",
    "projection_diag_P",
    "sive_diag_D",
    "trace_A_squared",
    "EstimationError",
    "EstimatorKind",
    "PopulationInputs",
    "RankDeficiencyError",
    "WeakDenominatorError",
    "estimate_jive1",
    "estimate_jive2",
    "estimate_sive",
    "estimate_tsls",
    "estimate_tsls_generic",
    "first_stage_strength",
    "population_estimand",
    "population_moments",
    "InferenceReport",
    "NonpositiveVarianceError",
    "SigmaEstimates",
    "chao_variance",
    "confidence_interval",
    "hartley_sigma",
    "robust_ci",
    "robust_test",
    "sive_report",
    "sive_variance",
    "t_test",
    "DenseDesign",
    "assemble",
    "oracle_chao_variance",
    "oracle_estimate",
    "oracle_sigma",
    "oracle_variance",
    "SimConfig",
    "SimDraw",
    "generate_sample",
    "halton",
    "replication_seed",
    "run_bias_experiment",
    "run_size_experiment",
    "summarize",
    "DatasetSchema",
    "SpecChoice",
    "cmd_audit",
    "cmd_estimate",
    "cmd_robust_ci",
    "cmd_simulate",
    "__version__",
]
