"""Regression inference for partially observed outcomes.

Tools for fitting linear and logistic regressions when the outcome is
missing for part of the sample but a machine-made surrogate is available
for everyone: complete-case and inverse-probability-weighted fits,
prediction-based corrections with tunable surrogate weighting, a synthetic
surrogate two-stage estimator, multiple imputation with Rubin pooling, a
Monte Carlo harness for validity and efficiency studies, and a
variant-scan layer for association screens at biobank shapes.
"""

from .core import (
    FitResult,
    WaldTest,
    build_design,
    fit_logistic,
    fit_wls,
    wald_test,
)
from .datagen import (
    FAMILIES,
    MECHANISMS,
    OUTCOME_TERMS,
    SURROGATE_KINDS,
    AnalysisFrame,
    DgpParams,
    ObservationModelSpec,
    SurrogateSpec,
    apply_observation_model,
    frame_to_csv,
    gen_dataset,
    make_surrogate,
)
from .estimators import (
    METHOD_IDS,
    PbMeanResult,
    PbTuning,
    PropensityModel,
    estimate_cca,
    estimate_full,
    estimate_naive,
    estimate_ppi,
    estimate_psppi,
    estimate_synsurr,
    estimate_wcca,
    fit_propensity,
    pb_mean,
)
from .exceptions import (
    ConfigError,
    DegenerateRanks,
    DegenerateVariance,
    EmptyCompleteCase,
    IllConditionedTheta,
    MisregError,
    NotConverged,
    NotLinearFamily,
    PerfectSeparation,
    SingularDesign,
    SurrogateCollinear,
)
from .gwas import (
    GENOME_WIDE_P,
    SCAN_METHODS,
    CohortTable,
    GenotypeMatrix,
    ScanResult,
    ScanRow,
    inverse_normal_transform,
    maf_filter,
    read_geno_csv,
    read_pheno_csv,
    run_variant_scan,
    simulate_cohort,
    write_geno_csv,
    write_pheno_csv,
)
from .harness import (
    DEFAULT_BASE_SEED,
    GRID_NAMES,
    MetricsRow,
    MiParams,
    RecordRow,
    ScenarioResult,
    ScenarioSummary,
    SimScenario,
    TableRow,
    build_table_rows,
    builtin_grids,
    compute_metrics,
    derive_null_twin,
    emit_table,
    mix64,
    replicate_seed,
    run_scenario,
    run_to_dir,
    scenario_from_config,
    scenario_to_config,
    table_from_dir,
)
from .impute import (
    ForestParams,
    ImputationSet,
    PooledResult,
    mi_estimate,
    pmm_impute,
    rf_impute,
    rubin_pool,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # core
    "FitResult",
    "WaldTest",
    "build_design",
    "fit_wls",
    "fit_logistic",
    "wald_test",
    # data generation
    "FAMILIES",
    "MECHANISMS",
    "SURROGATE_KINDS",
    "OUTCOME_TERMS",
    "DgpParams",
    "AnalysisFrame",
    "ObservationModelSpec",
    "SurrogateSpec",
    "gen_dataset",
    "apply_observation_model",
    "make_surrogate",
    "frame_to_csv",
    # estimators
    "METHOD_IDS",
    "PropensityModel",
    "PbTuning",
    "PbMeanResult",
    "fit_propensity",
    "pb_mean",
    "estimate_full",
    "estimate_cca",
    "estimate_wcca",
    "estimate_naive",
    "estimate_ppi",
    "estimate_psppi",
    "estimate_synsurr",
    # imputation
    "ForestParams",
    "ImputationSet",
    "PooledResult",
    "pmm_impute",
    "rf_impute",
    "rubin_pool",
    "mi_estimate",
    # harness
    "DEFAULT_BASE_SEED",
    "GRID_NAMES",
    "MiParams",
    "SimScenario",
    "RecordRow",
    "MetricsRow",
    "ScenarioSummary",
    "ScenarioResult",
    "TableRow",
    "mix64",
    "replicate_seed",
    "derive_null_twin",
    "run_scenario",
    "compute_metrics",
    "builtin_grids",
    "build_table_rows",
    "emit_table",
    "run_to_dir",
    "table_from_dir",
    "scenario_from_config",
    "scenario_to_config",
    # variant scans
    "SCAN_METHODS",
    "GENOME_WIDE_P",
    "GenotypeMatrix",
    "CohortTable",
    "ScanRow",
    "ScanResult",
    "inverse_normal_transform",
    "maf_filter",
    "run_variant_scan",
    "simulate_cohort",
    "read_pheno_csv",
    "read_geno_csv",
    "write_pheno_csv",
    "write_geno_csv",
    # errors
    "MisregError",
    "SingularDesign",
    "NotConverged",
    "PerfectSeparation",
    "DegenerateVariance",
    "EmptyCompleteCase",
    "IllConditionedTheta",
    "DegenerateRanks",
    "SurrogateCollinear",
    "NotLinearFamily",
    "ConfigError",
]
