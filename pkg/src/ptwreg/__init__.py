"""Extended Poisson-Tweedie count regression.

Counts are modelled as Y|Z ~ Poisson(Z) with a Tweedie mixing distribution
Z ~ Tw_p(mu, phi), giving E(Y) = mu and Var(Y) = mu + phi * mu**p.  The
extension lets phi go negative (underdispersion) at the cost of the
probability interpretation; estimation uses quasi-score plus Pearson
estimating functions solved by a modified chaser with Godambe (sandwich)
standard errors.
"""

from .chaser import FitConfig, FitResult, fit, initialize, step_control
from .dataio import (
    Column,
    DatasetTable,
    ModelSpecConfig,
    build_design,
    expand_count_column,
    fit_result_dict,
    fit_result_json,
    fit_table,
    load_csv,
    loglik_at_fit,
    study_result_csv,
    study_result_dict,
    study_result_json,
    table_csv,
)
from .datasets import dataset_table, dicentrics_csv, dicentrics_table
from .errors import (
    BoundaryTrapError,
    CsvParseError,
    DomainError,
    InvalidParameterError,
    MissingBaselineError,
    NoDistributionError,
    NonConvergenceError,
    NonpositivePmfError,
    PtwError,
    RankDeficiencyError,
    SingularMatrixError,
    UnreliableEstimateError,
    UnsupportedPowerError,
    VarianceNonpositiveError,
)
from .estfun import (
    EstFunState,
    PtwModel,
    Theta,
    estfun_state,
    godambe_covariance,
    pearson_score,
    quasi_score,
    sensitivity,
    variability,
)
from .numcore import (
    QuadratureRule,
    RngStream,
    gauss_laguerre,
    rng_substream,
    solve_linear,
)
from .ptwdist import (
    LoglikResult,
    PmfConfig,
    PmfEstimate,
    PtwParams,
    dispersion_index,
    heavy_tail_index,
    ptw_loglik,
    ptw_pmf,
    ptw_pmf_curve,
    ptw_pzero,
    ptw_sample,
    zero_inflation_index,
)
from .refdists import (
    ComPoissonParams,
    GammaCountParams,
    MomentMap,
    MomentMapDesign,
    compoisson_pmf,
    compoisson_sample,
    gammacount_pmf,
    gammacount_sample,
    moment_map,
)
from .simstudy import (
    DESK_REPLICATES,
    DESK_SAMPLE_SIZES,
    PAPER_REPLICATES,
    PAPER_SAMPLE_SIZES,
    Scenario,
    StudyCell,
    StudyResult,
    make_scenario,
    run_study,
    scenario_names,
    scenario_truth,
    standardized_bias_table,
)
from .tweedie import TweedieParams, tweedie_density, tweedie_laplace, tweedie_sample

__version__ = "0.1.0"

__all__ = [
    "BoundaryTrapError",
    "Column",
    "ComPoissonParams",
    "CsvParseError",
    "DatasetTable",
    "DESK_REPLICATES",
    "DESK_SAMPLE_SIZES",
    "DomainError",
    "EstFunState",
    "FitConfig",
    "FitResult",
    "GammaCountParams",
    "InvalidParameterError",
    "LoglikResult",
    "MissingBaselineError",
    "ModelSpecConfig",
    "MomentMap",
    "MomentMapDesign",
    "NoDistributionError",
    "NonConvergenceError",
    "NonpositivePmfError",
    "PAPER_REPLICATES",
    "PAPER_SAMPLE_SIZES",
    "PmfConfig",
    "PmfEstimate",
    "PtwError",
    "PtwModel",
    "PtwParams",
    "QuadratureRule",
    "RankDeficiencyError",
    "RngStream",
    "Scenario",
    "SingularMatrixError",
    "StudyCell",
    "StudyResult",
    "Theta",
    "TweedieParams",
    "UnreliableEstimateError",
    "UnsupportedPowerError",
    "VarianceNonpositiveError",
    "build_design",
    "dataset_table",
    "dicentrics_csv",
    "dicentrics_table",
    "dispersion_index",
    "estfun_state",
    "expand_count_column",
    "fit",
    "fit_result_dict",
    "fit_result_json",
    "fit_table",
    "gauss_laguerre",
    "godambe_covariance",
    "heavy_tail_index",
    "initialize",
    "load_csv",
    "loglik_at_fit",
    "make_scenario",
    "moment_map",
    "pearson_score",
    "ptw_loglik",
    "ptw_pmf",
    "ptw_pmf_curve",
    "ptw_pzero",
    "ptw_sample",
    "quasi_score",
    "rng_substream",
    "run_study",
    "scenario_names",
    "scenario_truth",
    "sensitivity",
    "solve_linear",
    "standardized_bias_table",
    "step_control",
    "study_result_csv",
    "study_result_dict",
    "study_result_json",
    "table_csv",
    "tweedie_density",
    "tweedie_laplace",
    "tweedie_sample",
    "variability",
    "zero_inflation_index",
    "compoisson_pmf",
    "compoisson_sample",
    "gammacount_pmf",
    "gammacount_sample",
]
