"""Sample-size analysis for clinical prediction models built on
incomplete predictor data.

The package couples the closed-form minimum-sample-size criteria for
binary-outcome risk models with a Monte Carlo engine that generates
synthetic populations, imposes realistic missingness, imputes, refits,
and scores calibration, discrimination, and net benefit on a large
fully observed target set.
"""

from .amputation import AmputationPlan, MissingnessSpec, ampute, plan_amputation
from .datagen import (
    CategoricalSummary,
    ContinuousSummary,
    DataSet,
    OutcomeSpec,
    PredictorSpec,
    calibrate_intercept,
    generate,
)
from .engine import (
    CellSummary,
    MetricRecord,
    RepeatResult,
    ScenarioConfig,
    SearchTargets,
    run_repeat,
    run_scenario,
    scaled_n,
    search_min_n,
    summarize,
)
from .errors import (
    CalibrationError,
    ConfigError,
    DegenerateDataError,
    FitError,
    MissSizeError,
    SizingError,
)
from .imputation import (
    CompletedData,
    FittedImputer,
    apply_imputer,
    complete_case_filter,
    fit_imputer,
)
from .metrics import (
    CalibrationResult,
    LossCurve,
    NetBenefitCurve,
    c_statistic,
    calibration,
    decision_loss_curve,
    degradation,
    net_benefit_curve,
)
from .modeling import (
    FittedModel,
    fit_backward_aic,
    fit_lasso_cv,
    fit_logistic_mle,
    pool_models,
    predict,
    predict_averaged,
)
from .sizing import (
    SizingInputs,
    SizingResult,
    delta_grid,
    inflate_for_missingness,
    riley_binary_min_n,
)

__version__ = "0.1.0"

__all__ = [
    "AmputationPlan",
    "CalibrationError",
    "CalibrationResult",
    "CategoricalSummary",
    "CellSummary",
    "CompletedData",
    "ConfigError",
    "ContinuousSummary",
    "DataSet",
    "DegenerateDataError",
    "FitError",
    "FittedImputer",
    "FittedModel",
    "LossCurve",
    "MetricRecord",
    "MissSizeError",
    "MissingnessSpec",
    "NetBenefitCurve",
    "OutcomeSpec",
    "PredictorSpec",
    "RepeatResult",
    "ScenarioConfig",
    "SearchTargets",
    "SizingError",
    "SizingInputs",
    "SizingResult",
    "ampute",
    "apply_imputer",
    "c_statistic",
    "calibrate_intercept",
    "calibration",
    "complete_case_filter",
    "decision_loss_curve",
    "degradation",
    "delta_grid",
    "fit_backward_aic",
    "fit_imputer",
    "fit_lasso_cv",
    "fit_logistic_mle",
    "generate",
    "inflate_for_missingness",
    "net_benefit_curve",
    "plan_amputation",
    "pool_models",
    "predict",
    "predict_averaged",
    "riley_binary_min_n",
    "run_repeat",
    "run_scenario",
    "scaled_n",
    "search_min_n",
    "summarize",
]
