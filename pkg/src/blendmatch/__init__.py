"""Donor matching and multiple imputation with blended distance metrics."""

from .datagen import (
    GenConfig,
    MissingnessConfig,
    ampute,
    dataset_to_csv,
    gen_outcome,
    gen_predictors,
    make_study2_case,
    mar_right_probabilities,
    skew_transform,
)
from .distances import (
    BlendSpec,
    CovarianceEstimate,
    DistanceVector,
    blend_ranked,
    blend_scaled,
    covariance_estimate,
    distance_table,
    mahalanobis_distance,
    mahalanobis_distances,
    pairwise_mahalanobis,
    predictive_distances,
    select_donors,
)
from .harness import (
    ConditionGrid,
    Study1Row,
    Study2Row,
    metric_bias,
    metric_coverage,
    metric_r2,
    metric_rmse,
    run_study1,
    run_study2,
)
from .imputation import (
    Dataset,
    ImputationResult,
    PooledEstimate,
    SingleValueEstimate,
    impute_once,
    multiple_impute,
    pool_mean,
    pool_single_value,
    rng_stream,
    rubin_combine,
)
from .regression import DrawnModel, OlsFit, bayes_draw, ols_fit, predict
from .tables import write_tables

__version__ = "0.1.0"

__all__ = [
    "BlendSpec",
    "ConditionGrid",
    "CovarianceEstimate",
    "Dataset",
    "DistanceVector",
    "DrawnModel",
    "GenConfig",
    "ImputationResult",
    "MissingnessConfig",
    "OlsFit",
    "PooledEstimate",
    "SingleValueEstimate",
    "Study1Row",
    "Study2Row",
    "ampute",
    "bayes_draw",
    "blend_ranked",
    "blend_scaled",
    "covariance_estimate",
    "dataset_to_csv",
    "distance_table",
    "gen_outcome",
    "gen_predictors",
    "impute_once",
    "mahalanobis_distance",
    "mahalanobis_distances",
    "make_study2_case",
    "mar_right_probabilities",
    "metric_bias",
    "metric_coverage",
    "metric_r2",
    "metric_rmse",
    "multiple_impute",
    "ols_fit",
    "pairwise_mahalanobis",
    "pool_mean",
    "pool_single_value",
    "predict",
    "predictive_distances",
    "rng_stream",
    "rubin_combine",
    "run_study1",
    "run_study2",
    "select_donors",
    "skew_transform",
    "write_tables",
]
