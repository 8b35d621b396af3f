"""Spatial interpolation of daily precipitation and precipitation indexes."""

__version__ = "0.1.0"

from .covariance import (
    CovarianceModel,
    EmpiricalVariogram,
    FitDiagnostics,
    covariance_eval,
    empirical_semivariogram,
    fit_spherical,
    iterated_gls_trend,
)
from .evaluation import (
    EvaluationReport,
    FoldAssignment,
    cv_daily,
    distribution_report,
    kfold_split,
    kurtosis,
    mae,
    rmse,
    run_direct,
    run_two_stage,
    skewness,
)
from .geo import (
    DistanceMatrix,
    ObservationPanel,
    Station,
    distance,
    distance_matrix,
    nearest_station,
    validate_panel,
)
from .indexes import DailySeries, IndexValue, cdd, index_panel, is_dry_day, mfp
from .interpolate import (
    FieldSnapshot,
    KrigingSolution,
    TransformSpec,
    boxcox,
    idw_predict,
    inv_boxcox,
    nn_predict,
    ok_predict,
    tgk_predict,
    uk_predict,
    with_fallback,
)
