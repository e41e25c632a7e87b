"""Range-only cooperative localization with the unscented transform and
split covariance intersection, plus a Monte Carlo sensitivity harness."""

from coopsci.core import (
    CovarianceError,
    EstimationError,
    RngStream,
    SplitEstimate,
    cholesky_psd,
    sample_gaussian,
    symmetrize,
)
from coopsci.kalman import GpsModel, LinearModel, cv_model, kf_predict, kf_update
from coopsci.sci import OmegaSearch, fuse, gps_split_update, optimize_omega, sci_fuse
from coopsci.unscented import (
    RangePrediction,
    SigmaSet,
    UtParams,
    make_sigma_points,
    predict_range,
    range_constrained_estimate,
    unscented_transform,
    ut_weights,
)

__version__ = "0.1.0"

__all__ = [
    "CovarianceError",
    "EstimationError",
    "GpsModel",
    "LinearModel",
    "OmegaSearch",
    "RangePrediction",
    "RngStream",
    "SigmaSet",
    "SplitEstimate",
    "UtParams",
    "cholesky_psd",
    "cv_model",
    "fuse",
    "gps_split_update",
    "kf_predict",
    "kf_update",
    "make_sigma_points",
    "optimize_omega",
    "predict_range",
    "range_constrained_estimate",
    "sample_gaussian",
    "sci_fuse",
    "symmetrize",
    "unscented_transform",
    "ut_weights",
]
