from .accountant import (
    DEFAULT_ORDERS,
    CalibrationError,
    RdpCurve,
    calibrate_sigma,
    epsilon_for,
    rdp_subsampled_gaussian,
    rdp_to_epsilon,
)
from .sgd import (
    DEFAULT_DELTA,
    DivergenceError,
    DpSgdParams,
    LinearModel,
    SgdConfig,
    calibrated_params,
    clip_l2,
    dp_sgd_train,
    np_sgd_train,
    per_sample_gradient,
    schedule,
    test_rmse,
)

__all__ = [
    "DEFAULT_DELTA",
    "DEFAULT_ORDERS",
    "CalibrationError",
    "DivergenceError",
    "DpSgdParams",
    "LinearModel",
    "RdpCurve",
    "SgdConfig",
    "calibrate_sigma",
    "calibrated_params",
    "clip_l2",
    "dp_sgd_train",
    "epsilon_for",
    "np_sgd_train",
    "per_sample_gradient",
    "rdp_subsampled_gaussian",
    "rdp_to_epsilon",
    "schedule",
    "test_rmse",
]
