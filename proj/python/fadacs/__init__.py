"""Parking occupancy forecasting with adversarial domain adaptation.

Thin python surface over the C++ core. The heavy lifting (ingestion,
clustering, feature tensors, ConvLSTM training, adversarial adaptation)
lives in the `fadacs` CLI; this module exposes the core numeric operations
for scripting and sanity checks.
"""

try:
    # wheel layout: the extension is installed inside the package
    from ._fadacs import (
        FadacsError,
        cluster_slots,
        connection_threshold_m,
        convlstm_demo_rmse,
        datetime_channels,
        generate_synthetic,
        haversine_m,
        mae,
        normalize_rule,
        pearson,
        regression_f_test,
        rmse,
        __version__,
    )
except ImportError:  # development layout: extension on PYTHONPATH
    from _fadacs import (
        FadacsError,
        cluster_slots,
        connection_threshold_m,
        convlstm_demo_rmse,
        datetime_channels,
        generate_synthetic,
        haversine_m,
        mae,
        normalize_rule,
        pearson,
        regression_f_test,
        rmse,
        __version__,
    )

__all__ = [
    "FadacsError",
    "cluster_slots",
    "connection_threshold_m",
    "convlstm_demo_rmse",
    "datetime_channels",
    "generate_synthetic",
    "haversine_m",
    "mae",
    "normalize_rule",
    "pearson",
    "regression_f_test",
    "rmse",
    "__version__",
]
