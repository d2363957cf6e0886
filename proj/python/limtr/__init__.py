"""Desk-scale local-LiDAR motion prediction pipeline."""

from ._limtr import (  # noqa: F401
    __version__,
    bivariate_nll,
    build_lidar_tensor,
    bundle_info,
    encoder_feature,
    evaluate,
    generate_bundles,
    kmeans,
    lr_schedule,
    min_ade,
    train,
)
