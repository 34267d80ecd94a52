"""Python bindings for the robustmvs C++ core."""

from ._core import (  # noqa: F401
    Camera,
    FusionConfig,
    LossConfig,
    backproject,
    build_cost_volume,
    cloud_distance_metrics,
    confidence_map,
    depth_validation_metrics,
    fuse,
    homography_for_depth,
    loss_gradient,
    make_scene,
    relative_transform,
    render,
    robust_topk_loss,
    select_views,
    soft_argmin_depth,
    total_loss,
    warp_pixel,
)
