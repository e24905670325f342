"""LiDAR odometry and meshing with per-cell Gaussian process layers."""

from ._core import (
    Error,
    Pipeline,
    __version__,
    absolute_trajectory_rmse,
    f1_score,
    gp_predict,
    mesh_prf,
    read_kitti_bin,
    read_mesh_ply,
    read_point_cloud_ply,
    read_trajectory_kitti,
    relative_pose_error,
    run_sequence,
    synth,
)

__all__ = [
    "Error",
    "Pipeline",
    "__version__",
    "absolute_trajectory_rmse",
    "f1_score",
    "gp_predict",
    "mesh_prf",
    "read_kitti_bin",
    "read_mesh_ply",
    "read_point_cloud_ply",
    "read_trajectory_kitti",
    "relative_pose_error",
    "run_sequence",
    "synth",
]
