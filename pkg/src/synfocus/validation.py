"""Input validation helpers for the estimator-facing API.

These normalize the flexible inputs the public entry points accept (plain
arrays or ImageRaster instances, PoseParams or length-6 sequences) into the
internal types, with error messages that name the offending index.
"""

from __future__ import annotations

import numpy as np

from .geometry import CameraIntrinsics, PoseParams
from .imaging import ImageRaster


def check_intrinsics(value) -> CameraIntrinsics:
    if not isinstance(value, CameraIntrinsics):
        raise ValueError("intrinsics must be a CameraIntrinsics instance")
    return value


def as_image_raster(value, index: int | None = None) -> ImageRaster:
    """Accept an ImageRaster or a 2-D array (finite pixels become valid)."""
    where = "" if index is None else f"image {index}: "
    if isinstance(value, ImageRaster):
        return value
    try:
        return ImageRaster.from_array(value)
    except (ValueError, TypeError) as exc:
        raise ValueError(f"{where}{exc}") from exc


def as_pose(value, index: int | None = None) -> PoseParams:
    """Accept a PoseParams or a (t_x, t_y, t_z, alpha, beta, gamma) sequence."""
    where = "" if index is None else f"pose {index}: "
    if isinstance(value, PoseParams):
        return value
    arr = np.asarray(value, dtype=float)
    if arr.shape != (6,):
        raise ValueError(f"{where}expected 6 pose parameters, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{where}pose parameters must be finite")
    return PoseParams.from_array(arr)


def check_images_poses(images, poses) -> tuple[list, list]:
    """Normalize parallel image/pose sequences, enforcing equal length."""
    images = [as_image_raster(img, i) for i, img in enumerate(images)]
    poses = [as_pose(p, i) for i, p in enumerate(poses)]
    if len(images) != len(poses):
        raise ValueError(f"{len(images)} images but {len(poses)} poses")
    shapes = {img.shape for img in images}
    if len(shapes) > 1:
        raise ValueError(f"images must share one shape, got {sorted(shapes)}")
    return images, poses
