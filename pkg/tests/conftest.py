import numpy as np
import pytest

from synfocus import (
    CameraIntrinsics,
    CaptureSpec,
    GroundTexture,
    NelderMeadConfig,
    SceneSpec,
    Target,
    nadir_focal_plane,
    render_views,
)


@pytest.fixture(scope="session")
def nm_fast():
    return NelderMeadConfig(f_tolerance=0.05, x_tolerance=0.01, max_iterations=100)


@pytest.fixture(scope="session")
def small_scene():
    return SceneSpec(
        ground_extent=(50.0, 50.0),
        ground_texture=GroundTexture(base_intensity=100.0, variance=16.0, seed=3, pitch=0.4),
        targets=(Target((0.0, 2.0), 1.0, 145.0), Target((-3.0, -2.5), 0.8, 150.0)),
        occluders=None,
    )


@pytest.fixture(scope="session")
def small_capture():
    return CaptureSpec(
        grid_rows=3, grid_cols=3, aperture=(12.0, 12.0), altitude=30.0,
        intrinsics=CameraIntrinsics.centered(300.0, (128, 128)),
        pixel_noise_sigma=0.0, look_at=(0.0, 0.0, 0.0),
    )


@pytest.fixture(scope="session")
def small_views(small_scene, small_capture):
    """9 clean pointed views of an unoccluded structured scene."""
    return render_views(small_scene, small_capture, seed=5)


@pytest.fixture(scope="session")
def small_plane(small_capture):
    return nadir_focal_plane(small_capture.intrinsics, small_capture.altitude)
