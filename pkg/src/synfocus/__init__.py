"""Synthetic-aperture refocusing with variance-driven pose refinement.

The package integrates many single-view images onto a synthetic focal plane
and reduces per-image pose errors by maximizing the gray-level variance of
the integral image. A built-in scene simulator provides ground truth for
validation, and the `synfocus` command line ties the pieces together.
"""

from .errors import (
    BehindCamera,
    ConfigError,
    DegenerateView,
    GridMismatch,
    InsufficientPixels,
    NoVisiblePoints,
    NonFiniteObjective,
    SynfocusError,
    TooFewImages,
)
from .geometry import (
    CameraIntrinsics,
    FocalPlane,
    PoseParams,
    angle_difference,
    compensating_translation,
    euler_from_rotation,
    homography_to_plane,
    image_plane_error,
    look_at_pose,
    nadir_focal_plane,
    project_point,
    project_points,
    rotation_from_euler,
)
from .imaging import (
    ImageRaster,
    IntegralAccumulator,
    Roi,
    accumulate,
    glv,
    integral,
    normalized_variance,
    normalized_variance_if_added,
    sort_by_glv,
    warp_to_plane,
)
from .neldermead import NelderMeadConfig, nelder_mead
from .refine import (
    PoseRefiner,
    RefinementResult,
    SearchSpace,
    StrategyConfig,
    optimize_focal_plane,
    refine_image_pose,
    run_strategy,
)
from .simulate import (
    BenchmarkData,
    CaptureSpec,
    EvaluationMetrics,
    GroundTexture,
    OccluderLayer,
    PerturbationSpec,
    SceneSpec,
    Target,
    benchmark_capture,
    benchmark_perturbation,
    benchmark_perturbation_full,
    benchmark_roi,
    benchmark_scene,
    default_focal_plane,
    evaluate,
    grid_poses,
    make_benchmark,
    occlusion_probability,
    perturb_poses,
    psnr,
    render_views,
    scene_occlusion_stats,
)
from .variance_model import (
    ModelMoments,
    OcclusionStats,
    model_moments,
    monte_carlo_integral,
    var_integral,
    var_single,
    variance_standard_error,
)

__version__ = "0.1.0"
