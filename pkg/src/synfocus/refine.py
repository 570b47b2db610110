"""Per-image pose refinement by maximizing integral-image variance.

Images are integrated sequentially in decreasing gray-level-variance order
(higher single-image variance indicates less occlusion). The first image
defines the reference frame and is never optimized; every following image is
registered to the frozen integral of its predecessors by searching its pose
parameters with Nelder-Mead, maximizing the normalized variance the integral
would have after adding it. Optimizing six parameters per integration step,
rather than all poses jointly, keeps each search low dimensional; reducing
the per-image search space to (t_x, t_y, gamma) halves it again, because
pitch/roll errors are equivalent to in-plane translations and height errors
barely move the image.

Three integration strategies are provided:

    brute   refine and integrate every image,
    early   stop once the normalized-variance trace has failed to reach a
            new maximum for `patience` consecutive steps, and roll back to
            the running maximum,
    select  refine every image but integrate only those whose inclusion
            raises the normalized variance.

PoseRefiner wraps the whole pipeline in a scikit-learn style estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .errors import DegenerateView, InsufficientPixels, SynfocusError, TooFewImages
from .geometry import (
    PARAM_NAMES,
    CameraIntrinsics,
    FocalPlane,
    PoseParams,
    nadir_focal_plane,
    rot_x,
    rot_y,
)
from .imaging import (
    ImageRaster,
    IntegralAccumulator,
    Roi,
    glv,
    normalized_variance,
    normalized_variance_if_added,
    sort_by_glv,
    warp_to_plane,
)
from .neldermead import NelderMeadConfig, nelder_mead
from .validation import check_images_poses, check_intrinsics

SPACE_PRESETS = {
    "six": ("t_x", "t_y", "t_z", "alpha", "beta", "gamma"),
    "four": ("t_x", "t_y", "t_z", "gamma"),
    "three": ("t_x", "t_y", "gamma"),
    "two": ("t_x", "t_y"),
}

DEFAULT_STEP_M = 0.5
DEFAULT_STEP_RAD = math.radians(1.0)
DEFAULT_BOUND_M = 3.0
DEFAULT_BOUND_RAD = math.radians(5.0)

STRATEGY_KINDS = ("brute", "early", "select")


def _default_step(name: str) -> float:
    return DEFAULT_STEP_M if name.startswith("t_") else DEFAULT_STEP_RAD


def _default_bound(name: str) -> float:
    return DEFAULT_BOUND_M if name.startswith("t_") else DEFAULT_BOUND_RAD


@dataclass(frozen=True)
class SearchSpace:
    """Which pose parameters are optimized, with per-parameter step and bound.

    initial_step sizes the initial simplex; bounds are symmetric half-widths
    around the initial pose beyond which candidates are rejected.
    """

    active_params: tuple
    initial_step: tuple
    bounds: tuple

    def __post_init__(self):
        if not self.active_params:
            raise ValueError("active_params must not be empty")
        for name in self.active_params:
            if name not in PARAM_NAMES:
                raise ValueError(f"unknown pose parameter {name!r}")
        if len(set(self.active_params)) != len(self.active_params):
            raise ValueError("active_params must not repeat")
        if len(self.initial_step) != len(self.active_params):
            raise ValueError("initial_step must align with active_params")
        if len(self.bounds) != len(self.active_params):
            raise ValueError("bounds must align with active_params")
        if not all(s > 0 for s in self.initial_step):
            raise ValueError("steps must be positive")
        if not all(b > 0 for b in self.bounds):
            raise ValueError("bounds must be positive")

    @classmethod
    def preset(cls, name: str, initial_step=None, bounds=None) -> "SearchSpace":
        """One of the named spaces: six, four, three or two parameters."""
        if name not in SPACE_PRESETS:
            raise ValueError(f"unknown search space {name!r}; choose from {sorted(SPACE_PRESETS)}")
        params = SPACE_PRESETS[name]
        step = tuple(initial_step) if initial_step is not None else tuple(
            _default_step(p) for p in params
        )
        bound = tuple(bounds) if bounds is not None else tuple(_default_bound(p) for p in params)
        return cls(active_params=params, initial_step=step, bounds=bound)

    def apply(self, pose: PoseParams, offsets) -> PoseParams:
        changes = {name: getattr(pose, name) + float(d)
                   for name, d in zip(self.active_params, offsets)}
        return pose.replaced(**changes)


def as_search_space(space) -> SearchSpace:
    if isinstance(space, SearchSpace):
        return space
    return SearchSpace.preset(space)


@dataclass(frozen=True)
class StrategyConfig:
    """Integration strategy: brute, early (with patience) or select."""

    kind: str = "early"
    patience: int = 1

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}; choose from {STRATEGY_KINDS}")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")


@dataclass
class RefinementResult:
    """Outcome of one strategy run.

    objective_trace holds the normalized variance observed at every
    integration step in processing order (for the selection strategy, the
    value the step would have produced). n_stop is the number of images in
    the returned integral. parameter_evaluations sums |active_params| over
    the images whose pose was actually optimized; step_objectives records
    (index, objective at start pose, refined objective) for each of them.
    """

    corrected_poses: list
    included: list
    optimized: list
    objective_trace: list
    n_stop: int
    parameter_evaluations: int
    order: list
    initial_poses: list
    unrefined_objective: float
    final_objective: float
    integral: ImageRaster
    failures: list = field(default_factory=list)
    step_objectives: list = field(default_factory=list)


def _roi_coverage(warped: ImageRaster, roi: Roi | None) -> int:
    if roi is None:
        return int(warped.valid_mask.sum())
    ys, xs = roi.slices
    return int(warped.valid_mask[ys, xs].sum())


def refine_image_pose(
    acc: IntegralAccumulator,
    image: ImageRaster,
    pose0: PoseParams,
    K: CameraIntrinsics,
    space: SearchSpace,
    plane: FocalPlane,
    roi: Roi | None,
    nm: NelderMeadConfig,
    interpolation: str = "bilinear",
    coverage_floor: float = 0.9,
) -> tuple[PoseParams, float]:
    """Optimize one image's pose against the frozen integral snapshot.

    The objective of a candidate pose is the normalized variance of
    (accumulator + warped image); out-of-bounds candidates and degenerate
    warps score -inf. Candidates also may not shed region-of-interest
    coverage: the normalization factor counts every integrated image, so a
    pose that slides the footprint off the region would gain score without
    registering anything. Any candidate covering fewer valid pixels than
    coverage_floor times the start pose's coverage scores -inf.

    With an empty accumulator (first image) the pose is kept and only
    scored. The returned objective is never below the start pose's.
    """
    warped0 = warp_to_plane(image, K, pose0, plane, interpolation)
    f0 = normalized_variance_if_added(acc, warped0, roi)
    if acc.n == 0:
        return pose0, f0

    bounds = np.asarray(space.bounds)
    min_coverage = coverage_floor * _roi_coverage(warped0, roi)

    def objective(offsets):
        if np.any(np.abs(offsets) > bounds):
            return -np.inf
        try:
            warped = warp_to_plane(image, K, space.apply(pose0, offsets), plane, interpolation)
            if _roi_coverage(warped, roi) < min_coverage:
                return -np.inf
            return normalized_variance_if_added(acc, warped, roi)
        except (DegenerateView, InsufficientPixels):
            return -np.inf

    x0 = np.zeros(len(space.active_params))
    best, f_best, _ = nelder_mead(objective, x0, nm, sense="maximize",
                                  step=np.asarray(space.initial_step))
    return space.apply(pose0, best), float(f_best)


def _unrefined_objective(images, poses, K, plane, roi, interpolation) -> float:
    acc = IntegralAccumulator.for_plane(plane)
    for i, (image, pose) in enumerate(zip(images, poses)):
        try:
            acc.accumulate(warp_to_plane(image, K, pose, plane, interpolation), i)
        except DegenerateView:
            continue
    if acc.n == 0:
        return float("nan")
    return normalized_variance(acc, roi)


def run_strategy(
    images,
    initial_poses,
    K: CameraIntrinsics,
    plane: FocalPlane,
    roi: Roi | None,
    space: SearchSpace,
    strategy: StrategyConfig,
    nm: NelderMeadConfig,
    interpolation: str = "bilinear",
    coverage_floor: float = 0.9,
) -> RefinementResult:
    """Refine and integrate a set of views with the chosen strategy.

    Views are processed in decreasing single-image gray-level-variance
    order; the first one is integrated as-is and defines the reference. A
    view that fails refinement is skipped and reported in `failures`.
    """
    if len(images) != len(initial_poses):
        raise ValueError("images and poses must correspond by index")
    if not images:
        raise ValueError("at least one image is required")
    order = sort_by_glv(images)
    m = len(images)
    poses = list(initial_poses)
    included = [False] * m
    optimized = [False] * m
    failures = []
    trace = []
    evals = 0

    unrefined = _unrefined_objective(images, initial_poses, K, plane, roi, interpolation)

    acc = IntegralAccumulator.for_plane(plane)
    position = 0
    while position < len(order):
        idx = order[position]
        position += 1
        try:
            warped = warp_to_plane(images[idx], K, poses[idx], plane, interpolation)
            acc.accumulate(warped, idx)
            value = normalized_variance(acc, roi)
        except SynfocusError as exc:
            failures.append((idx, str(exc)))
            continue
        acc.objective_trace.append(value)
        trace.append(value)
        included[idx] = True
        break

    current = trace[-1] if trace else float("nan")
    best_value = current
    best_acc = acc.clone()
    best_included = list(included)
    since_best = 0

    step_objectives = []
    for idx in order[position:]:
        try:
            start_warp = warp_to_plane(images[idx], K, poses[idx], plane, interpolation)
            start_value = normalized_variance_if_added(acc, start_warp, roi)
            pose_new, refined_value = refine_image_pose(acc, images[idx], poses[idx], K, space,
                                                        plane, roi, nm, interpolation,
                                                        coverage_floor)
        except SynfocusError as exc:
            failures.append((idx, str(exc)))
            continue
        optimized[idx] = True
        evals += len(space.active_params)
        step_objectives.append((idx, start_value, refined_value))
        poses[idx] = pose_new
        warped = warp_to_plane(images[idx], K, pose_new, plane, interpolation)

        if strategy.kind in ("brute", "early"):
            acc.accumulate(warped, idx)
            value = normalized_variance(acc, roi)
            acc.objective_trace.append(value)
            trace.append(value)
            included[idx] = True
            current = value
            if strategy.kind == "early":
                if value > best_value:
                    best_value = value
                    best_acc = acc.clone()
                    best_included = list(included)
                    since_best = 0
                else:
                    since_best += 1
                    if since_best >= strategy.patience:
                        break
        else:  # select
            value = normalized_variance_if_added(acc, warped, roi)
            trace.append(value)
            if value > current:
                acc.accumulate(warped, idx)
                acc.objective_trace.append(value)
                included[idx] = True
                current = value

    if strategy.kind == "early" and trace:
        acc = best_acc
        included = best_included
        final = best_value
    else:
        final = current

    if acc.n == 0:
        raise TooFewImages("no image could be integrated")

    return RefinementResult(
        corrected_poses=poses,
        included=included,
        optimized=optimized,
        objective_trace=trace,
        n_stop=acc.n,
        parameter_evaluations=evals,
        order=order,
        initial_poses=list(initial_poses),
        unrefined_objective=unrefined,
        final_objective=final,
        integral=acc.integral(),
        failures=failures,
        step_objectives=step_objectives,
    )


def optimize_focal_plane(
    images,
    poses,
    K: CameraIntrinsics,
    roi: Roi | None,
    z_range: tuple[float, float],
    z_steps: int,
    refine_orientation: bool = False,
    nm: NelderMeadConfig | None = None,
    raster_extent: tuple[float, float] | None = None,
    raster_resolution: tuple[int, int] | None = None,
    interpolation: str = "bilinear",
) -> FocalPlane:
    """Search the focal plane maximizing the gray-level variance of the integral.

    A coarse grid over the plane height is refined with Nelder-Mead over the
    height (plus two tilt angles when refine_orientation is set). The poses
    are taken as given; no pose refinement happens here. The returned
    plane's variance is at least that of every coarse grid sample.
    """
    z_lo, z_hi = (float(z_range[0]), float(z_range[1]))
    if z_lo > z_hi:
        raise ValueError("z_range must be ordered")
    if z_steps < 2 and z_lo != z_hi:
        raise ValueError("z_steps must be at least 2")
    if raster_resolution is None:
        raster_resolution = (images[0].width, images[0].height)
    if raster_extent is None:
        mean_alt = float(np.mean([p.t_z for p in poses]))
        gsd = (mean_alt - (z_lo + z_hi) / 2.0) / K.focal_length_px
        if gsd <= 0:
            raise ValueError("z_range must lie below the cameras")
        raster_extent = (raster_resolution[0] * gsd, raster_resolution[1] * gsd)

    def plane_at(z, tilt_x=0.0, tilt_y=0.0) -> FocalPlane:
        normal = rot_x(tilt_x) @ rot_y(tilt_y) @ np.array([0.0, 0.0, 1.0])
        return FocalPlane.from_normal((0.0, 0.0, float(z)), normal,
                                      raster_extent, raster_resolution)

    def score(z, tilt_x=0.0, tilt_y=0.0) -> float:
        try:
            plane = plane_at(z, tilt_x, tilt_y)
        except ValueError:
            return -np.inf
        acc = IntegralAccumulator.for_plane(plane)
        for i, (image, pose) in enumerate(zip(images, poses)):
            try:
                acc.accumulate(warp_to_plane(image, K, pose, plane, interpolation), i)
            except DegenerateView:
                continue
        if acc.n == 0:
            return -np.inf
        try:
            return glv(acc.integral(), roi)
        except InsufficientPixels:
            return -np.inf

    if z_lo == z_hi:
        return plane_at(z_lo)
    zs = np.linspace(z_lo, z_hi, z_steps)
    scores = [score(z) for z in zs]
    best_i = int(np.argmax(scores))
    grid_step = zs[1] - zs[0]
    nm = nm or NelderMeadConfig(f_tolerance=1e-6, x_tolerance=1e-4, max_iterations=100)
    tilt_limit = math.radians(10.0)

    if refine_orientation:
        def objective(v):
            if not (z_lo <= v[0] <= z_hi) or np.any(np.abs(v[1:]) > tilt_limit):
                return -np.inf
            return score(v[0], v[1], v[2])

        x0 = np.array([zs[best_i], 0.0, 0.0])
        step = np.array([grid_step / 2.0, math.radians(0.5), math.radians(0.5)])
    else:
        def objective(v):
            if not (z_lo <= v[0] <= z_hi):
                return -np.inf
            return score(v[0])

        x0 = np.array([zs[best_i]])
        step = np.array([grid_step / 2.0])

    best, _, _ = nelder_mead(objective, x0, nm, sense="maximize", step=step)
    if refine_orientation:
        return plane_at(best[0], best[1], best[2])
    return plane_at(best[0])


class PoseRefiner(BaseEstimator):
    """Scikit-learn style estimator around the refinement pipeline.

    fit(images, poses) refines the per-image poses and integrates the views;
    the fitted state holds the corrected poses, the objective trace and the
    integral image. transform() returns the fitted integral; with arguments
    it integrates the given images at the given poses onto the fitted plane
    without any refinement.

    Parameters mirror the library defaults: `space` is a SearchSpace or one
    of 'six' / 'four' / 'three' / 'two'; `strategy` is a StrategyConfig or
    one of 'brute' / 'early' / 'select'. When `plane` is None a horizontal
    plane at `plane_z` sized to the sensor footprint is used, or the plane
    is searched over `z_range` when auto_plane is set.
    """

    def __init__(
        self,
        intrinsics: CameraIntrinsics | None = None,
        space="three",
        strategy="early",
        patience: int = 1,
        plane: FocalPlane | None = None,
        plane_z: float = 0.0,
        auto_plane: bool = False,
        z_range: tuple[float, float] = (-5.0, 5.0),
        z_steps: int = 21,
        roi: Roi | None = None,
        interpolation: str = "bilinear",
        reflection: float = 1.0,
        expansion: float = 2.0,
        contraction: float = 0.5,
        shrink: float = 0.5,
        f_tolerance: float = 0.05,
        x_tolerance: float = 0.01,
        max_iterations: int = 100,
        coverage_floor: float = 0.9,
    ):
        self.intrinsics = intrinsics
        self.space = space
        self.strategy = strategy
        self.patience = patience
        self.plane = plane
        self.plane_z = plane_z
        self.auto_plane = auto_plane
        self.z_range = z_range
        self.z_steps = z_steps
        self.roi = roi
        self.interpolation = interpolation
        self.reflection = reflection
        self.expansion = expansion
        self.contraction = contraction
        self.shrink = shrink
        self.f_tolerance = f_tolerance
        self.x_tolerance = x_tolerance
        self.max_iterations = max_iterations
        self.coverage_floor = coverage_floor

    def _nm_config(self) -> NelderMeadConfig:
        return NelderMeadConfig(
            reflection=self.reflection,
            expansion=self.expansion,
            contraction=self.contraction,
            shrink=self.shrink,
            f_tolerance=self.f_tolerance,
            x_tolerance=self.x_tolerance,
            max_iterations=self.max_iterations,
        )

    def _resolve_plane(self, images, poses, K: CameraIntrinsics) -> FocalPlane:
        if self.plane is not None:
            return self.plane
        if self.auto_plane:
            return optimize_focal_plane(
                images, poses, K, self.roi, self.z_range, self.z_steps,
                refine_orientation=False, nm=None, interpolation=self.interpolation,
            )
        mean_alt = float(np.mean([p.t_z for p in poses]))
        return nadir_focal_plane(K, mean_alt, self.plane_z)

    def fit(self, images, poses):
        """Refine poses for the given views and build the integral image."""
        K = check_intrinsics(self.intrinsics)
        images, poses = check_images_poses(images, poses)
        if len(images) < 2:
            raise TooFewImages("at least two images are required for refinement")
        nm = self._nm_config()
        plane = self._resolve_plane(images, poses, K)
        if isinstance(self.strategy, StrategyConfig):
            strategy = self.strategy
        else:
            strategy = StrategyConfig(kind=self.strategy, patience=self.patience)
        result = run_strategy(
            images, poses, K, plane, self.roi,
            as_search_space(self.space), strategy, nm, self.interpolation,
            self.coverage_floor,
        )
        self.result_ = result
        self.plane_ = plane
        self.poses_ = result.corrected_poses
        self.included_ = result.included
        self.optimized_ = result.optimized
        self.objective_trace_ = result.objective_trace
        self.n_stop_ = result.n_stop
        self.parameter_evaluations_ = result.parameter_evaluations
        self.integral_ = result.integral
        self.n_images_ = len(images)
        return self

    def transform(self, images=None, poses=None) -> ImageRaster:
        """Fitted integral, or the integral of new views at given poses."""
        if not hasattr(self, "result_"):
            raise RuntimeError("PoseRefiner is not fitted")
        if images is None:
            return self.integral_
        if poses is None:
            raise ValueError("poses are required when images are given")
        K = check_intrinsics(self.intrinsics)
        images, poses = check_images_poses(images, poses)
        acc = IntegralAccumulator.for_plane(self.plane_)
        for i, (image, pose) in enumerate(zip(images, poses)):
            acc.accumulate(warp_to_plane(image, K, pose, self.plane_, self.interpolation), i)
        return acc.integral()

    def fit_transform(self, images, poses) -> ImageRaster:
        return self.fit(images, poses).transform()
