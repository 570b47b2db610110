import numpy as np
import pytest
from sklearn.base import clone

from synfocus import PoseRefiner, Roi, TooFewImages


@pytest.fixture(scope="module")
def fitted(small_views, small_capture):
    rng = np.random.default_rng(6)
    noisy = [
        p.replaced(t_x=p.t_x + rng.normal(0, 0.2), t_y=p.t_y + rng.normal(0, 0.2))
        for p in small_views.poses
    ]
    refiner = PoseRefiner(intrinsics=small_capture.intrinsics, space="three",
                          strategy="early", patience=1)
    return refiner.fit(small_views.images, noisy), noisy


class TestSklearnProtocol:
    def test_get_params_round_trip(self, small_capture):
        refiner = PoseRefiner(intrinsics=small_capture.intrinsics, space="two", patience=3)
        params = refiner.get_params()
        assert params["space"] == "two"
        assert params["patience"] == 3
        rebuilt = PoseRefiner(**params)
        assert rebuilt.get_params() == params

    def test_set_params(self):
        refiner = PoseRefiner()
        refiner.set_params(strategy="select", max_iterations=7)
        assert refiner.strategy == "select"
        assert refiner.max_iterations == 7

    def test_clone(self, small_capture):
        refiner = PoseRefiner(intrinsics=small_capture.intrinsics, space="four",
                              roi=Roi(2, 2, 8, 8))
        twin = clone(refiner)
        assert twin.space == "four"
        assert twin.roi == refiner.roi
        assert twin is not refiner

    def test_fit_returns_self(self, fitted):
        refiner, _ = fitted
        assert isinstance(refiner, PoseRefiner)


class TestFit:
    def test_fitted_attributes(self, fitted, small_views):
        refiner, _ = fitted
        n = len(small_views.images)
        assert len(refiner.poses_) == n
        assert len(refiner.included_) == n
        assert len(refiner.optimized_) == n
        assert refiner.n_stop_ <= n
        assert refiner.parameter_evaluations_ > 0
        assert refiner.integral_.shape == (128, 128)
        assert refiner.plane_.anchor_point == (0.0, 0.0, 0.0)
        assert len(refiner.objective_trace_) >= refiner.n_stop_

    def test_improves_objective(self, fitted):
        refiner, _ = fitted
        assert refiner.result_.final_objective >= refiner.result_.unrefined_objective

    def test_accepts_plain_arrays(self, small_views, small_capture):
        images = [img.samples for img in small_views.images[:3]]
        poses = [p.to_array() for p in small_views.poses[:3]]
        refiner = PoseRefiner(intrinsics=small_capture.intrinsics, strategy="brute",
                              max_iterations=1)
        refiner.fit(images, poses)
        assert refiner.n_stop_ == 3

    def test_requires_intrinsics(self, small_views):
        with pytest.raises(ValueError):
            PoseRefiner().fit(small_views.images[:2], small_views.poses[:2])

    def test_requires_two_images(self, small_views, small_capture):
        with pytest.raises(TooFewImages):
            PoseRefiner(intrinsics=small_capture.intrinsics).fit(
                small_views.images[:1], small_views.poses[:1])

    def test_mismatched_inputs(self, small_views, small_capture):
        with pytest.raises(ValueError):
            PoseRefiner(intrinsics=small_capture.intrinsics).fit(
                small_views.images[:3], small_views.poses[:2])


class TestTransform:
    def test_transform_without_fit_raises(self):
        with pytest.raises(RuntimeError):
            PoseRefiner().transform()

    def test_transform_returns_fitted_integral(self, fitted):
        refiner, _ = fitted
        assert refiner.transform() is refiner.integral_

    def test_fit_transform(self, small_views, small_capture):
        refiner = PoseRefiner(intrinsics=small_capture.intrinsics, strategy="brute",
                              max_iterations=1)
        out = refiner.fit_transform(small_views.images[:4], small_views.poses[:4])
        assert out is refiner.integral_

    def test_transform_new_views_without_refinement(self, fitted, small_views):
        refiner, _ = fitted
        out = refiner.transform(small_views.images[:4], small_views.poses[:4])
        assert out.shape == refiner.integral_.shape
        assert out.valid_mask.any()

    def test_transform_new_views_needs_poses(self, fitted, small_views):
        refiner, _ = fitted
        with pytest.raises(ValueError):
            refiner.transform(small_views.images[:2])
