"""Image rasters, plane warping, running integration and focus metrics.

Rasters carry a per-pixel validity mask. Pixels that fall outside a source
image or behind a camera are invalid and excluded from integration and from
every variance computation; they are never zero-filled, because artificial
zeros would corrupt the gray-level variance objective.

gray_level_variance (glv) is the population variance of the valid pixels
inside a region of interest. normalized_variance multiplies the variance of
the integral by the number of integrated images, which removes the contrast
drop that averaging more views would otherwise impose on the metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DegenerateView, GridMismatch, InsufficientPixels
from .geometry import CameraIntrinsics, FocalPlane, PoseParams, homography_to_plane

_MASK_EPS = 0.999


@lru_cache(maxsize=8)
def _raster_grid(resolution: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    pw, ph = resolution
    xr, yr = np.meshgrid(np.arange(pw, dtype=float), np.arange(ph, dtype=float))
    xr.setflags(write=False)
    yr.setflags(write=False)
    return xr, yr


@dataclass
class ImageRaster:
    """Single-channel floating-point image with a validity mask."""

    samples: np.ndarray
    valid_mask: np.ndarray

    @classmethod
    def from_array(cls, samples, valid_mask=None) -> "ImageRaster":
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 2:
            raise ValueError("samples must be a 2-D array")
        if valid_mask is None:
            valid_mask = np.isfinite(samples)
        else:
            valid_mask = np.asarray(valid_mask, dtype=bool)
            if valid_mask.shape != samples.shape:
                raise ValueError("valid_mask shape must match samples")
        if not np.all(np.isfinite(samples[valid_mask])):
            raise ValueError("samples must be finite wherever valid_mask is true")
        return cls(samples=samples, valid_mask=valid_mask)

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.samples.shape


@dataclass(frozen=True)
class Roi:
    """Rectangle in raster coordinates: x, y of the top-left pixel plus size."""

    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("roi must be nonempty")
        if self.x < 0 or self.y < 0:
            raise ValueError("roi must not extend beyond the raster")

    @classmethod
    def full(cls, shape: tuple[int, int]) -> "Roi":
        return cls(0, 0, shape[1], shape[0])

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.y, self.y + self.height), slice(self.x, self.x + self.width)

    def check_within(self, shape: tuple[int, int]) -> None:
        if self.y + self.height > shape[0] or self.x + self.width > shape[1]:
            raise ValueError(f"roi {self} exceeds raster shape {shape}")


def _roi_or_full(roi: Roi | None, shape: tuple[int, int]) -> Roi:
    if roi is None:
        return Roi.full(shape)
    roi.check_within(shape)
    return roi


def glv(image: ImageRaster, roi: Roi | None = None) -> float:
    """Population gray-level variance of the valid pixels inside roi."""
    roi = _roi_or_full(roi, image.shape)
    ys, xs = roi.slices
    mask = image.valid_mask[ys, xs]
    count = int(mask.sum())
    if count < 2:
        raise InsufficientPixels(f"roi holds {count} valid pixels, need at least 2")
    values = image.samples[ys, xs][mask]
    return float(values.var())


def sort_by_glv(images, roi: Roi | None = None) -> list[int]:
    """Indices of images ordered by non-increasing glv, ties by input order."""
    scores = []
    for i, image in enumerate(images):
        try:
            scores.append(glv(image, roi))
        except InsufficientPixels as exc:
            raise InsufficientPixels(f"image {i}: {exc}") from exc
    return sorted(range(len(images)), key=lambda i: (-scores[i], i))


def _bilinear(samples: np.ndarray, mask: np.ndarray, x: np.ndarray, y: np.ndarray,
              inside: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h, w = samples.shape
    x0 = np.floor(x)
    y0 = np.floor(y)
    np.clip(x0, 0, max(w - 2, 0), out=x0)
    np.clip(y0, 0, max(h - 2, 0), out=y0)
    fx = np.where(inside, x - x0, 0.0)
    fy = np.where(inside, y - y0, 0.0)
    xi = np.where(inside, x0, 0.0).astype(np.intp)
    yi = np.where(inside, y0, 0.0).astype(np.intp)
    base = yi * w + xi
    right = base + (xi < w - 1)
    down = base + w * (yi < h - 1)
    down_right = down + (xi < w - 1)
    all_valid = mask.all()
    flat = samples.ravel() if all_valid else np.where(mask, samples, 0.0).ravel()
    w11 = fx * fy
    w10 = fx - w11
    w01 = fy - w11
    w00 = 1.0 - fx - fy + w11
    values = (
        w00 * flat[base] + w10 * flat[right]
        + w01 * flat[down] + w11 * flat[down_right]
    )
    if all_valid:
        return values, np.ones_like(values)
    mf = mask.astype(float).ravel()
    weight = (
        w00 * mf[base] + w10 * mf[right]
        + w01 * mf[down] + w11 * mf[down_right]
    )
    return values, weight


def _nearest(samples: np.ndarray, mask: np.ndarray, x: np.ndarray, y: np.ndarray,
             inside: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h, w = samples.shape
    xi = np.clip(np.rint(x), 0, w - 1).astype(np.intp)
    yi = np.clip(np.rint(y), 0, h - 1).astype(np.intp)
    xi = np.where(inside, xi, 0)
    yi = np.where(inside, yi, 0)
    clean = samples if mask.all() else np.where(mask, samples, 0.0)
    return clean[yi, xi], mask[yi, xi].astype(float)


def warp_to_plane(
    image: ImageRaster,
    K: CameraIntrinsics,
    pose: PoseParams,
    plane: FocalPlane,
    interpolation: str = "bilinear",
) -> ImageRaster:
    """Resample a camera image onto the focal plane raster.

    Every plane raster pixel is mapped into the source image through the
    plane-to-image homography and sampled with bilinear interpolation
    (nearest-neighbor behind the flag). Pixels that map outside the source,
    onto invalid source pixels, or behind the camera are marked invalid.
    """
    if interpolation not in ("bilinear", "nearest"):
        raise ValueError("interpolation must be 'bilinear' or 'nearest'")
    H = homography_to_plane(K, pose, plane)
    if abs(np.linalg.det(H)) < 1e-15:
        raise DegenerateView("plane-to-image mapping is singular")
    xr, yr = _raster_grid(plane.raster_resolution)
    u = H[0, 0] * xr + H[0, 1] * yr + H[0, 2]
    v = H[1, 0] * xr + H[1, 1] * yr + H[1, 2]
    depth = H[2, 0] * xr + H[2, 1] * yr + H[2, 2]
    front = depth > 1e-12
    safe_depth = np.where(front, depth, 1.0)
    x = u / safe_depth
    y = v / safe_depth
    h, w = image.shape
    inside = front & (x >= 0.0) & (x <= w - 1) & (y >= 0.0) & (y <= h - 1)
    sampler = _bilinear if interpolation == "bilinear" else _nearest
    values, weight = sampler(image.samples, image.valid_mask, x, y, inside)
    valid = inside & (weight >= _MASK_EPS)
    return ImageRaster(samples=np.where(valid, values, 0.0), valid_mask=valid)


@dataclass
class IntegralAccumulator:
    """Running sum/count rasters plus the integration order and objective trace.

    Integral pixels are defined only where at least one contributing image
    was valid. The accumulator has a single-writer contract; clone() takes a
    snapshot safe for concurrent reads.
    """

    sum_raster: np.ndarray
    count_raster: np.ndarray
    n: int = 0
    order: list = field(default_factory=list)
    objective_trace: list = field(default_factory=list)

    @classmethod
    def empty(cls, shape: tuple[int, int]) -> "IntegralAccumulator":
        return cls(sum_raster=np.zeros(shape), count_raster=np.zeros(shape, dtype=np.int64))

    @classmethod
    def for_plane(cls, plane: FocalPlane) -> "IntegralAccumulator":
        pw, ph = plane.raster_resolution
        return cls.empty((ph, pw))

    @property
    def shape(self) -> tuple[int, int]:
        return self.sum_raster.shape

    def accumulate(self, warped: ImageRaster, source_index: int | None = None) -> "IntegralAccumulator":
        """Add one warped image; only its valid pixels contribute."""
        if warped.shape != self.shape:
            raise GridMismatch(f"warped raster {warped.shape} vs accumulator {self.shape}")
        mask = warped.valid_mask
        self.sum_raster[mask] += warped.samples[mask]
        self.count_raster[mask] += 1
        self.n += 1
        self.order.append(source_index)
        return self

    def integral(self) -> ImageRaster:
        """Per-pixel mean of the contributions; invalid where nothing landed."""
        covered = self.count_raster > 0
        values = np.zeros_like(self.sum_raster)
        np.divide(self.sum_raster, self.count_raster, out=values, where=covered)
        return ImageRaster(samples=values, valid_mask=covered)

    def clone(self) -> "IntegralAccumulator":
        return IntegralAccumulator(
            sum_raster=self.sum_raster.copy(),
            count_raster=self.count_raster.copy(),
            n=self.n,
            order=list(self.order),
            objective_trace=list(self.objective_trace),
        )


def accumulate(acc: IntegralAccumulator, warped: ImageRaster,
               source_index: int | None = None) -> IntegralAccumulator:
    return acc.accumulate(warped, source_index)


def integral(acc: IntegralAccumulator) -> ImageRaster:
    return acc.integral()


def normalized_variance(acc: IntegralAccumulator, roi: Roi | None = None) -> float:
    """n times the gray-level variance of the integral inside roi."""
    if acc.n < 1:
        raise InsufficientPixels("accumulator holds no images")
    return acc.n * glv(acc.integral(), roi)


def normalized_variance_if_added(acc: IntegralAccumulator, warped: ImageRaster,
                                 roi: Roi | None = None) -> float:
    """Normalized variance the accumulator would have after adding warped.

    Evaluates (n + 1) * glv of the would-be integral without mutating the
    accumulator, so candidate poses can be scored against a frozen snapshot.
    """
    if warped.shape != acc.shape:
        raise GridMismatch(f"warped raster {warped.shape} vs accumulator {acc.shape}")
    roi = _roi_or_full(roi, acc.shape)
    ys, xs = roi.slices
    mask = warped.valid_mask[ys, xs]
    total = acc.sum_raster[ys, xs] + np.where(mask, warped.samples[ys, xs], 0.0)
    count = acc.count_raster[ys, xs] + mask
    covered = count > 0
    n_px = int(covered.sum())
    if n_px < 2:
        raise InsufficientPixels(f"roi holds {n_px} covered pixels, need at least 2")
    values = total[covered] / count[covered]
    return (acc.n + 1) * float(values.var())
