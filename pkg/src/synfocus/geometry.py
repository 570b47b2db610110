"""Pinhole camera model, pose parameterization and plane-warping geometry.

COORDINATE CONVENTIONS
======================
World frame (right-handed):
    x east, y north, z up. The ground is the plane z = 0 and cameras fly
    at z > 0.

Camera frame (right-handed, computer-vision standard):
    x right, y down, z forward along the optical axis.

Mounting (zero-angle attitude):
    At alpha = beta = gamma = 0 the camera looks straight down (nadir):
    camera x aligns with world +x, camera y with world -y, camera z with
    world -z. The fixed mounting rotation is NADIR_MOUNT = diag(1, -1, -1).

Euler angles:
    alpha (about x / pitch), beta (about y / roll), gamma (about z / yaw),
    composed as R = rot_x(alpha) @ rot_y(beta) @ rot_z(gamma) with active
    single-axis rotations. The attitude is applied in the camera body frame,
    after the mounting:

        camera-to-world = NADIR_MOUNT @ R(alpha, beta, gamma)

Projection:
    A pose stores the camera center C in world coordinates. The projection
    rotation is R_wc = R(alpha, beta, gamma)^T @ NADIR_MOUNT and the
    translation column is derived as t = -R_wc @ C, so an image point is

        p ~ K @ (R_wc | t) @ (X, Y, Z, 1)^T

    followed by perspective division by the camera-frame depth.

Image frame:
    Pixel coordinates (x, y) with x right and y down; pixel centers sit at
    integer coordinates, (0, 0) being the top-left pixel center.

Plane rasters:
    A focal plane carries its own raster grid. In-plane axes are derived
    deterministically from the plane normal (see FocalPlane.axes); for a
    horizontal plane the raster x axis is world +x and the raster y axis is
    world -y, so the raster of a ground plane reads like a north-up map.

All angles are radians everywhere in this package; file formats and CLI
flags use degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import BehindCamera, DegenerateView, NoVisiblePoints

PARAM_NAMES = ("t_x", "t_y", "t_z", "alpha", "beta", "gamma")

NADIR_MOUNT = np.diag([1.0, -1.0, -1.0])


def _normalize_angle(value: float) -> float:
    """Map an angle to the interval (-pi, pi]."""
    r = math.remainder(float(value), math.tau)
    if r <= -math.pi:
        r += math.tau
    return r


def angle_difference(a: float, b: float) -> float:
    """Signed difference a - b wrapped into (-pi, pi]."""
    return _normalize_angle(a - b)


def rot_x(angle: float) -> np.ndarray:
    """Active rotation about the x axis."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    """Active rotation about the y axis."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    """Active rotation about the z axis."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_from_euler(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Attitude matrix R = rot_x(alpha) @ rot_y(beta) @ rot_z(gamma)."""
    return rot_x(alpha) @ rot_y(beta) @ rot_z(gamma)


def euler_from_rotation(R: np.ndarray) -> tuple[float, float, float]:
    """Invert rotation_from_euler.

    Returns (alpha, beta, gamma) with beta in [-pi/2, pi/2]. At the gimbal
    singularity (|beta| = pi/2) gamma is fixed to 0 and alpha absorbs the
    remaining freedom.
    """
    R = np.asarray(R, dtype=float)
    sb = float(np.clip(R[0, 2], -1.0, 1.0))
    beta = math.asin(sb)
    if abs(sb) > 1.0 - 1e-12:
        gamma = 0.0
        alpha = math.atan2(R[1, 0], R[1, 1])
        if sb < 0.0:
            alpha = -alpha
        return alpha, beta, gamma
    gamma = math.atan2(-R[0, 1], R[0, 0])
    alpha = math.atan2(-R[1, 2], R[2, 2])
    return alpha, beta, gamma


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics with a single focal length in pixels.

    image_size and principal_point are (width, height) / (cx, cy) in pixels.
    """

    focal_length_px: float
    principal_point: tuple[float, float]
    image_size: tuple[int, int]

    def __post_init__(self):
        if not self.focal_length_px > 0:
            raise ValueError("focal_length_px must be positive")
        w, h = self.image_size
        if w < 1 or h < 1:
            raise ValueError("image_size must be at least 1x1")
        cx, cy = self.principal_point
        if not (0.0 <= cx <= w - 1 and 0.0 <= cy <= h - 1):
            raise ValueError("principal point must lie inside the image bounds")

    @property
    def matrix(self) -> np.ndarray:
        """The 3x3 intrinsic matrix."""
        f = self.focal_length_px
        cx, cy = self.principal_point
        return np.array([[f, 0.0, cx], [0.0, f, cy], [0.0, 0.0, 1.0]])

    @classmethod
    def centered(cls, focal_length_px: float, image_size: tuple[int, int]) -> "CameraIntrinsics":
        """Intrinsics with the principal point at the geometric image center."""
        w, h = image_size
        return cls(focal_length_px, ((w - 1) / 2.0, (h - 1) / 2.0), (int(w), int(h)))


@dataclass(frozen=True)
class PoseParams:
    """Six extrinsic parameters of one view.

    t_x, t_y, t_z are the camera center in world meters; alpha, beta, gamma
    are the attitude angles in radians, normalized to (-pi, pi].
    """

    t_x: float
    t_y: float
    t_z: float
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            object.__setattr__(self, name, _normalize_angle(getattr(self, name)))
        for name in ("t_x", "t_y", "t_z"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.t_x, self.t_y, self.t_z])

    def to_array(self) -> np.ndarray:
        """Parameters as an array ordered like PARAM_NAMES."""
        return np.array([getattr(self, n) for n in PARAM_NAMES])

    @classmethod
    def from_array(cls, values) -> "PoseParams":
        return cls(*[float(v) for v in values])

    def replaced(self, **changes) -> "PoseParams":
        return replace(self, **changes)

    def shifted(self, param: str, delta: float) -> "PoseParams":
        """Copy with one named parameter offset by delta."""
        if param not in PARAM_NAMES:
            raise ValueError(f"unknown pose parameter {param!r}")
        return replace(self, **{param: getattr(self, param) + delta})


def camera_to_world_rotation(pose: PoseParams) -> np.ndarray:
    return NADIR_MOUNT @ rotation_from_euler(pose.alpha, pose.beta, pose.gamma)


def look_at_pose(center, target) -> PoseParams:
    """Pose at `center` whose optical axis points at `target`.

    The camera x axis stays as close to world +x as the viewing direction
    allows (the nadir mounting is the special case target straight below).
    """
    center = np.asarray(center, dtype=float)
    forward = np.asarray(target, dtype=float) - center
    norm = np.linalg.norm(forward)
    if norm == 0.0:
        raise ValueError("target must differ from the camera center")
    forward = forward / norm
    ref = np.array([1.0, 0.0, 0.0])
    if abs(forward @ ref) > 0.9:
        ref = np.array([0.0, 1.0, 0.0])
    right = ref - (ref @ forward) * forward
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    cam_to_world = np.column_stack([right, down, forward])
    alpha, beta, gamma = euler_from_rotation(NADIR_MOUNT @ cam_to_world)
    return PoseParams(center[0], center[1], center[2], alpha, beta, gamma)


def world_to_camera(pose: PoseParams) -> tuple[np.ndarray, np.ndarray]:
    """Projection rotation R_wc and translation t = -R_wc @ C."""
    R_wc = rotation_from_euler(pose.alpha, pose.beta, pose.gamma).T @ NADIR_MOUNT
    return R_wc, -R_wc @ pose.center


def projection_matrix(K: CameraIntrinsics, pose: PoseParams) -> np.ndarray:
    """The 3x4 matrix K @ (R_wc | t)."""
    R_wc, t = world_to_camera(pose)
    return K.matrix @ np.column_stack([R_wc, t])


def project_points(
    K: CameraIntrinsics, pose: PoseParams, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Project an (N, 3) array of world points.

    Returns (pixels (N, 2), depths (N,)). Depths are camera-frame z; points
    with depth <= 0 are behind the camera and their pixel coordinates are
    not meaningful. No exception is raised here so callers can mask.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    R_wc, t = world_to_camera(pose)
    cam = pts @ R_wc.T + t
    depth = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        x = K.focal_length_px * cam[:, 0] / depth + K.principal_point[0]
        y = K.focal_length_px * cam[:, 1] / depth + K.principal_point[1]
    return np.column_stack([x, y]), depth


def project_point(K: CameraIntrinsics, pose: PoseParams, point) -> tuple[float, float]:
    """Project one world point, raising BehindCamera for depth <= 0."""
    point = np.asarray(point, dtype=float)
    if not np.all(np.isfinite(point)):
        raise ValueError("world point must have finite coordinates")
    pix, depth = project_points(K, pose, point.reshape(1, 3))
    if depth[0] <= 0.0:
        raise BehindCamera(f"point {point.tolist()} has camera depth {depth[0]:.6g}")
    return float(pix[0, 0]), float(pix[0, 1])


def image_plane_error(
    K: CameraIntrinsics,
    pose: PoseParams,
    param: str,
    delta: float,
    sample_points,
) -> float:
    """Mean pixel displacement caused by perturbing one pose parameter.

    Projects every sample point under the original and the perturbed pose
    and averages the Euclidean pixel distance over the points visible in
    both. Raises NoVisiblePoints when no sample survives.
    """
    perturbed = pose.shifted(param, delta)
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    pix_a, depth_a = project_points(K, pose, pts)
    pix_b, depth_b = project_points(K, perturbed, pts)
    ok = (depth_a > 0.0) & (depth_b > 0.0)
    if not np.any(ok):
        raise NoVisiblePoints(f"no sample point visible under both poses (param={param})")
    return float(np.mean(np.linalg.norm(pix_a[ok] - pix_b[ok], axis=1)))


def compensating_translation(delta_angle: float, axis: str, t_z: float) -> float:
    """Translation equivalent to a small pitch/roll attitude error.

    A roll error delta in beta displaces the central image point exactly like
    a t_x shift of t_z * tan(delta); a pitch error in alpha corresponds to
    t_y the same way. The returned value is that equivalent shift, so adding
    the angle error and subtracting the returned translation cancels near
    the image center.
    """
    if axis not in ("alpha", "beta"):
        raise ValueError("axis must be 'alpha' or 'beta'")
    if not abs(delta_angle) < math.pi / 2:
        raise ValueError("|delta_angle| must be below pi/2")
    return t_z * math.tan(delta_angle)


@dataclass(frozen=True)
class FocalPlane:
    """A synthetic focal plane with its sampling raster.

    anchor_point is a world point on the plane and the raster center;
    unit_normal must have unit length; raster_extent is the covered size in
    meters (width, height) and raster_resolution the grid in pixels
    (width, height).
    """

    anchor_point: tuple[float, float, float]
    unit_normal: tuple[float, float, float]
    raster_extent: tuple[float, float]
    raster_resolution: tuple[int, int]

    def __post_init__(self):
        n = np.asarray(self.unit_normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("unit_normal must have length 1 (within 1e-9)")
        w, h = self.raster_resolution
        if w < 1 or h < 1:
            raise ValueError("raster_resolution must be at least 1x1")
        ex, ey = self.raster_extent
        if not (ex > 0 and ey > 0):
            raise ValueError("raster_extent must be positive")

    @classmethod
    def horizontal(
        cls, z: float, raster_extent: tuple[float, float], raster_resolution: tuple[int, int]
    ) -> "FocalPlane":
        """A z = const plane centered above the world origin."""
        return cls((0.0, 0.0, float(z)), (0.0, 0.0, 1.0), raster_extent, raster_resolution)

    @classmethod
    def from_normal(
        cls,
        anchor_point,
        normal,
        raster_extent: tuple[float, float],
        raster_resolution: tuple[int, int],
    ) -> "FocalPlane":
        """Build a plane from an arbitrary (non-unit) normal."""
        n = np.asarray(normal, dtype=float)
        norm = np.linalg.norm(n)
        if norm == 0.0:
            raise ValueError("normal must be nonzero")
        n = n / norm
        return cls(tuple(float(v) for v in anchor_point), tuple(float(v) for v in n),
                   tuple(raster_extent), tuple(raster_resolution))

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        """Deterministic in-plane raster axes (u along raster x, v along raster y).

        u is the normalized projection of world x onto the plane (world y when
        the normal is nearly parallel to world x); v = u x n. For a horizontal
        plane this yields u = +x, v = -y.
        """
        n = np.asarray(self.unit_normal, dtype=float)
        ref = np.array([1.0, 0.0, 0.0])
        if abs(n @ ref) > 0.9:
            ref = np.array([0.0, 1.0, 0.0])
        u = ref - (ref @ n) * n
        u = u / np.linalg.norm(u)
        v = np.cross(u, n)
        return u, v

    def raster_frame(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(origin, a, b): world point of raster pixel (0, 0) and per-pixel steps."""
        u, v = self.axes()
        w, h = self.raster_resolution
        ex, ey = self.raster_extent
        a = (ex / w) * u
        b = (ey / h) * v
        origin = np.asarray(self.anchor_point, dtype=float) - ((w - 1) / 2.0) * a - ((h - 1) / 2.0) * b
        return origin, a, b

    def world_points(self) -> np.ndarray:
        """World coordinates of all raster pixel centers, shape (H, W, 3)."""
        origin, a, b = self.raster_frame()
        w, h = self.raster_resolution
        xs = np.arange(w)[None, :, None]
        ys = np.arange(h)[:, None, None]
        return origin[None, None, :] + xs * a[None, None, :] + ys * b[None, None, :]

    def meters_per_pixel(self) -> tuple[float, float]:
        ex, ey = self.raster_extent
        w, h = self.raster_resolution
        return ex / w, ey / h


def nadir_focal_plane(K: CameraIntrinsics, altitude: float, z: float = 0.0) -> FocalPlane:
    """Horizontal plane at height z whose raster matches a nadir view's footprint.

    The raster resolution equals the image size; the pixel pitch equals the
    ground sampling distance (altitude - z) / focal_length.
    """
    if not altitude > z:
        raise ValueError("altitude must lie above the plane height")
    w, h = K.image_size
    gsd = (altitude - z) / K.focal_length_px
    return FocalPlane.horizontal(z, (w * gsd, h * gsd), (w, h))


def homography_to_plane(K: CameraIntrinsics, pose: PoseParams, plane: FocalPlane) -> np.ndarray:
    """3x3 mapping from plane raster coordinates to homogeneous image pixels.

    For raster coordinates (xr, yr), H @ (xr, yr, 1) is the homogeneous image
    point of the corresponding world point on the plane; the third component
    is the camera-frame depth, positive in front of the camera.

    Raises DegenerateView when the plane is edge-on to the viewing direction
    or the camera center lies on the plane.
    """
    n = np.asarray(plane.unit_normal, dtype=float)
    view_axis = camera_to_world_rotation(pose) @ np.array([0.0, 0.0, 1.0])
    if abs(view_axis @ n) < 1e-9:
        raise DegenerateView("focal plane is edge-on to the viewing direction")
    origin, a, b = plane.raster_frame()
    C = pose.center
    if abs((C - np.asarray(plane.anchor_point, dtype=float)) @ n) < 1e-12:
        raise DegenerateView("camera center lies on the focal plane")
    R_wc, t = world_to_camera(pose)
    return K.matrix @ R_wc @ np.column_stack([a, b, origin - C])
