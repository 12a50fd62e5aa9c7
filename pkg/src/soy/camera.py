"""Perspective projection with fixed intrinsics, plus its Jacobian.

Pixel coordinates are continuous with the origin at the top-left pixel
center; the default principal point is the grid center (W-1)/2, (H-1)/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Z_MIN = 1e-6  # meters; anything at or behind this depth is "behind camera"

DEFAULT_FOCAL = 5000.0
DEFAULT_IMAGE_SIZE = (224, 224)


class BehindCameraError(ValueError):
    """A projected point's camera depth fell at or below Z_MIN."""

    def __init__(self, index: int, depth: float, what: str = "point"):
        super().__init__(f"{what} {index} is behind the camera (depth {depth:.3e} m)")
        self.index = index
        self.depth = depth


@dataclass
class Camera:
    focal: float = DEFAULT_FOCAL
    principal_point: np.ndarray | None = None
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE  # (W, H)
    cam_t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.focal <= 0:
            raise ValueError("focal length must be positive")
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise ValueError("image size must be positive")
        if self.principal_point is None:
            self.principal_point = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
        self.principal_point = np.asarray(self.principal_point, dtype=np.float64).reshape(2)
        self.cam_t = np.asarray(self.cam_t, dtype=np.float64).reshape(3)

    def with_translation(self, cam_t: np.ndarray) -> "Camera":
        return Camera(self.focal, self.principal_point.copy(), self.image_size, cam_t)


def project(cam: Camera, points: np.ndarray, *, what: str = "point") -> np.ndarray:
    """Project N x 3 camera-frame-relative points: p = f * (X+t)_xy / (X+t)_z + pp."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64)) + cam.cam_t
    z = pts[:, 2]
    bad = z <= Z_MIN
    if bad.any():
        i = int(np.argmax(bad))
        raise BehindCameraError(i, float(z[i]), what=what)
    uv = cam.focal * pts[:, :2] / z[:, None] + cam.principal_point
    return uv if np.asarray(points).ndim == 2 else uv[0]


def project_jacobian(cam: Camera, point: np.ndarray) -> np.ndarray:
    """Analytic 2x3 Jacobian of the projection at a single 3D point."""
    return project_jacobians(cam, np.asarray(point, dtype=np.float64)[None, :])[0]


def project_jacobians(cam: Camera, points: np.ndarray, *, what: str = "point") -> np.ndarray:
    """Batched N x 2 x 3 projection Jacobians w.r.t. the 3D point (or t)."""
    pts = np.asarray(points, dtype=np.float64) + cam.cam_t
    z = pts[:, 2]
    bad = z <= Z_MIN
    if bad.any():
        i = int(np.argmax(bad))
        raise BehindCameraError(i, float(z[i]), what=what)
    f_over_z = cam.focal / z
    J = np.zeros((len(pts), 2, 3))
    J[:, 0, 0] = f_over_z
    J[:, 1, 1] = f_over_z
    J[:, 0, 2] = -cam.focal * pts[:, 0] / z**2
    J[:, 1, 2] = -cam.focal * pts[:, 1] / z**2
    return J
