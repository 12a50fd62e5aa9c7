"""Z-buffered software rasterization of the posed body, for silhouettes
and visibility queries.

Sampling is at pixel centers only (integer coordinates in the continuous
pixel frame). Faces with any vertex at or behind the near plane are
culled, not errored. Back-face culling is off: silhouettes need every
covering face.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .camera import Camera, Z_MIN
from .model import BodyParams, SmplModel, skin


@dataclass
class SilhouetteMask:
    size: tuple[int, int]  # (W, H)
    bitmap: np.ndarray  # (H, W) bool, indexed [y, x]

    def __post_init__(self):
        w, h = self.size
        if self.bitmap.shape != (h, w):
            raise ValueError(f"bitmap shape {self.bitmap.shape} does not match size {self.size}")


@dataclass
class DepthBuffer:
    size: tuple[int, int]
    depth: np.ndarray  # (H, W) f64, +inf where empty
    face: np.ndarray  # (H, W) int32, -1 where empty

    def __post_init__(self):
        w, h = self.size
        if self.depth.shape != (h, w) or self.face.shape != (h, w):
            raise ValueError("buffer shapes do not match size")


def rasterize_vertices(
    vertices: np.ndarray, faces: np.ndarray, cam: Camera, size: tuple[int, int] | None = None
) -> tuple[SilhouetteMask, DepthBuffer]:
    """Rasterize camera-frame vertices (translation already applied)."""
    w, h = size if size is not None else cam.image_size
    z = vertices[:, 2]
    in_front = z > Z_MIN
    uv = np.zeros((len(vertices), 2))
    uv[in_front] = (
        cam.focal * vertices[in_front, :2] / z[in_front, None] + cam.principal_point
    )

    keep = in_front[faces].all(axis=1)
    ids = np.nonzero(keep)[0].astype(np.int64)
    tri = np.ascontiguousarray(uv[faces[keep]])
    invz = np.ascontiguousarray(1.0 / z[faces[keep]])

    depth = np.full((h, w), np.inf)
    face_id = np.full((h, w), -1, dtype=np.int32)
    if len(ids):
        backend.fill_triangles(tri, invz, ids, depth, face_id)
    mask = SilhouetteMask(size=(w, h), bitmap=face_id >= 0)
    return mask, DepthBuffer(size=(w, h), depth=depth, face=face_id)


def rasterize(
    model: SmplModel, params: BodyParams, cam: Camera, size: tuple[int, int] | None = None
) -> tuple[SilhouetteMask, DepthBuffer]:
    """Pose the model and rasterize it; camera translation comes from params."""
    mesh = skin(model, params)
    verts_cam = mesh.vertices + params.cam_t
    return rasterize_vertices(verts_cam, model.faces, cam, size)
