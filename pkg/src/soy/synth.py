"""Seeded synthetic ground-truth scenes.

A scene holds parameters drawn from the model priors, a camera placed so
the whole body is framed, correspondence records sampled from *visible*
surface points (checked against the scene's own depth buffer), exact
keypoints, and the rasterized silhouette. Noiseless scenes are exact
fixed points of the dense-correspondence loss, which makes them the
independent oracle for the fitter and the metrics.

All randomness comes from the portable xoshiro256++ stream in a fixed
draw order (shape, pose, record pixels, pixel noise), so identical seeds
give byte-identical scene files on any platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import Camera
from .losses import DenseCorrespondenceMap, Keypoints2D
from .model import BodyParams, NUM_POSE, SmplModel, skin
from .raster import DepthBuffer, SilhouetteMask, rasterize_vertices
from .rng import Xoshiro256pp


class SceneError(ValueError):
    """Scene generation could not satisfy its invariants."""


@dataclass
class SceneSpec:
    beta_mode: str = "prior"  # "zero" | "fixed" | "prior"
    beta_fixed: np.ndarray | None = None
    sigma_theta: float = 0.2
    n_records: int = 2000
    noise_px: float = 0.0
    size: tuple[int, int] = (224, 224)
    focal: float = 5000.0
    seed: int = 0

    def __post_init__(self):
        if self.beta_mode not in ("zero", "fixed", "prior"):
            raise ValueError("beta_mode must be zero|fixed|prior")
        if self.beta_mode == "fixed" and self.beta_fixed is None:
            raise ValueError("beta_mode=fixed requires beta_fixed")
        if self.n_records < 1:
            raise ValueError("n_records must be >= 1")
        if self.noise_px < 0:
            raise ValueError("noise_px must be non-negative")


@dataclass
class SynthScene:
    gt_params: BodyParams
    cam: Camera
    corr: DenseCorrespondenceMap
    keypoints: Keypoints2D
    mask: SilhouetteMask
    depth: DepthBuffer = field(repr=False, default=None)
    seed: int = 0
    spec: SceneSpec = None


def frame_camera(model: SmplModel, params: BodyParams, spec_size, focal) -> Camera:
    """Place cam_t (into params) so the posed mesh is fully framed.

    Depth solves the bounding sphere against the focal length with a 15%
    margin; the sphere center lands on the optical axis.
    """
    cam = Camera(focal=focal, image_size=tuple(spec_size))
    verts = skin(model, params).vertices
    center = 0.5 * (verts.min(axis=0) + verts.max(axis=0))
    radius = float(np.linalg.norm(verts - center, axis=1).max())
    w, h = cam.image_size
    depth = 1.15 * (radius * cam.focal / (min(w, h) / 2.0))
    if not np.isfinite(depth) or depth <= radius:
        raise SceneError("mesh cannot be framed at a positive depth")
    params.cam_t = np.array([0.0, 0.0, depth]) - center
    return cam


def _moller_trumbore(origin_free_dirs: np.ndarray, tri: np.ndarray):
    """Batched ray-triangle intersection from the origin.

    Returns (s, b1, b2) with the intersection point = s * d and
    barycentrics (1-b1-b2, b1, b2) on (v0, v1, v2).
    """
    v0, v1, v2 = tri[:, 0], tri[:, 1], tri[:, 2]
    d = origin_free_dirs
    e1 = v1 - v0
    e2 = v2 - v0
    pvec = np.cross(d, e2)
    det = np.einsum("ri,ri->r", e1, pvec)
    if (np.abs(det) < 1e-300).any():
        raise SceneError("degenerate ray-triangle intersection")
    inv = 1.0 / det
    tvec = -v0
    b1 = np.einsum("ri,ri->r", tvec, pvec) * inv
    qvec = np.cross(tvec, e1)
    b2 = np.einsum("ri,ri->r", d, qvec) * inv
    s = np.einsum("ri,ri->r", e2, qvec) * inv
    return s, b1, b2


def generate_scene(model: SmplModel, spec: SceneSpec) -> SynthScene:
    rng = Xoshiro256pp(spec.seed)
    B = model.num_betas

    if spec.beta_mode == "zero":
        beta = np.zeros(B)
        _ = rng.normals(B)  # keep the draw order identical across modes
    elif spec.beta_mode == "fixed":
        beta = np.asarray(spec.beta_fixed, dtype=np.float64).ravel()
        _ = rng.normals(B)
    else:
        L = np.linalg.cholesky(model.shape_prior_cov)
        beta = model.shape_prior_mean + L @ rng.normals(B)

    theta = spec.sigma_theta * rng.normals(NUM_POSE)
    params = BodyParams(theta, beta, np.zeros(3), np.zeros(3))
    cam = frame_camera(model, params, spec.size, spec.focal)
    w, h = cam.image_size

    verts_cam = skin(model, params).vertices + params.cam_t
    uv_all = cam.focal * verts_cam[:, :2] / verts_cam[:, 2:] + cam.principal_point
    if (
        uv_all[:, 0].min() < 0 or uv_all[:, 0].max() > w - 1
        or uv_all[:, 1].min() < 0 or uv_all[:, 1].max() > h - 1
    ):
        raise SceneError("framed mesh still projects outside the image")

    mask, depth = rasterize_vertices(verts_cam, model.faces, cam)
    fg = np.argwhere(mask.bitmap)  # (N, 2) [y, x], row-major scan order
    if len(fg) == 0:
        raise SceneError("rasterized mask is empty")

    picks = np.array([rng.below(len(fg)) for _ in range(spec.n_records)], dtype=np.int64)
    ys = fg[picks, 0].astype(np.float64)
    xs = fg[picks, 1].astype(np.float64)
    face_ids = depth.face[fg[picks, 0], fg[picks, 1]].astype(np.int64)

    dirs = np.stack(
        [
            (xs - cam.principal_point[0]) / cam.focal,
            (ys - cam.principal_point[1]) / cam.focal,
            np.ones_like(xs),
        ],
        axis=1,
    )
    tri = verts_cam[model.faces[face_ids]]  # (R, 3, 3)
    s, b1, b2 = _moller_trumbore(dirs, tri)
    zbuf_depth = depth.depth[fg[picks, 0], fg[picks, 1]]
    if np.abs(s - zbuf_depth).max() > 1e-6:
        raise SceneError("ray intersection disagrees with the depth buffer")

    bary = np.stack([1.0 - b1 - b2, b1, b2], axis=1)
    bary = np.clip(bary, 0.0, None)
    bary /= bary.sum(axis=1, keepdims=True)

    pixels = np.stack([xs, ys], axis=1)
    if spec.noise_px > 0:
        noise = spec.noise_px * rng.normals(2 * spec.n_records).reshape(spec.n_records, 2)
        pixels = pixels + noise
        pixels[:, 0] = np.clip(pixels[:, 0], 0.0, w - 1.0)
        pixels[:, 1] = np.clip(pixels[:, 1], 0.0, h - 1.0)

    corr = DenseCorrespondenceMap((w, h), pixels, face_ids, bary)

    joints_cam = model.joint_regressor @ verts_cam
    kp_uv = cam.focal * joints_cam[:, :2] / joints_cam[:, 2:] + cam.principal_point
    keypoints = Keypoints2D(np.concatenate([kp_uv, np.ones((len(kp_uv), 1))], axis=1))

    return SynthScene(
        gt_params=params,
        cam=cam,
        corr=corr,
        keypoints=keypoints,
        mask=mask,
        depth=depth,
        seed=spec.seed,
        spec=spec,
    )
