"""Central finite-difference validation of every loss gradient.

Each trial draws a random configuration (shape ~ N(0, 0.5^2), pose
~ N(0, 0.2^2)), builds synthetic correspondence records, keypoints, and a
target parameter set, then compares analytic gradients against central
differences (h = 1e-5) for every loss.

Relative error uses a per-component denominator floored at 0.1% of the
gradient's max magnitude: central differences on near-zero components
carry cancellation noise from the large loss values, and a bare relative
error there would measure that noise, not the gradient. Any real error
above 1e-7 of the gradient scale still fails.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Camera
from .losses import (
    DenseCorrespondenceMap,
    Keypoints2D,
    LossWeights,
    loss_2d,
    loss_3d,
    loss_dp,
    loss_iter,
    loss_mesh,
    loss_prior,
    loss_reg,
    loss_tpose,
    _prior_parts,
)
from .model import BodyParams, NUM_FACES, NUM_POSE, SmplModel, skin
from .rng import Xoshiro256pp
from .synth import frame_camera

FD_STEP = 1e-5
TOLERANCE = 1e-4

LOSS_NAMES = ("dp", "tpose", "prior", "2d", "3d", "mesh", "iter", "reg")

# which parameter blocks each loss depends on
_BLOCKS = {
    "dp": ("beta", "theta", "gamma", "cam_t"),
    "tpose": ("beta",),
    "prior": ("beta", "theta"),
    "2d": ("beta", "theta", "gamma", "cam_t"),
    "3d": ("beta", "theta", "gamma"),
    "mesh": ("beta", "theta", "gamma"),
    "iter": ("beta", "theta", "gamma", "cam_t"),
    "reg": ("beta", "theta", "gamma", "cam_t"),
}

_GRAD_ATTR = {"beta": "d_beta", "theta": "d_theta", "gamma": "d_gamma", "cam_t": "d_cam_t"}


def max_rel_error(analytic: np.ndarray, fd: np.ndarray) -> float:
    scale = max(float(np.abs(analytic).max(initial=0.0)), float(np.abs(fd).max(initial=0.0)))
    floor = max(1e-3 * scale, 1e-8)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), floor)
    return float((np.abs(analytic - fd) / denom).max(initial=0.0))


@dataclass
class Scenario:
    model: SmplModel
    params: BodyParams
    cam: Camera
    corr: DenseCorrespondenceMap
    keypoints: Keypoints2D
    target: BodyParams
    target_vertices: np.ndarray
    weights_iter: LossWeights
    weights_reg: LossWeights


def _build_scenario(model: SmplModel, rng: Xoshiro256pp, n_records: int) -> Scenario:
    B = model.num_betas
    beta = 0.5 * rng.normals(B)
    theta = 0.2 * rng.normals(NUM_POSE)
    gamma = 0.1 * rng.normals(3)
    params = BodyParams(theta, beta, gamma, np.zeros(3))
    cam = frame_camera(model, params, (224, 224), 5000.0)

    target = BodyParams(
        theta + 0.1 * rng.normals(NUM_POSE), beta + 0.3 * rng.normals(B),
        gamma + 0.05 * rng.normals(3), params.cam_t.copy(),
    )

    w, h = cam.image_size
    faces = np.array([rng.below(NUM_FACES) for _ in range(n_records)], dtype=np.int64)
    r1 = rng.uniforms(n_records)
    r2 = rng.uniforms(n_records)
    bary = np.stack(
        [1.0 - np.sqrt(r1), np.sqrt(r1) * (1.0 - r2), np.sqrt(r1) * r2], axis=1
    )
    pixels = np.stack(
        [rng.uniforms(n_records) * (w - 1), rng.uniforms(n_records) * (h - 1)], axis=1
    )
    corr = DenseCorrespondenceMap((w, h), pixels, faces, bary)

    kp = np.zeros((24, 3))
    kp[:, 0] = rng.uniforms(24) * (w - 1)
    kp[:, 1] = rng.uniforms(24) * (h - 1)
    kp[:, 2] = rng.uniforms(24)
    keypoints = Keypoints2D(kp)
    return Scenario(
        model, params, cam, corr, keypoints, target, skin(model, target).vertices,
        LossWeights.stage2(), LossWeights.stage1(),
    )


def _loss_value(name: str, sc: Scenario, params: BodyParams) -> float:
    """Value-only evaluation (no Jacobians) for the finite differences."""
    model, cam = sc.model, sc.cam
    if name == "tpose":
        delta = params.beta - sc.target.beta
        return float(delta @ model.shape_gram @ delta)
    if name == "prior":
        m_theta, _, m_beta, _ = _prior_parts(model, params)
        return 1.0 * m_theta + 5.0 * m_beta
    verts = None
    if name in ("dp", "2d", "3d", "mesh", "iter", "reg"):
        verts = skin(model, params).vertices

    def dp_value():
        tri = model.faces[sc.corr.face]
        surf = np.einsum("rc,rci->ri", sc.corr.bary, verts[tri])
        pts = surf + params.cam_t
        uv = cam.focal * pts[:, :2] / pts[:, 2:] + cam.principal_point
        return float(((uv - sc.corr.pixels) ** 2).sum())

    def kp_value():
        X = model.joint_regressor @ verts + params.cam_t
        uv = cam.focal * X[:, :2] / X[:, 2:] + cam.principal_point
        resid = uv - sc.keypoints.joints[:, :2]
        return float((sc.keypoints.joints[:, 2] * (resid**2).sum(axis=1)).sum())

    if name == "dp":
        return dp_value()
    if name == "2d":
        return kp_value()
    if name == "iter":
        m_theta, _, m_beta, _ = _prior_parts(model, params)
        w = sc.weights_iter
        return w.dp * dp_value() + w.prior_theta * m_theta + w.prior_beta * m_beta

    target_verts = sc.target_vertices
    if name == "3d":
        diff = model.joint_regressor @ (verts - target_verts)
        return float((diff**2).sum())
    if name == "mesh":
        return float(((verts - target_verts) ** 2).sum())
    if name == "reg":
        w = sc.weights_reg
        delta = params.beta - sc.target.beta
        tpose = float(delta @ model.shape_gram @ delta)
        mesh = float(((verts - target_verts) ** 2).sum())
        diff = model.joint_regressor @ (verts - target_verts)
        j3d = float((diff**2).sum())
        return w.mesh * mesh + w.joints_3d * j3d + w.joints_2d * kp_value() + w.tpose * tpose
    raise ValueError(f"unknown loss {name!r}")


def _analytic_grads(name: str, sc: Scenario) -> dict[str, np.ndarray]:
    model, params, cam = sc.model, sc.params, sc.cam
    if name == "dp":
        t = loss_dp(model, params, cam, sc.corr)
    elif name == "tpose":
        t = loss_tpose(model, params.beta, sc.target.beta)
    elif name == "prior":
        t = loss_prior(model, params, 1.0, 5.0)
    elif name == "2d":
        t = loss_2d(model, params, cam, sc.keypoints)
    elif name == "3d":
        t = loss_3d(model, params, sc.target)
    elif name == "mesh":
        t = loss_mesh(model, params, sc.target)
    elif name == "iter":
        t = loss_iter(model, params, cam, sc.corr, sc.weights_iter)
    elif name == "reg":
        t = loss_reg(model, params, sc.target, sc.keypoints, sc.weights_reg, cam)
    else:
        raise ValueError(f"unknown loss {name!r}")
    return {blk: getattr(t, _GRAD_ATTR[blk]) for blk in _BLOCKS[name]}


@dataclass
class GradcheckResult:
    worst: dict[str, float]  # per-loss max relative error
    tolerance: float
    trials: int

    @property
    def passed(self) -> bool:
        return all(v < self.tolerance for v in self.worst.values())

    def failing(self) -> list[str]:
        return [k for k, v in self.worst.items() if v >= self.tolerance]


def run_gradcheck(
    model: SmplModel,
    trials: int = 20,
    seed: int = 0,
    *,
    n_records: int = 200,
    tolerance: float = TOLERANCE,
    losses: tuple[str, ...] = LOSS_NAMES,
    _corrupt: dict[str, float] | None = None,
) -> GradcheckResult:
    """Run the finite-difference suite; `_corrupt` injects gradient faults
    (testing only)."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    worst = {name: 0.0 for name in losses}
    for trial in range(trials):
        rng = Xoshiro256pp(seed * 1_000_003 + trial)
        sc = _build_scenario(model, rng, n_records)
        for name in losses:
            grads = _analytic_grads(name, sc)
            if _corrupt and name in _corrupt:
                grads = {k: (v + _corrupt[name] if k == "beta" else v) for k, v in grads.items()}
            for block, analytic in grads.items():
                base = getattr(sc.params, block)
                fd = np.zeros(len(base))
                for i in range(len(base)):
                    p_plus = sc.params.copy()
                    p_minus = sc.params.copy()
                    getattr(p_plus, block)[i] += FD_STEP
                    getattr(p_minus, block)[i] -= FD_STEP
                    fd[i] = (
                        _loss_value(name, sc, p_plus) - _loss_value(name, sc, p_minus)
                    ) / (2.0 * FD_STEP)
                worst[name] = max(worst[name], max_rel_error(analytic, fd))
    return GradcheckResult(worst=worst, tolerance=tolerance, trials=trials)
