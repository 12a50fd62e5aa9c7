"""Fitting losses and their analytic gradients.

The dense-correspondence loss re-evaluates surface points from (face,
barycentric) records on the *current* posed mesh, so its gradient flows
through the barycentric blend, the skinning function, and the projection.
The T-pose loss compares shape-only meshes, which are linear in the shape
coefficients; its value and gradient use the precomputed blendshape Gram
matrix. Priors are Mahalanobis distances through cached Cholesky factors.

Every gradient here is checked against central finite differences in the
test suite and by `soy gradcheck`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from .camera import Camera, Z_MIN, BehindCameraError
from .model import (
    NUM_FACES,
    NUM_JOINTS,
    NUM_POSE,
    BodyParams,
    SkinDerivatives,
    SmplModel,
    skin,
    skin_derivatives,
)


@dataclass
class DenseCorrespondenceMap:
    """Per-pixel records linking image pixels to mesh surface points."""

    image_size: tuple[int, int]  # (W, H)
    pixels: np.ndarray  # (R, 2) continuous pixel coordinates (u, v)
    face: np.ndarray  # (R,) face indices
    bary: np.ndarray  # (R, 3) barycentric coordinates

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64).reshape(-1, 2)
        self.face = np.asarray(self.face, dtype=np.int64).ravel()
        self.bary = np.asarray(self.bary, dtype=np.float64).reshape(-1, 3)
        n = len(self.pixels)
        if len(self.face) != n or len(self.bary) != n:
            raise ValueError("records have inconsistent lengths")
        if n:
            if self.face.min() < 0 or self.face.max() >= NUM_FACES:
                raise ValueError("face index out of range")
            if self.bary.min() < 0:
                raise ValueError("negative barycentric coordinate")
            err = np.abs(self.bary.sum(axis=1) - 1.0).max()
            if err > 1e-9:
                raise ValueError(f"barycentric coordinates sum to 1 +/- {err:.2e}")
            w, h = self.image_size
            u, v = self.pixels[:, 0], self.pixels[:, 1]
            if (u < 0).any() or (u >= w).any() or (v < 0).any() or (v >= h).any():
                raise ValueError("pixel coordinate outside the image")

    def __len__(self) -> int:
        return len(self.face)


@dataclass
class Keypoints2D:
    """2D joints with confidences; absent joints have confidence 0."""

    joints: np.ndarray  # (24, 3): x, y, confidence

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64).reshape(NUM_JOINTS, 3)
        conf = self.joints[:, 2]
        if (conf < 0).any() or (conf > 1).any():
            raise ValueError("confidences must lie in [0, 1]")


@dataclass
class LossWeights:
    """Non-negative per-term weights."""

    mesh: float = 0.0
    joints_3d: float = 0.0
    joints_2d: float = 0.0
    tpose: float = 0.0
    dp: float = 0.0
    prior_theta: float = 0.0
    prior_beta: float = 0.0

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 0:
                raise ValueError(f"loss weight {name} must be non-negative")

    @classmethod
    def stage1(cls) -> "LossWeights":
        return cls(mesh=0.1, joints_3d=1.0, joints_2d=1.0, tpose=0.1)

    @classmethod
    def stage2(cls) -> "LossWeights":
        return cls(dp=99.9, prior_theta=1.0, prior_beta=5.0)

    @classmethod
    def stage3(cls) -> "LossWeights":
        return cls(dp=99.9, prior_theta=25.0, prior_beta=25.0)


@dataclass
class LossTerm:
    """A single loss value with gradients for each parameter block."""

    value: float
    d_beta: np.ndarray | None = None
    d_theta: np.ndarray | None = None
    d_gamma: np.ndarray | None = None
    d_cam_t: np.ndarray | None = None


@dataclass
class LossReport:
    """Weighted total with per-term breakdown and assembled gradient."""

    total: float
    terms: dict[str, float] = field(default_factory=dict)
    d_beta: np.ndarray | None = None
    d_theta: np.ndarray | None = None
    d_gamma: np.ndarray | None = None
    d_cam_t: np.ndarray | None = None


def _project_with_jacobian(cam: Camera, pts_cam: np.ndarray, what: str):
    """uv, residual-ready Jacobians for camera-frame points (t applied)."""
    z = pts_cam[:, 2]
    bad = z <= Z_MIN
    if bad.any():
        i = int(np.argmax(bad))
        raise BehindCameraError(i, float(z[i]), what=what)
    uv = cam.focal * pts_cam[:, :2] / z[:, None] + cam.principal_point
    J = np.zeros((len(pts_cam), 2, 3))
    f_over_z = cam.focal / z
    J[:, 0, 0] = f_over_z
    J[:, 1, 1] = f_over_z
    J[:, 0, 2] = -cam.focal * pts_cam[:, 0] / z**2
    J[:, 1, 2] = -cam.focal * pts_cam[:, 1] / z**2
    return uv, J


def _split_grad(model: SmplModel, g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split a packed [beta | gamma | theta] gradient into blocks."""
    B = model.num_betas
    return g[:B], g[B + 3 :], g[B : B + 3]  # beta, theta, gamma


def loss_dp(
    model: SmplModel,
    params: BodyParams,
    cam: Camera,
    corr: DenseCorrespondenceMap,
    *,
    normalize: str = "sum",
    derivatives: SkinDerivatives | None = None,
) -> LossTerm:
    """Sum over records of squared reprojection error of surface points, px^2."""
    if len(corr) == 0:
        raise ValueError("correspondence map is empty")
    if normalize not in ("sum", "mean"):
        raise ValueError("normalize must be 'sum' or 'mean'")

    tri = model.faces[corr.face]  # (R, 3) vertex ids
    if derivatives is None:
        derivatives = skin_derivatives(model, params, active_idx=np.unique(tri))
    sd = derivatives

    surf = np.einsum("rc,rci->ri", corr.bary, sd.vertices[tri])
    uv, J = _project_with_jacobian(cam, surf + params.cam_t, what="correspondence record")
    resid = uv - corr.pixels  # (R, 2)
    scale = 1.0 / len(corr) if normalize == "mean" else 1.0
    value = scale * float((resid**2).sum())

    gpoint = 2.0 * scale * np.einsum("ri,rij->rj", resid, J)  # (R, 3)
    pos = np.searchsorted(sd.active_idx, tri)  # (R, 3) into the active set
    if not np.array_equal(sd.active_idx[np.minimum(pos, len(sd.active_idx) - 1)], tri):
        raise ValueError("derivatives do not cover the correspondence vertices")
    dsurf = np.einsum("rc,rcip->rip", corr.bary, sd.jac[pos])  # (R, 3, P)
    g = np.einsum("ri,rip->p", gpoint, dsurf)
    d_beta, d_theta, d_gamma = _split_grad(model, g)
    return LossTerm(value, d_beta, d_theta, d_gamma, gpoint.sum(axis=0))


def loss_tpose(model: SmplModel, beta: np.ndarray, beta_hat: np.ndarray) -> LossTerm:
    """Sum of squared T-pose vertex distances; pose is not an input by design."""
    beta = np.asarray(beta, dtype=np.float64).ravel()
    beta_hat = np.asarray(beta_hat, dtype=np.float64).ravel()
    if beta.shape != (model.num_betas,) or beta_hat.shape != (model.num_betas,):
        raise ValueError(f"shape coefficients must have length {model.num_betas}")
    delta = beta - beta_hat
    gram_delta = model.shape_gram @ delta
    value = float(delta @ gram_delta)
    return LossTerm(value, d_beta=2.0 * gram_delta)


def _prior_parts(model: SmplModel, params: BodyParams):
    d_theta = params.theta - model.pose_prior_mean
    sol_theta = cho_solve(model.pose_cov_cho, d_theta)
    m_theta = float(d_theta @ sol_theta)
    d_beta = params.beta - model.shape_prior_mean
    sol_beta = cho_solve(model.shape_cov_cho, d_beta)
    m_beta = float(d_beta @ sol_beta)
    return m_theta, sol_theta, m_beta, sol_beta


def loss_prior(
    model: SmplModel, params: BodyParams, lambda_prior_theta: float, lambda_prior_beta: float
) -> LossTerm:
    """Weighted Mahalanobis distances to the shape and pose priors."""
    m_theta, sol_theta, m_beta, sol_beta = _prior_parts(model, params)
    value = lambda_prior_theta * m_theta + lambda_prior_beta * m_beta
    return LossTerm(
        value,
        d_beta=2.0 * lambda_prior_beta * sol_beta,
        d_theta=2.0 * lambda_prior_theta * sol_theta,
    )


def _regressed_joints_grad(model: SmplModel, sd: SkinDerivatives):
    X = model.joint_regressor @ sd.vertices
    dX = np.tensordot(model.joint_regressor, sd.jac, axes=([1], [0]))  # (24, 3, P)
    return X, dX


def loss_2d(
    model: SmplModel,
    params: BodyParams,
    cam: Camera,
    kp: Keypoints2D,
    *,
    derivatives: SkinDerivatives | None = None,
) -> LossTerm:
    """Confidence-weighted squared pixel error of projected regressed joints."""
    sd = derivatives if derivatives is not None else skin_derivatives(model, params)
    if len(sd.active_idx) != len(sd.vertices):
        raise ValueError("loss_2d needs full-mesh derivatives")
    X, dX = _regressed_joints_grad(model, sd)
    uv, J = _project_with_jacobian(cam, X + params.cam_t, what="joint")
    conf = kp.joints[:, 2]
    resid = uv - kp.joints[:, :2]
    value = float((conf * (resid**2).sum(axis=1)).sum())
    gpoint = 2.0 * conf[:, None] * np.einsum("ji,jik->jk", resid, J)  # (24, 3)
    g = np.einsum("ji,jip->p", gpoint, dX)
    d_beta, d_theta, d_gamma = _split_grad(model, g)
    return LossTerm(value, d_beta, d_theta, d_gamma, gpoint.sum(axis=0))


def loss_3d(
    model: SmplModel,
    params: BodyParams,
    params_hat: BodyParams,
    *,
    derivatives: SkinDerivatives | None = None,
    target_joints: np.ndarray | None = None,
) -> LossTerm:
    """Squared distance between regressed 3D joints of the two posed meshes."""
    sd = derivatives if derivatives is not None else skin_derivatives(model, params)
    if len(sd.active_idx) != len(sd.vertices):
        raise ValueError("loss_3d needs full-mesh derivatives")
    if target_joints is None:
        target_joints = model.joint_regressor @ skin(model, params_hat).vertices
    X, dX = _regressed_joints_grad(model, sd)
    diff = X - target_joints
    value = float((diff**2).sum())
    g = 2.0 * np.einsum("ji,jip->p", diff, dX)
    d_beta, d_theta, d_gamma = _split_grad(model, g)
    return LossTerm(value, d_beta, d_theta, d_gamma)


def loss_mesh(
    model: SmplModel,
    params: BodyParams,
    params_hat: BodyParams,
    *,
    derivatives: SkinDerivatives | None = None,
    target_vertices: np.ndarray | None = None,
) -> LossTerm:
    """Squared distance between posed mesh vertices of the two parameter sets."""
    sd = derivatives if derivatives is not None else skin_derivatives(model, params)
    if len(sd.active_idx) != len(sd.vertices):
        raise ValueError("loss_mesh needs full-mesh derivatives")
    if target_vertices is None:
        target_vertices = skin(model, params_hat).vertices
    diff = sd.vertices - target_vertices
    value = float((diff**2).sum())
    g = 2.0 * np.einsum("vi,vip->p", diff, sd.jac)
    d_beta, d_theta, d_gamma = _split_grad(model, g)
    return LossTerm(value, d_beta, d_theta, d_gamma)


class NumericalError(ArithmeticError):
    """A loss term produced a non-finite value or gradient."""

    def __init__(self, term: str, detail: str):
        super().__init__(f"numerical failure in term '{term}': {detail}")
        self.term = term


def _assemble(model: SmplModel, weighted: list[tuple[str, float, LossTerm]], terms: dict) -> LossReport:
    B = model.num_betas
    total = 0.0
    g_beta = np.zeros(B)
    g_theta = np.zeros(NUM_POSE)
    g_gamma = np.zeros(3)
    g_t = np.zeros(3)
    for name, lam, term in weighted:
        if not np.isfinite(term.value):
            raise NumericalError(name, "non-finite value")
        total += lam * term.value
        if lam == 0.0:
            continue
        for label, grad, acc in (
            ("d_beta", term.d_beta, g_beta),
            ("d_theta", term.d_theta, g_theta),
            ("d_gamma", term.d_gamma, g_gamma),
            ("d_cam_t", term.d_cam_t, g_t),
        ):
            if grad is None:
                continue
            if not np.isfinite(grad).all():
                raise NumericalError(name, f"non-finite gradient ({label})")
            acc += lam * grad
    return LossReport(total, terms, g_beta, g_theta, g_gamma, g_t)


def loss_reg(
    model: SmplModel,
    params: BodyParams,
    params_hat: BodyParams,
    kp: Keypoints2D,
    weights: LossWeights,
    cam: Camera,
    *,
    derivatives: SkinDerivatives | None = None,
) -> LossReport:
    """Regression supervision: weighted mesh + 3D joints + 2D joints + T-pose."""
    sd = derivatives if derivatives is not None else skin_derivatives(model, params)
    t_mesh = loss_mesh(model, params, params_hat, derivatives=sd)
    t_3d = loss_3d(model, params, params_hat, derivatives=sd)
    t_2d = loss_2d(model, params, cam, kp, derivatives=sd)
    t_tpose = loss_tpose(model, params.beta, params_hat.beta)
    terms = {
        "mesh": t_mesh.value,
        "joints_3d": t_3d.value,
        "joints_2d": t_2d.value,
        "tpose": t_tpose.value,
    }
    return _assemble(
        model,
        [
            ("mesh", weights.mesh, t_mesh),
            ("joints_3d", weights.joints_3d, t_3d),
            ("joints_2d", weights.joints_2d, t_2d),
            ("tpose", weights.tpose, t_tpose),
        ],
        terms,
    )


def loss_iter(
    model: SmplModel,
    params: BodyParams,
    cam: Camera,
    corr: DenseCorrespondenceMap,
    weights: LossWeights,
    *,
    dp_normalize: str = "sum",
    derivatives: SkinDerivatives | None = None,
) -> LossReport:
    """Refinement energy: weighted dense-correspondence term plus priors."""
    t_dp = loss_dp(model, params, cam, corr, normalize=dp_normalize, derivatives=derivatives)
    m_theta, sol_theta, m_beta, sol_beta = _prior_parts(model, params)
    t_ptheta = LossTerm(m_theta, d_theta=2.0 * sol_theta)
    t_pbeta = LossTerm(m_beta, d_beta=2.0 * sol_beta)
    terms = {"dp": t_dp.value, "prior_theta": m_theta, "prior_beta": m_beta}
    return _assemble(
        model,
        [
            ("dp", weights.dp, t_dp),
            ("prior_theta", weights.prior_theta, t_ptheta),
            ("prior_beta", weights.prior_beta, t_pbeta),
        ],
        terms,
    )


def evaluate_objective(
    model: SmplModel,
    params: BodyParams,
    cam: Camera,
    weights: LossWeights,
    *,
    corr: DenseCorrespondenceMap | None = None,
    keypoints: Keypoints2D | None = None,
    target: BodyParams | None = None,
    target_vertices: np.ndarray | None = None,
    dp_normalize: str = "sum",
) -> LossReport:
    """General weighted objective over whichever data terms are supplied.

    Term values are reported whenever their data is present, even at zero
    weight (so traces show them); gradients are only accumulated for
    weighted terms. Shared skinning derivatives are computed once, over
    the smallest sufficient vertex set.
    """
    have_target = target is not None or target_vertices is not None
    needs_full = (have_target and (weights.mesh > 0 or weights.joints_3d > 0)) or (
        keypoints is not None and weights.joints_2d > 0
    )
    if needs_full:
        sd = skin_derivatives(model, params)
    elif corr is not None and len(corr) and weights.dp > 0:
        sd = skin_derivatives(model, params, active_idx=np.unique(model.faces[corr.face]))
    else:
        sd = skin_derivatives(model, params, active_idx=np.arange(0, dtype=np.int64))

    weighted: list[tuple[str, float, LossTerm]] = []
    terms: dict[str, float] = {}

    if corr is not None and len(corr):
        if weights.dp > 0:
            t_dp = loss_dp(model, params, cam, corr, normalize=dp_normalize, derivatives=sd)
        else:
            tri = model.faces[corr.face]
            surf = np.einsum("rc,rci->ri", corr.bary, sd.vertices[tri])
            uv, _ = _project_with_jacobian(cam, surf + params.cam_t, what="correspondence record")
            resid = uv - corr.pixels
            scale = 1.0 / len(corr) if dp_normalize == "mean" else 1.0
            t_dp = LossTerm(scale * float((resid**2).sum()))
        terms["dp"] = t_dp.value
        weighted.append(("dp", weights.dp, t_dp))

    m_theta, sol_theta, m_beta, sol_beta = _prior_parts(model, params)
    terms["prior_theta"] = m_theta
    terms["prior_beta"] = m_beta
    weighted.append(("prior_theta", weights.prior_theta, LossTerm(m_theta, d_theta=2.0 * sol_theta)))
    weighted.append(("prior_beta", weights.prior_beta, LossTerm(m_beta, d_beta=2.0 * sol_beta)))

    if have_target:
        if target_vertices is None:
            target_vertices = skin(model, target).vertices
        if weights.mesh > 0:
            t_mesh = loss_mesh(model, params, target, derivatives=sd, target_vertices=target_vertices)
        else:
            t_mesh = LossTerm(float(((sd.vertices - target_vertices) ** 2).sum()))
        terms["mesh"] = t_mesh.value
        weighted.append(("mesh", weights.mesh, t_mesh))

        if weights.joints_3d > 0:
            t3 = loss_3d(model, params, target, derivatives=sd,
                         target_joints=model.joint_regressor @ target_vertices)
        else:
            diff = model.joint_regressor @ (sd.vertices - target_vertices)
            t3 = LossTerm(float((diff**2).sum()))
        terms["joints_3d"] = t3.value
        weighted.append(("joints_3d", weights.joints_3d, t3))

        if target is not None:
            tt = loss_tpose(model, params.beta, target.beta)
            terms["tpose"] = tt.value
            weighted.append(("tpose", weights.tpose, tt))

    if keypoints is not None:
        if weights.joints_2d > 0:
            t2 = loss_2d(model, params, cam, keypoints, derivatives=sd)
        else:
            X = model.joint_regressor @ sd.vertices
            uv, _ = _project_with_jacobian(cam, X + params.cam_t, what="joint")
            conf = keypoints.joints[:, 2]
            resid = uv - keypoints.joints[:, :2]
            t2 = LossTerm(float((conf * (resid**2).sum(axis=1)).sum()))
        terms["joints_2d"] = t2.value
        weighted.append(("joints_2d", weights.joints_2d, t2))

    return _assemble(model, weighted, terms)
