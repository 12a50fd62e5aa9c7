"""Body model: loading, validation, skinning, joint regression.

The skinning function follows the usual linear-blend-skinning recipe:
shape blendshapes, pose-corrective blendshapes driven by the 23 body
rotations, a rigid transform chain along the kinematic tree, and a
per-vertex weighted blend. The global rotation is composed as the root
rotation of the chain, which is algebraically identical to rotating the
posed mesh about the root joint afterwards.

`skin_derivatives` returns closed-form vertex Jacobians with respect to
(beta, gamma, theta), optionally restricted to an active vertex subset;
they are the backbone of every loss gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor

from . import smf
from .rotation import rodrigues, rodrigues_with_jacobian

NUM_VERTICES = 6890
NUM_JOINTS = 24
NUM_FACES = 13776
NUM_POSE = 69  # 23 body joints x 3 axis-angle components
NUM_POSE_BLEND = 207  # 23 x 9 rotation-matrix deviations

PARENT_SENTINEL = 0xFFFFFFFF

REQUIRED_CHUNKS = (
    "v_template",
    "shapedirs",
    "posedirs",
    "joint_regressor",
    "skin_weights",
    "parents",
    "faces",
    "shape_prior_mean",
    "shape_prior_cov",
    "pose_prior_mean",
    "pose_prior_cov",
)


class InvariantError(smf.SmfError):
    """A chunk parsed fine but violates a model invariant."""

    def __init__(self, chunk: str, detail: str):
        super().__init__(f"chunk '{chunk}': {detail}")
        self.chunk = chunk


def _frozen(a: np.ndarray, dtype=np.float64) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class SmplModel:
    """Immutable model assets; safe to share across threads."""

    v_template: np.ndarray  # (6890, 3)
    shapedirs: np.ndarray  # (6890, 3, B)
    posedirs: np.ndarray  # (6890, 3, 207)
    joint_regressor: np.ndarray  # (24, 6890)
    skin_weights: np.ndarray  # (6890, 24)
    parents: np.ndarray  # (24,), parents[0] == -1
    faces: np.ndarray  # (13776, 3)
    shape_prior_mean: np.ndarray  # (B,)
    shape_prior_cov: np.ndarray  # (B, B)
    pose_prior_mean: np.ndarray  # (69,)
    pose_prior_cov: np.ndarray  # (69, 69)
    # derived, cached at construction
    shape_cov_cho: tuple = field(repr=False, default=None)
    pose_cov_cho: tuple = field(repr=False, default=None)
    shape_gram: np.ndarray = field(repr=False, default=None)  # (B, B)
    joint_shapedirs: np.ndarray = field(repr=False, default=None)  # (B, 24, 3)

    @property
    def num_betas(self) -> int:
        return self.shapedirs.shape[2]


@dataclass
class BodyParams:
    """Optimization state: body pose, shape, global rotation, camera translation."""

    theta: np.ndarray  # (69,) radians
    beta: np.ndarray  # (B,)
    gamma: np.ndarray  # (3,) radians
    cam_t: np.ndarray  # (3,) meters

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64).reshape(NUM_POSE)
        self.beta = np.asarray(self.beta, dtype=np.float64).ravel()
        self.gamma = np.asarray(self.gamma, dtype=np.float64).reshape(3)
        self.cam_t = np.asarray(self.cam_t, dtype=np.float64).reshape(3)
        for name in ("theta", "beta", "gamma", "cam_t"):
            if not np.isfinite(getattr(self, name)).all():
                raise ValueError(f"non-finite values in {name}")

    @classmethod
    def zeros(cls, num_betas: int) -> "BodyParams":
        return cls(np.zeros(NUM_POSE), np.zeros(num_betas), np.zeros(3), np.zeros(3))

    def copy(self) -> "BodyParams":
        return BodyParams(self.theta.copy(), self.beta.copy(), self.gamma.copy(), self.cam_t.copy())

    def canonicalized(self, *, wrap_gamma: bool = True) -> "BodyParams":
        """Wrap every axis-angle sub-vector norm into [0, 2*pi).

        Sub-vectors already in range are returned bit-identical.
        """
        out = self.copy()
        blocks = out.theta.reshape(23, 3)
        for i in range(23):
            blocks[i] = _wrap_axis_angle(blocks[i])
        if wrap_gamma:
            out.gamma = _wrap_axis_angle(out.gamma)
        return out


def _wrap_axis_angle(w: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(w))
    if n < 2.0 * np.pi:
        return w
    wrapped = np.fmod(n, 2.0 * np.pi)
    return w * (wrapped / n)


@dataclass
class Mesh:
    vertices: np.ndarray  # (6890, 3)
    faces: np.ndarray  # shared reference to SmplModel.faces

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        if self.vertices.shape != (NUM_VERTICES, 3):
            raise ValueError(f"expected ({NUM_VERTICES}, 3) vertices, got {self.vertices.shape}")
        if not np.isfinite(self.vertices).all():
            raise ValueError("non-finite vertex coordinates")


@dataclass
class Joints3D:
    joints: np.ndarray  # (24, 3)


def model_from_arrays(chunks: dict[str, np.ndarray]) -> SmplModel:
    """Validate raw chunk arrays and build an immutable model."""
    for name in REQUIRED_CHUNKS:
        if name not in chunks:
            raise smf.MissingChunkError(name)

    def shaped(name: str, shape: tuple) -> np.ndarray:
        arr = chunks[name]
        if tuple(arr.shape) != shape:
            raise smf.ChunkShapeError(name, f"expected shape {shape}, got {tuple(arr.shape)}")
        return arr

    shapedirs = chunks["shapedirs"]
    if shapedirs.ndim != 3 or shapedirs.shape[:2] != (NUM_VERTICES, 3) or shapedirs.shape[2] < 1:
        raise smf.ChunkShapeError(
            "shapedirs", f"expected ({NUM_VERTICES}, 3, B>=1), got {tuple(shapedirs.shape)}"
        )
    num_betas = shapedirs.shape[2]

    v_template = shaped("v_template", (NUM_VERTICES, 3))
    posedirs = shaped("posedirs", (NUM_VERTICES, 3, NUM_POSE_BLEND))
    joint_regressor = shaped("joint_regressor", (NUM_JOINTS, NUM_VERTICES))
    skin_weights = shaped("skin_weights", (NUM_VERTICES, NUM_JOINTS))
    parents_raw = shaped("parents", (NUM_JOINTS,))
    faces = shaped("faces", (NUM_FACES, 3))
    shape_prior_mean = shaped("shape_prior_mean", (num_betas,))
    shape_prior_cov = shaped("shape_prior_cov", (num_betas, num_betas))
    pose_prior_mean = shaped("pose_prior_mean", (NUM_POSE,))
    pose_prior_cov = shaped("pose_prior_cov", (NUM_POSE, NUM_POSE))

    for name in ("v_template", "shapedirs", "posedirs", "joint_regressor", "skin_weights",
                 "shape_prior_mean", "shape_prior_cov", "pose_prior_mean", "pose_prior_cov"):
        if not np.isfinite(np.asarray(chunks[name], dtype=np.float64)).all():
            raise InvariantError(name, "contains non-finite values")

    weights = np.asarray(skin_weights, dtype=np.float64)
    if (weights < 0).any():
        raise InvariantError("skin_weights", "negative weight found")
    row_err = np.abs(weights.sum(axis=1) - 1.0).max()
    if row_err > 1e-9:
        raise InvariantError("skin_weights", f"row sums deviate from 1 by {row_err:.3e}")

    faces_i = np.asarray(faces, dtype=np.int64)
    if faces_i.min() < 0 or faces_i.max() >= NUM_VERTICES:
        raise InvariantError("faces", "vertex index out of range")

    parents = np.asarray(parents_raw, dtype=np.int64).copy()
    if parents[0] == PARENT_SENTINEL:
        parents[0] = -1
    if parents[0] != -1:
        raise InvariantError("parents", "parents[0] must be the root sentinel")
    for k in range(1, NUM_JOINTS):
        if not 0 <= parents[k] < k:
            raise InvariantError("parents", f"parents[{k}]={parents[k]} is not < {k}")

    def spd_factor(name: str, cov: np.ndarray):
        cov = np.asarray(cov, dtype=np.float64)
        asym = np.abs(cov - cov.T).max()
        if asym > 1e-9 * max(1.0, np.abs(cov).max()):
            raise InvariantError(name, f"not symmetric (max asymmetry {asym:.3e})")
        try:
            return cho_factor(cov, lower=True)
        except np.linalg.LinAlgError as exc:
            raise InvariantError(name, f"not positive definite: {exc}") from exc

    shape_cho = spd_factor("shape_prior_cov", shape_prior_cov)
    pose_cho = spd_factor("pose_prior_cov", pose_prior_cov)

    shapedirs64 = np.asarray(shapedirs, dtype=np.float64)
    shape_gram = np.einsum("vib,vic->bc", shapedirs64, shapedirs64)
    joint_shapedirs = np.einsum(
        "jv,vib->bji", np.asarray(joint_regressor, dtype=np.float64), shapedirs64
    )

    return SmplModel(
        v_template=_frozen(v_template),
        shapedirs=_frozen(shapedirs),
        posedirs=_frozen(posedirs),
        joint_regressor=_frozen(joint_regressor),
        skin_weights=_frozen(weights),
        parents=_frozen(parents, dtype=np.int64),
        faces=_frozen(faces_i, dtype=np.int64),
        shape_prior_mean=_frozen(shape_prior_mean),
        shape_prior_cov=_frozen(shape_prior_cov),
        pose_prior_mean=_frozen(pose_prior_mean),
        pose_prior_cov=_frozen(pose_prior_cov),
        shape_cov_cho=shape_cho,
        pose_cov_cho=pose_cho,
        shape_gram=_frozen(shape_gram),
        joint_shapedirs=_frozen(joint_shapedirs),
    )


def load_model(path: str | Path) -> SmplModel:
    """Load and validate an SMF model file."""
    chunks = smf.read_chunks(path)
    return model_from_arrays(chunks)


def save_model(model: SmplModel, path: str | Path) -> None:
    parents = np.asarray(model.parents, dtype=np.int64).copy()
    parents[0] = PARENT_SENTINEL
    chunks = {
        "v_template": model.v_template,
        "shapedirs": model.shapedirs,
        "posedirs": model.posedirs,
        "joint_regressor": model.joint_regressor,
        "skin_weights": model.skin_weights,
        "parents": parents.astype(np.uint32),
        "faces": model.faces.astype(np.uint32),
        "shape_prior_mean": model.shape_prior_mean,
        "shape_prior_cov": model.shape_prior_cov,
        "pose_prior_mean": model.pose_prior_mean,
        "pose_prior_cov": model.pose_prior_cov,
    }
    smf.write_chunks(path, chunks)


def _check_dims(model: SmplModel, params: BodyParams) -> None:
    if params.beta.shape[0] != model.num_betas:
        raise ValueError(
            f"beta has {params.beta.shape[0]} coefficients, model expects {model.num_betas}"
        )


def _forward(model: SmplModel, params: BodyParams):
    """Shared forward pass. Returns everything the Jacobians reuse."""
    B = model.num_betas
    v_shaped = model.v_template + (
        model.shapedirs.reshape(-1, B) @ params.beta
    ).reshape(NUM_VERTICES, 3)
    joints = model.joint_regressor @ v_shaped  # (24, 3) rest joints

    rotvecs = np.concatenate([params.gamma[None, :], params.theta.reshape(23, 3)], axis=0)
    R = rodrigues(rotvecs)  # (24, 3, 3)
    pose_feature = (R[1:] - np.eye(3)).reshape(NUM_POSE_BLEND)
    v_posed = v_shaped + (
        model.posedirs.reshape(-1, NUM_POSE_BLEND) @ pose_feature
    ).reshape(NUM_VERTICES, 3)

    A = np.zeros((NUM_JOINTS, 4, 4))
    A[:, 3, 3] = 1.0
    A[:, :3, :3] = R
    A[0, :3, 3] = joints[0]
    A[1:, :3, 3] = joints[1:] - joints[model.parents[1:]]

    G = np.empty((NUM_JOINTS, 4, 4))
    G[0] = A[0]
    for k in range(1, NUM_JOINTS):
        G[k] = G[model.parents[k]] @ A[k]

    Rg = G[:, :3, :3]
    tg = G[:, :3, 3] - np.einsum("kij,kj->ki", Rg, joints)
    Gp = np.concatenate([Rg, tg[:, :, None]], axis=2)  # (24, 3, 4)

    T = (model.skin_weights @ Gp.reshape(NUM_JOINTS, 12)).reshape(-1, 3, 4)
    verts = (T[:, :, :3] * v_posed[:, None, :]).sum(axis=2) + T[:, :, 3]
    return verts, v_posed, joints, rotvecs, A, G, T


def skin(model: SmplModel, params: BodyParams) -> Mesh:
    """Evaluate the skinning function S(theta, beta, gamma) -> posed mesh."""
    _check_dims(model, params)
    verts, *_ = _forward(model, params)
    return Mesh(vertices=verts, faces=model.faces)


@dataclass
class SkinDerivatives:
    """Posed vertices plus Jacobians at the active vertex subset.

    Jacobian column order is [beta (B), gamma (3), theta (69)].
    """

    vertices: np.ndarray  # (6890, 3) full posed mesh
    active_idx: np.ndarray  # (Va,) indices into vertices
    jac: np.ndarray  # (Va, 3, B + 72)
    num_betas: int

    @property
    def d_beta(self) -> np.ndarray:
        return self.jac[:, :, : self.num_betas]

    @property
    def d_gamma(self) -> np.ndarray:
        return self.jac[:, :, self.num_betas : self.num_betas + 3]

    @property
    def d_theta(self) -> np.ndarray:
        return self.jac[:, :, self.num_betas + 3 :]


def skin_derivatives(
    model: SmplModel, params: BodyParams, active_idx: np.ndarray | None = None
) -> SkinDerivatives:
    """Forward pass with analytic vertex Jacobians w.r.t. (beta, gamma, theta).

    `active_idx` restricts the (costly) per-vertex Jacobian to a subset;
    the forward vertices are always computed for the full mesh.
    """
    _check_dims(model, params)
    B = model.num_betas
    n_rot = 3 + NUM_POSE  # gamma + theta
    P = B + n_rot

    verts, v_posed, joints, rotvecs, A, G, T = _forward(model, params)

    if active_idx is None:
        active_idx = np.arange(NUM_VERTICES)
    active_idx = np.asarray(active_idx, dtype=np.int64)

    _, dR = rodrigues_with_jacobian(rotvecs)  # (24, 3, 3, 3)

    # --- derivative of the transform chain -------------------------------
    # dJ/dbeta: precomputed on the model; (B, 24, 3)
    dJ = model.joint_shapedirs
    parents = model.parents

    dA = np.zeros((P, NUM_JOINTS, 4, 4))
    dA[:B, 0, :3, 3] = dJ[:, 0]
    dA[:B, 1:, :3, 3] = dJ[:, 1:] - dJ[:, parents[1:]]
    for k in range(NUM_JOINTS):
        base = B + 3 * k  # gamma occupies the root slot
        for i in range(3):
            dA[base + i, k, :3, :3] = dR[k, :, :, i]

    dG = np.zeros((P, NUM_JOINTS, 4, 4))
    dG[:, 0] = dA[:, 0]
    for k in range(1, NUM_JOINTS):
        p = parents[k]
        dG[:, k] = dG[:, p] @ A[k] + G[p] @ dA[:, k]

    dRg = dG[:, :, :3, :3]
    dtg = dG[:, :, :3, 3] - np.einsum("pkij,kj->pki", dRg, joints)
    dtg[:B] -= np.einsum("kij,bkj->bki", G[:, :3, :3], dJ)
    dGp = np.concatenate([dRg, dtg[:, :, :, None]], axis=3)  # (P, 24, 3, 4)

    # --- blend to the active vertices ------------------------------------
    full = len(active_idx) == NUM_VERTICES and np.array_equal(
        active_idx, np.arange(NUM_VERTICES)
    )
    W = model.skin_weights if full else model.skin_weights[active_idx]
    sd_act = model.shapedirs if full else model.shapedirs[active_idx]
    pd_act = model.posedirs if full else model.posedirs[active_idx]
    va = len(active_idx)
    vph = np.concatenate([v_posed[active_idx], np.ones((va, 1))], axis=1)

    TJ = (W @ np.ascontiguousarray(np.moveaxis(dGp, 0, 1)).reshape(NUM_JOINTS, -1)).reshape(
        va, P, 3, 4
    )
    # contract the homogeneous vertex through every (3,4) block per param
    jac = np.matmul(TJ.reshape(va, P * 3, 4), vph[:, :, None]).reshape(va, P, 3)
    jac = np.ascontiguousarray(jac.swapaxes(1, 2))  # (Va, 3, P)

    # --- blendshape terms: T_rot @ d(v_posed)/dparam ----------------------
    dvp = np.zeros((va, 3, P))
    dvp[:, :, :B] = sd_act
    pdf = pd_act.reshape(va * 3, NUM_POSE_BLEND)
    for m in range(1, NUM_JOINTS):
        cols = B + 3 * m
        dvp[:, :, cols : cols + 3] = (
            pdf[:, 9 * (m - 1) : 9 * m] @ dR[m].reshape(9, 3)
        ).reshape(va, 3, 3)
    Rbar = T[active_idx, :, :3]  # (Va, 3, 3)
    jac += np.matmul(Rbar, dvp)

    return SkinDerivatives(vertices=verts, active_idx=active_idx, jac=jac, num_betas=B)


def regress_joints(model: SmplModel, mesh: Mesh) -> Joints3D:
    """X = joint_regressor @ V."""
    return Joints3D(joints=model.joint_regressor @ mesh.vertices)


def tpose_mesh(model: SmplModel, beta: np.ndarray) -> Mesh:
    """Mesh with pose and global rotation zeroed; equals skin at (0, beta, 0)."""
    beta = np.asarray(beta, dtype=np.float64).ravel()
    params = BodyParams(np.zeros(NUM_POSE), beta, np.zeros(3), np.zeros(3))
    return skin(model, params)
