"""Convert an official body-model release archive (.pkl) into SMF.

The archive carries the template, blendshapes, regressor, skin weights,
kinematic table, and faces, possibly as scipy sparse matrices or
chumpy-style wrappers. It does not carry prior means/covariances, so the
converter fills documented defaults (shape: standard normal; pose: broad
isotropic 0.5^2 I) unless an npz with explicit priors is supplied.

Never ships model data; it transforms files the user already has.
"""

from __future__ import annotations

import hashlib
import pickle
from pathlib import Path

import numpy as np

from .smf import write_chunks

NUM_VERTICES = 6890
NUM_JOINTS = 24
NUM_POSE = 69
PARENT_SENTINEL = np.uint32(0xFFFFFFFF)

_FIELD_TO_CHUNK = {
    "v_template": "v_template",
    "shapedirs": "shapedirs",
    "posedirs": "posedirs",
    "J_regressor": "joint_regressor",
    "weights": "skin_weights",
    "kintree_table": "parents",
    "f": "faces",
}

CHUNK_ORDER = (
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

DEFAULT_POSE_PRIOR_STD = 0.5


class MissingFieldError(KeyError):
    def __init__(self, field: str):
        super().__init__(f"archive is missing required field '{field}'")
        self.field = field


class BadFieldError(ValueError):
    def __init__(self, field: str, detail: str):
        super().__init__(f"field '{field}': {detail}")
        self.field = field


def _densify(field: str, value) -> np.ndarray:
    if hasattr(value, "toarray"):  # scipy sparse
        value = value.toarray()
    elif hasattr(value, "r"):  # chumpy-style wrapper
        value = value.r
    try:
        return np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise BadFieldError(field, f"cannot interpret as an array: {exc}") from exc


def load_archive(path) -> dict:
    try:
        with open(path, "rb") as handle:
            return pickle.load(handle, encoding="latin1")
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise BadFieldError("<archive>", f"unreadable pickle: {exc}") from exc


def archive_to_chunks(data: dict, num_betas: int = 10, priors: dict | None = None) -> dict:
    for field in _FIELD_TO_CHUNK:
        if field not in data:
            raise MissingFieldError(field)

    v_template = _densify("v_template", data["v_template"])
    if v_template.shape != (NUM_VERTICES, 3):
        raise BadFieldError("v_template", f"expected ({NUM_VERTICES}, 3), got {v_template.shape}")

    shapedirs = _densify("shapedirs", data["shapedirs"])
    if shapedirs.ndim != 3 or shapedirs.shape[:2] != (NUM_VERTICES, 3):
        raise BadFieldError("shapedirs", f"unexpected shape {shapedirs.shape}")
    if shapedirs.shape[2] < num_betas:
        raise BadFieldError(
            "shapedirs", f"archive has {shapedirs.shape[2]} shape directions, need {num_betas}"
        )
    shapedirs = np.ascontiguousarray(shapedirs[:, :, :num_betas])

    posedirs = _densify("posedirs", data["posedirs"])
    if posedirs.shape != (NUM_VERTICES, 3, 207):
        raise BadFieldError("posedirs", f"expected ({NUM_VERTICES}, 3, 207), got {posedirs.shape}")

    regressor = _densify("J_regressor", data["J_regressor"])
    if regressor.shape != (NUM_JOINTS, NUM_VERTICES):
        raise BadFieldError("J_regressor", f"expected ({NUM_JOINTS}, {NUM_VERTICES}), got {regressor.shape}")

    weights = _densify("weights", data["weights"])
    if weights.shape != (NUM_VERTICES, NUM_JOINTS):
        raise BadFieldError("weights", f"expected ({NUM_VERTICES}, {NUM_JOINTS}), got {weights.shape}")
    if weights.min() < -1e-10:
        raise BadFieldError("weights", f"negative skin weight {weights.min():.3e}")
    weights = np.clip(weights, 0.0, None)
    weights = weights / weights.sum(axis=1, keepdims=True)

    kintree = np.asarray(data["kintree_table"])
    if kintree.ndim != 2 or kintree.shape[0] < 1 or kintree.shape[1] != NUM_JOINTS:
        raise BadFieldError("kintree_table", f"unexpected shape {kintree.shape}")
    parents = kintree[0].astype(np.int64)
    parents_u32 = np.empty(NUM_JOINTS, dtype=np.uint32)
    parents_u32[0] = PARENT_SENTINEL
    for k in range(1, NUM_JOINTS):
        if not 0 <= parents[k] < k:
            raise BadFieldError("kintree_table", f"parent of joint {k} is {parents[k]}")
        parents_u32[k] = parents[k]

    faces = np.asarray(data["f"])
    if faces.shape != (13776, 3):
        raise BadFieldError("f", f"expected (13776, 3), got {faces.shape}")
    if faces.min() < 0 or faces.max() >= NUM_VERTICES:
        raise BadFieldError("f", "vertex index out of range")

    priors = priors or {}
    shape_mean = np.asarray(priors.get("shape_prior_mean", np.zeros(num_betas)), dtype=np.float64)
    shape_cov = np.asarray(priors.get("shape_prior_cov", np.eye(num_betas)), dtype=np.float64)
    pose_mean = np.asarray(priors.get("pose_prior_mean", np.zeros(NUM_POSE)), dtype=np.float64)
    pose_cov = np.asarray(
        priors.get("pose_prior_cov", DEFAULT_POSE_PRIOR_STD**2 * np.eye(NUM_POSE)),
        dtype=np.float64,
    )
    if shape_mean.shape != (num_betas,) or shape_cov.shape != (num_betas, num_betas):
        raise BadFieldError("priors", "shape prior dimensions do not match num_betas")
    if pose_mean.shape != (NUM_POSE,) or pose_cov.shape != (NUM_POSE, NUM_POSE):
        raise BadFieldError("priors", "pose prior dimensions are wrong")

    return {
        "v_template": v_template,
        "shapedirs": shapedirs,
        "posedirs": posedirs,
        "joint_regressor": regressor,
        "skin_weights": weights,
        "parents": parents_u32,
        "faces": faces.astype(np.uint32),
        "shape_prior_mean": shape_mean,
        "shape_prior_cov": shape_cov,
        "pose_prior_mean": pose_mean,
        "pose_prior_cov": pose_cov,
    }


def convert_model(in_path, out_path, num_betas: int = 10, priors_path=None) -> dict[str, str]:
    """Archive -> SMF; returns the per-chunk sha256 manifest."""
    data = load_archive(in_path)
    priors = None
    if priors_path is not None:
        with np.load(priors_path) as npz:
            priors = {k: npz[k] for k in npz.files}
    chunks = archive_to_chunks(data, num_betas=num_betas, priors=priors)
    ordered = {name: chunks[name] for name in CHUNK_ORDER}
    write_chunks(out_path, ordered)
    return {
        name: hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()
        for name, arr in ordered.items()
    }
