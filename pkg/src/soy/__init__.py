"""Parametric body-model fitting against dense pixel-to-surface
correspondences, with seeded synthetic scenes and evaluation metrics."""

from . import backend
from .camera import BehindCameraError, Camera, project, project_jacobian
from .fitter import FitConfig, FitResult, fit, make_stage_config, pseudo_gt_update
from .losses import (
    DenseCorrespondenceMap,
    Keypoints2D,
    LossReport,
    LossWeights,
    NumericalError,
    loss_2d,
    loss_3d,
    loss_dp,
    loss_iter,
    loss_mesh,
    loss_prior,
    loss_reg,
    loss_tpose,
)
from .metrics import miou, pve_t_sc
from .model import (
    BodyParams,
    Joints3D,
    Mesh,
    SmplModel,
    load_model,
    regress_joints,
    save_model,
    skin,
    tpose_mesh,
)
from .raster import DepthBuffer, SilhouetteMask, rasterize
from .synth import SceneSpec, SynthScene, generate_scene

__version__ = "0.1.0"

__all__ = [
    "backend",
    "BehindCameraError",
    "Camera",
    "project",
    "project_jacobian",
    "FitConfig",
    "FitResult",
    "fit",
    "make_stage_config",
    "pseudo_gt_update",
    "DenseCorrespondenceMap",
    "Keypoints2D",
    "LossReport",
    "LossWeights",
    "NumericalError",
    "loss_2d",
    "loss_3d",
    "loss_dp",
    "loss_iter",
    "loss_mesh",
    "loss_prior",
    "loss_reg",
    "loss_tpose",
    "miou",
    "pve_t_sc",
    "BodyParams",
    "Joints3D",
    "Mesh",
    "SmplModel",
    "load_model",
    "regress_joints",
    "save_model",
    "skin",
    "tpose_mesh",
    "DepthBuffer",
    "SilhouetteMask",
    "rasterize",
    "SceneSpec",
    "SynthScene",
    "generate_scene",
    "__version__",
]
