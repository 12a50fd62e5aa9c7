"""Evaluation metrics: scale-corrected T-pose vertex error and silhouette IoU."""

from __future__ import annotations

import numpy as np

from .model import SmplModel, tpose_mesh
from .raster import SilhouetteMask


class DegenerateMeshError(ValueError):
    pass


def scale_corrected_vertex_error(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean vertex distance in mm after mean-centering and least-squares scaling."""
    pred = pred - pred.mean(axis=0)
    gt = gt - gt.mean(axis=0)
    denom = float((pred * pred).sum())
    if denom < 1e-18:
        raise DegenerateMeshError("predicted mesh has zero spread; scale is undefined")
    s = float((pred * gt).sum()) / denom
    return float(np.linalg.norm(s * pred - gt, axis=1).mean() * 1000.0)


def pve_t_sc(model: SmplModel, beta_pred: np.ndarray, beta_gt: np.ndarray) -> float:
    """Per-vertex T-pose error (mm) after scale correction."""
    pred = tpose_mesh(model, beta_pred).vertices
    gt = tpose_mesh(model, beta_gt).vertices
    return scale_corrected_vertex_error(pred, gt)


def miou(pred: SilhouetteMask, gt: SilhouetteMask) -> float:
    """Intersection over union; defined as 1.0 when both masks are empty."""
    if pred.size != gt.size:
        raise ValueError(f"mask sizes differ: {pred.size} vs {gt.size}")
    inter = int(np.logical_and(pred.bitmap, gt.bitmap).sum())
    union = int(np.logical_or(pred.bitmap, gt.bitmap).sum())
    if union == 0:
        return 1.0
    return inter / union
