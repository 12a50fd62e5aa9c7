"""Staged energy minimization with Adam.

Stage 2 (training-loop refinement) and stage 3 (test-time refinement) both
minimize the dense-correspondence + prior energy over (beta, theta) with
gamma and the camera translation frozen; they differ only in prior
weights. The returned parameters are the lowest-loss iterate seen, not the
last one: first-order steps oscillate near convergence.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .camera import BehindCameraError, Camera
from .losses import (
    DenseCorrespondenceMap,
    Keypoints2D,
    LossReport,
    LossWeights,
    NumericalError,
    evaluate_objective,
)
from .model import BodyParams, SmplModel, _wrap_axis_angle, skin

_BLOCKS = ("beta", "theta", "gamma", "cam_t")
_GRAD_ATTR = {"beta": "d_beta", "theta": "d_theta", "gamma": "d_gamma", "cam_t": "d_cam_t"}


@dataclass
class FitConfig:
    stage: str = "custom"  # "2", "3", or "custom"
    iterations: int = 250
    weights: LossWeights = field(default_factory=LossWeights)
    lr: float = 1e-2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    free_params: tuple[str, ...] = ("beta", "theta")
    convergence_rel: float = 1e-7
    convergence_patience: int = 20
    early_stop: bool = True
    dp_normalize: str = "sum"
    seed: int = 0

    def validate(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not self.free_params:
            raise ValueError("free_params must be non-empty")
        for name in self.free_params:
            if name not in _BLOCKS:
                raise ValueError(f"unknown free parameter block {name!r}")
        if self.dp_normalize not in ("sum", "mean"):
            raise ValueError("dp_normalize must be 'sum' or 'mean'")


def make_stage_config(stage: int | str) -> FitConfig:
    """Refinement configs: both stages run 250 iterations over (beta, theta)."""
    stage = str(stage)
    if stage == "2":
        return FitConfig(stage="2", weights=LossWeights.stage2())
    if stage == "3":
        return FitConfig(stage="3", weights=LossWeights.stage3())
    raise ValueError(f"unknown stage {stage!r} (expected 2 or 3)")


@dataclass
class FitResult:
    params: BodyParams  # lowest-loss iterate, canonicalized on free blocks
    best_total: float
    final_total: float  # objective at the last evaluated iterate
    trace: list[LossReport]
    iterations_run: int
    converged: bool
    wall_time: float
    config: FitConfig
    abort_reason: str | None = None

    @property
    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.trace])


def _pack(params: BodyParams, free: tuple[str, ...]) -> np.ndarray:
    return np.concatenate([getattr(params, name) for name in free])


def _unpack(x: np.ndarray, params: BodyParams, free: tuple[str, ...]) -> None:
    pos = 0
    for name in free:
        block = getattr(params, name)
        block[:] = x[pos : pos + len(block)]
        pos += len(block)


def _pack_grad(report: LossReport, params: BodyParams, free: tuple[str, ...]) -> np.ndarray:
    parts = []
    for name in free:
        g = getattr(report, _GRAD_ATTR[name])
        parts.append(g if g is not None else np.zeros_like(getattr(params, name)))
    return np.concatenate(parts)


def _canonicalize_free(params: BodyParams, free: tuple[str, ...]) -> BodyParams:
    out = params.copy()
    if "theta" in free:
        blocks = out.theta.reshape(23, 3)
        for i in range(23):
            blocks[i] = _wrap_axis_angle(blocks[i])
    if "gamma" in free:
        out.gamma = _wrap_axis_angle(out.gamma)
    return out


def fit(
    model: SmplModel,
    init: BodyParams,
    cam: Camera,
    corr: DenseCorrespondenceMap | None,
    config: FitConfig,
    *,
    keypoints: Keypoints2D | None = None,
    target: BodyParams | None = None,
) -> FitResult:
    """Minimize the configured energy from `init`; deterministic.

    Frozen blocks (anything not in config.free_params) are returned
    bit-identical to the input. A behind-camera failure mid-run rolls back
    to the best valid iterate and flags the result; a non-finite value or
    gradient raises NumericalError naming the term.
    """
    config.validate()
    if corr is not None and len(corr) == 0:
        raise ValueError("correspondence map is empty")

    t_start = time.perf_counter()
    params = init.copy()
    free = config.free_params
    x = _pack(params, free)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_eps

    trace: list[LossReport] = []
    best_total = np.inf
    best_params = init.copy()
    streak = 0
    prev_total = None
    converged = False
    abort_reason = None

    target_vertices = None
    if target is not None:
        target_vertices = skin(model, target).vertices

    for it in range(config.iterations):
        try:
            report = evaluate_objective(
                model,
                params,
                cam,
                config.weights,
                corr=corr,
                keypoints=keypoints,
                target=target,
                target_vertices=target_vertices,
                dp_normalize=config.dp_normalize,
            )
        except BehindCameraError as exc:
            abort_reason = f"behind camera at iteration {it}: {exc}"
            break

        trace.append(report)
        if report.total < best_total:
            best_total = report.total
            best_params = params.copy()

        if prev_total is not None:
            rel_decrease = (prev_total - report.total) / max(abs(prev_total), 1e-300)
            streak = streak + 1 if rel_decrease < config.convergence_rel else 0
        prev_total = report.total
        converged = streak >= config.convergence_patience
        if converged and config.early_stop:
            break

        step = it + 1
        g = _pack_grad(report, params, free)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**step)
        v_hat = v / (1.0 - b2**step)
        x = x - config.lr * m_hat / (np.sqrt(v_hat) + eps)
        _unpack(x, params, free)

    if not trace:
        raise NumericalError("objective", abort_reason or "no iterations evaluated")

    out = _canonicalize_free(best_params, free)
    # frozen blocks must survive bit-exactly
    for name in _BLOCKS:
        if name not in free:
            getattr(out, name)[:] = getattr(init, name)

    return FitResult(
        params=out,
        best_total=best_total,
        final_total=trace[-1].total,
        trace=trace,
        iterations_run=len(trace),
        converged=converged,
        wall_time=time.perf_counter() - t_start,
        config=config,
        abort_reason=abort_reason,
    )


@dataclass
class PseudoGroundTruth:
    """Keep-best refinement target carried across epochs."""

    params: BodyParams
    loss: float
    config: FitConfig


def pseudo_gt_update(current: PseudoGroundTruth, candidate: FitResult) -> PseudoGroundTruth:
    """Keep whichever of current/candidate has the lower refinement loss.

    Ties keep the current target (stability). Both must come from the same
    refinement config.
    """
    same = (
        current.config.weights == candidate.config.weights
        and current.config.dp_normalize == candidate.config.dp_normalize
        and current.config.stage == candidate.config.stage
    )
    if not same:
        raise ValueError("pseudo ground-truth update across mismatched configs")
    if candidate.best_total < current.loss:
        return PseudoGroundTruth(candidate.params.copy(), candidate.best_total, candidate.config)
    return current


__all__ = [
    "FitConfig",
    "FitResult",
    "PseudoGroundTruth",
    "fit",
    "make_stage_config",
    "pseudo_gt_update",
]
