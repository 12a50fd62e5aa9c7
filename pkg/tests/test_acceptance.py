"""Acceptance criteria, one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they complete. Budgeted wall times are asserted where stated.
"""

import filecmp
import time

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from soy.cli import main
from soy.fitter import FitConfig, fit, make_stage_config
from soy.losses import LossWeights, loss_2d, loss_dp
from soy.metrics import miou, pve_t_sc, scale_corrected_vertex_error
from soy.model import BodyParams, regress_joints, skin, tpose_mesh
from soy.raster import SilhouetteMask, rasterize
from soy.rng import Xoshiro256pp
from soy.synth import SceneSpec, generate_scene

pytestmark = pytest.mark.acceptance


def _report(n, detail):
    print(f"\nACCEPTANCE {n}: PASS - {detail}")


def test_criterion_1_gradient_oracle(capsys):
    """`soy gradcheck --trials 20` passes within two minutes."""
    start = time.perf_counter()
    code = main(["gradcheck", "--trials", "20"])
    wall = time.perf_counter() - start
    out = capsys.readouterr().out
    assert code == 0, out
    assert wall < 120.0, f"gradcheck took {wall:.0f}s"
    with capsys.disabled():
        _report(1, f"all loss gradients within 1e-4 of central differences ({wall:.0f}s)")


def test_criterion_2_lbs_identities(model, capsys):
    start = time.perf_counter()
    # zero configuration reproduces the template
    v0 = skin(model, BodyParams.zeros(10)).vertices
    assert np.abs(v0 - model.v_template).max() < 1e-9

    # linearity in beta at zero pose
    rng = np.random.default_rng(2)
    b1, b2 = rng.normal(scale=0.5, size=10), rng.normal(scale=0.5, size=10)
    a, b = 1.7, -0.6
    lhs = tpose_mesh(model, a * b1 + b * b2).vertices
    rhs = (
        a * tpose_mesh(model, b1).vertices
        + b * tpose_mesh(model, b2).vertices
        - (a + b - 1.0) * model.v_template
    )
    assert np.abs(lhs - rhs).max() < 1e-9

    # gamma-rotation equivariance about the root joint
    params = BodyParams(rng.normal(scale=0.2, size=69), b1, rng.normal(scale=0.3, size=3), np.zeros(3))
    extra = Rotation.from_rotvec([0.3, -0.2, 0.5])
    X1 = regress_joints(model, skin(model, params)).joints
    composed = params.copy()
    composed.gamma = (extra * Rotation.from_rotvec(params.gamma)).as_rotvec()
    X2 = regress_joints(model, skin(model, composed)).joints
    root = (model.joint_regressor @ (model.v_template + model.shapedirs @ params.beta))[0]
    oracle = (X1 - root) @ extra.as_matrix().T + root
    assert np.abs(X2 - oracle).max() < 1e-9

    wall = time.perf_counter() - start
    assert wall < 10.0
    with capsys.disabled():
        _report(2, f"template, linearity, and rotation identities hold to 1e-9 ({wall:.1f}s)")


def test_criterion_3_synthetic_shape_recovery(model, capsys):
    start = time.perf_counter()
    hits = 0
    errors = []
    for seed in range(10):
        scene = generate_scene(
            model, SceneSpec(seed=seed, n_records=2000, sigma_theta=0.2, beta_mode="prior")
        )
        gt = scene.gt_params
        init = BodyParams(gt.theta.copy(), np.zeros(10), gt.gamma.copy(), gt.cam_t.copy())
        result = fit(model, init, scene.cam, scene.corr, make_stage_config(2))
        err = pve_t_sc(model, result.params.beta, gt.beta)
        errors.append(err)
        hits += err < 5.0
    wall = time.perf_counter() - start
    assert hits >= 9, f"only {hits}/10 scenes under 5 mm: {np.round(errors, 2)}"
    assert wall < 600.0, f"recovery suite took {wall:.0f}s"
    with capsys.disabled():
        _report(3, f"{hits}/10 scenes under 5 mm PVE-T-SC (worst {max(errors):.2f} mm, {wall:.0f}s)")


def test_criterion_4_refinement_helps(model, capsys):
    e_init, e_fit = [], []
    improved = 0
    for seed in range(10):
        scene = generate_scene(model, SceneSpec(seed=seed, n_records=2000, noise_px=1.0))
        gt = scene.gt_params
        stream = Xoshiro256pp(10_000 + seed)
        init = BodyParams(
            gt.theta + 0.1 * stream.normals(69),
            gt.beta + 0.5 * stream.normals(10),
            gt.gamma.copy(),
            gt.cam_t.copy(),
        )
        e0 = pve_t_sc(model, init.beta, gt.beta)
        result = fit(model, init, scene.cam, scene.corr, make_stage_config(3))
        e1 = pve_t_sc(model, result.params.beta, gt.beta)
        e_init.append(e0)
        e_fit.append(e1)
        improved += e1 < e0
    mean_gain = 1.0 - np.mean(e_fit) / np.mean(e_init)
    assert improved >= 8, f"only {improved}/10 scenes improved"
    assert mean_gain >= 0.30, f"mean improvement {mean_gain:.0%} < 30%"
    with capsys.disabled():
        _report(
            4,
            f"stage-3 improved {improved}/10 noisy scenes; mean PVE-T-SC "
            f"{np.mean(e_init):.2f} -> {np.mean(e_fit):.2f} mm ({mean_gain:.0%})",
        )


def test_criterion_5_tpose_term_speeds_shape_convergence(model, capsys):
    def tpose_err(beta_a, beta_b):
        d = tpose_mesh(model, beta_a).vertices - tpose_mesh(model, beta_b).vertices
        return float(np.linalg.norm(d, axis=1).mean() * 1000.0)

    wins = 0
    pairs = []
    for seed in range(5):
        stream = Xoshiro256pp(20_000 + seed)
        target = BodyParams(0.2 * stream.normals(69), 0.5 * stream.normals(10), np.zeros(3), np.zeros(3))
        errs = {}
        for lam_tpose in (0.1, 0.0):
            cfg = FitConfig(
                iterations=50,
                weights=LossWeights(mesh=0.1, tpose=lam_tpose),
                free_params=("beta", "theta"),
                early_stop=False,
            )
            from soy.camera import Camera

            result = fit(model, BodyParams.zeros(10), Camera(), None, cfg, target=target)
            errs[lam_tpose] = tpose_err(result.params.beta, target.beta)
        pairs.append((errs[0.1], errs[0.0]))
        wins += errs[0.1] <= errs[0.0]
    assert wins == 5, f"only {wins}/5 problems converged at least as fast: {pairs}"
    with capsys.disabled():
        detail = "; ".join(f"{w:.1f}<={wo:.1f}" for w, wo in pairs)
        _report(5, f"T-pose error at iteration 50, with vs without the term (mm): {detail}")


def test_criterion_6_metric_invariances(model, capsys):
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    for _ in range(5):
        beta = rng.normal(scale=0.4, size=10)
        assert pve_t_sc(model, beta, beta) == 0.0
    verts = tpose_mesh(model, rng.normal(scale=0.4, size=10)).vertices
    assert scale_corrected_vertex_error(1.3 * verts, verts) < 1e-9

    for _ in range(100):
        a = SilhouetteMask((20, 20), rng.random((20, 20)) < 0.35)
        b = SilhouetteMask((20, 20), rng.random((20, 20)) < 0.35)
        ab, ba = miou(a, b), miou(b, a)
        assert ab == ba
        assert 0.0 <= ab <= 1.0
        assert miou(a, a) == 1.0
    wall = time.perf_counter() - start
    assert wall < 30.0
    with capsys.disabled():
        _report(6, f"metric identities and 100 random mask pairs hold ({wall:.1f}s)")


def test_criterion_7_self_consistency(model, capsys):
    worst_dp, worst_2d, worst_iou = 0.0, 0.0, 1.0
    for seed in (0, 5, 9):
        scene = generate_scene(model, SceneSpec(seed=seed, n_records=1000))
        dp = loss_dp(model, scene.gt_params, scene.cam, scene.corr).value
        kp = loss_2d(model, scene.gt_params, scene.cam, scene.keypoints).value
        mask, _ = rasterize(model, scene.gt_params, scene.cam)
        iou = miou(mask, scene.mask)
        worst_dp, worst_2d = max(worst_dp, dp), max(worst_2d, kp)
        worst_iou = min(worst_iou, iou)
        assert dp < 1e-10
        assert kp == pytest.approx(0.0, abs=1e-18)
        assert iou >= 0.99
    with capsys.disabled():
        _report(
            7,
            f"noiseless scenes: L_dp <= {worst_dp:.1e}, L_2D <= {worst_2d:.1e}, "
            f"mask round-trip mIoU >= {worst_iou:.3f}",
        )


def test_criterion_8_determinism(model_path, tmp_path, capsys):
    synth_args = lambda out: [
        "synth", "--model", str(model_path), "--seed", "123",
        "--n-records", "700", "--noise-px", "0.5", "--out", str(out),
    ]
    assert main(synth_args(tmp_path / "s1")) == 0
    assert main(synth_args(tmp_path / "s2")) == 0
    scene_files = ["params.json", "corr.dcm", "keypoints.json", "mask.pgm", "manifest.json"]
    for name in scene_files:
        assert filecmp.cmp(tmp_path / "s1" / name, tmp_path / "s2" / name, shallow=False), name

    fit_args = lambda out: [
        "fit", "--model", str(model_path), "--corr", str(tmp_path / "s1" / "corr.dcm"),
        "--init", str(tmp_path / "s1" / "params.json"), "--stage", "3", "--iters", "40",
        "--out", str(out), "--trace", str(out) + ".csv", "--mesh-out", str(out) + ".obj",
    ]
    assert main(fit_args(tmp_path / "f1.json")) == 0
    assert main(fit_args(tmp_path / "f2.json")) == 0
    for suffix in ("", ".csv", ".obj"):
        a = (tmp_path / ("f1.json" + suffix)).read_bytes()
        b = (tmp_path / ("f2.json" + suffix)).read_bytes()
        assert a == b, f"fit output differs: f*.json{suffix}"
    with capsys.disabled():
        _report(8, "repeated `soy synth` and `soy fit` runs are byte-identical")
