import math

import numpy as np
import pytest

from soy import backend
from soy.camera import Camera
from soy.metrics import DegenerateMeshError, miou, pve_t_sc, scale_corrected_vertex_error
from soy.model import BodyParams, tpose_mesh
from soy.raster import SilhouetteMask, rasterize, rasterize_vertices
from soy.synth import SceneSpec, frame_camera, generate_scene


def simple_cam(size=(64, 64), focal=64.0):
    return Camera(focal=focal, image_size=size)


def brute_force_raster(verts, faces, cam, size):
    """Independent full-frame rasterizer: same fill rule, no bbox, explicit loops."""
    w, h = size
    z = verts[:, 2]
    uv = np.zeros((len(verts), 2))
    ok = z > 1e-6
    uv[ok] = cam.focal * verts[ok, :2] / z[ok, None] + cam.principal_point
    depth = np.full((h, w), np.inf)
    face_id = np.full((h, w), -1, dtype=np.int32)
    for f, tri in enumerate(faces):
        if not ok[tri].all():
            continue
        (ax, ay), (bx, by), (cx, cy) = uv[tri]
        iz = 1.0 / z[tri]
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area == 0.0:
            continue
        if area < 0.0:
            bx, cx = cx, bx
            by, cy = cy, by
            iz = iz[[0, 2, 1]]
            area = -area
        for py in range(h):
            for px in range(w):
                w0 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
                w1 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
                w2 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
                def tl(dx, dy):
                    return dy < 0.0 or (dy == 0.0 and dx > 0.0)
                if not (w0 > 0 or (w0 == 0 and tl(cx - bx, cy - by))):
                    continue
                if not (w1 > 0 or (w1 == 0 and tl(ax - cx, ay - cy))):
                    continue
                if not (w2 > 0 or (w2 == 0 and tl(bx - ax, by - ay))):
                    continue
                zval = 1.0 / (w0 / area * iz[0] + w1 / area * iz[1] + w2 / area * iz[2])
                if zval < depth[py, px]:
                    depth[py, px] = zval
                    face_id[py, px] = f
    return face_id, depth


def random_small_mesh(rng, n_faces=15):
    verts = rng.normal(scale=0.4, size=(n_faces * 3, 3))
    verts[:, 2] += 3.0
    faces = np.arange(n_faces * 3).reshape(n_faces, 3)
    return verts, faces


def test_mesh_behind_camera_gives_empty_mask():
    verts = np.array([[0.0, 0.0, -1.0], [1.0, 0.0, -1.0], [0.0, 1.0, -1.0]])
    faces = np.array([[0, 1, 2]])
    mask, _ = rasterize_vertices(verts, faces, simple_cam(), (64, 64))
    assert not mask.bitmap.any()


def test_single_triangle_covers_center():
    cam = simple_cam()
    verts = np.array([[-2.0, -2.0, 2.0], [2.0, -2.0, 2.0], [0.0, 3.0, 2.0]])
    faces = np.array([[0, 1, 2]])
    mask, zbuf = rasterize_vertices(verts, faces, cam, (64, 64))
    cx, cy = 31, 31
    assert mask.bitmap[cy, cx]
    assert zbuf.face[cy, cx] == 0
    assert zbuf.depth[cy, cx] == pytest.approx(2.0, rel=1e-12)


def test_nearer_triangle_wins_zbuffer():
    cam = simple_cam()
    near = np.array([[-1.0, -1.0, 2.0], [1.0, -1.0, 2.0], [0.0, 1.5, 2.0]])
    far = near.copy()
    far[:, 2] = 4.0
    verts = np.vstack([far, near])
    faces = np.array([[0, 1, 2], [3, 4, 5]])
    _, zbuf = rasterize_vertices(verts, faces, cam, (64, 64))
    covered = zbuf.face >= 0
    assert covered.any()
    assert (zbuf.face[covered] == 1).all()
    # and with reversed order the nearer one still wins
    verts2 = np.vstack([near, far])
    _, zbuf2 = rasterize_vertices(verts2, faces, cam, (64, 64))
    assert (zbuf2.face[zbuf2.face >= 0] == 0).all()


def test_matches_brute_force_oracle():
    rng = np.random.default_rng(0)
    cam = simple_cam((48, 48), focal=48.0)
    for trial in range(4):
        verts, faces = random_small_mesh(rng, n_faces=12)
        mask, zbuf = rasterize_vertices(verts, faces, cam, (48, 48))
        ref_face, ref_depth = brute_force_raster(verts, faces, cam, (48, 48))
        np.testing.assert_array_equal(zbuf.face, ref_face)
        np.testing.assert_array_equal(mask.bitmap, ref_face >= 0)
        sel = ref_face >= 0
        np.testing.assert_allclose(zbuf.depth[sel], ref_depth[sel], rtol=1e-12)
        # finite depth exactly where a face owns the pixel
        np.testing.assert_array_equal(np.isfinite(zbuf.depth), zbuf.face >= 0)


def test_full_mask_is_union_of_per_face_masks():
    rng = np.random.default_rng(1)
    cam = simple_cam((48, 48), focal=48.0)
    verts, faces = random_small_mesh(rng, n_faces=10)
    mask, _ = rasterize_vertices(verts, faces, cam, (48, 48))
    union = np.zeros_like(mask.bitmap)
    for f in range(len(faces)):
        m, _ = rasterize_vertices(verts, faces[f : f + 1], cam, (48, 48))
        union |= m.bitmap
    np.testing.assert_array_equal(mask.bitmap, union)


def test_adjacent_triangles_share_edge_pixels_once():
    # a unit square split along the diagonal: no pixel owned twice, none dropped
    cam = simple_cam((32, 32), focal=1.0)
    verts = np.array(
        [[2.0, 2.0, 1.0], [20.0, 2.0, 1.0], [20.0, 20.0, 1.0], [2.0, 20.0, 1.0]]
    )
    verts[:, :2] -= cam.principal_point  # uv == xy coordinates at focal 1, z 1
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    mask, _ = rasterize_vertices(verts, faces, cam, (32, 32))
    a, _ = rasterize_vertices(verts, faces[:1], cam, (32, 32))
    b, _ = rasterize_vertices(verts, faces[1:], cam, (32, 32))
    assert not (a.bitmap & b.bitmap).any()
    np.testing.assert_array_equal(a.bitmap | b.bitmap, mask.bitmap)
    assert mask.bitmap.sum() == 18 * 18  # half-open square coverage


def test_rasterizer_determinism(model):
    params = BodyParams.zeros(10)
    cam = frame_camera(model, params, (224, 224), 5000.0)
    m1, z1 = rasterize(model, params, cam)
    m2, z2 = rasterize(model, params, cam)
    np.testing.assert_array_equal(m1.bitmap, m2.bitmap)
    np.testing.assert_array_equal(z1.face, z2.face)
    np.testing.assert_array_equal(z1.depth, z2.depth)


@pytest.mark.skipif(not backend.HAVE_COMPILED, reason="compiled backend unavailable")
def test_backends_are_bit_identical(model):
    params = BodyParams(
        np.random.default_rng(2).normal(scale=0.2, size=69),
        np.random.default_rng(3).normal(scale=0.4, size=10),
        np.zeros(3),
        np.zeros(3),
    )
    cam = frame_camera(model, params, (224, 224), 5000.0)
    previous = backend.current()
    try:
        backend.use("compiled")
        mc, zc = rasterize(model, params, cam)
        backend.use("python")
        mp, zp = rasterize(model, params, cam)
    finally:
        backend.use(previous)
    np.testing.assert_array_equal(mc.bitmap, mp.bitmap)
    np.testing.assert_array_equal(zc.face, zp.face)
    np.testing.assert_array_equal(zc.depth, zp.depth)


# ----------------------------------------------------------------- miou


def square_mask(x0, y0, x1, y1, size=(40, 40)):
    bm = np.zeros((size[1], size[0]), dtype=bool)
    bm[y0:y1, x0:x1] = True
    return SilhouetteMask(size=size, bitmap=bm)


def test_miou_identical():
    a = square_mask(5, 5, 20, 20)
    assert miou(a, a) == 1.0


def test_miou_disjoint():
    assert miou(square_mask(0, 0, 10, 10), square_mask(20, 20, 30, 30)) == 0.0


def test_miou_half_overlap_is_one_third():
    # equal-area rectangles overlapping on half their area: 1 vs 3 units
    a = square_mask(0, 0, 20, 10)
    b = square_mask(10, 0, 30, 10)
    assert miou(a, b) == pytest.approx(1.0 / 3.0, rel=1e-12)


def test_miou_empty_empty_is_one():
    assert miou(square_mask(0, 0, 0, 0), square_mask(0, 0, 0, 0)) == 1.0


def test_miou_symmetry_and_range():
    rng = np.random.default_rng(9)
    for _ in range(100):
        a = SilhouetteMask((16, 16), rng.random((16, 16)) < 0.4)
        b = SilhouetteMask((16, 16), rng.random((16, 16)) < 0.4)
        v1, v2 = miou(a, b), miou(b, a)
        assert v1 == v2
        assert 0.0 <= v1 <= 1.0
        assert miou(a, a) == 1.0


def test_miou_size_mismatch():
    with pytest.raises(ValueError):
        miou(square_mask(0, 0, 5, 5, (40, 40)), square_mask(0, 0, 5, 5, (41, 40)))


# ----------------------------------------------------------------- pve-t-sc


def test_pve_zero_for_identical_betas(model):
    beta = np.linspace(-0.4, 0.4, 10)
    assert pve_t_sc(model, beta, beta) == 0.0


def test_pve_scale_correction_nulls_uniform_scaling(model):
    beta = np.full(10, 0.2)
    verts = tpose_mesh(model, beta).vertices
    assert scale_corrected_vertex_error(1.3 * verts, verts) < 1e-9


def test_pve_against_straight_line_oracle(model):
    e0 = np.zeros(10)
    e0[0] = 1.0
    value = pve_t_sc(model, np.zeros(10), e0)

    # independent, step-by-step recomputation
    pred = np.asarray(tpose_mesh(model, np.zeros(10)).vertices)
    gt = np.asarray(tpose_mesh(model, e0).vertices)
    pred_c = pred - pred.mean(axis=0)
    gt_c = gt - gt.mean(axis=0)
    s = float((pred_c * gt_c).sum() / (pred_c * pred_c).sum())
    dists = [math.dist(s * p, g) for p, g in zip(pred_c, gt_c)]
    oracle = 1000.0 * sum(dists) / len(dists)
    assert value == pytest.approx(oracle, rel=1e-12)


def test_pve_strictly_positive_for_distinct_shapes(model):
    beta = np.zeros(10)
    beta[3] = 0.8
    assert pve_t_sc(model, np.zeros(10), beta) > 0


def test_pve_degenerate_mesh_rejected():
    with pytest.raises(DegenerateMeshError):
        scale_corrected_vertex_error(np.zeros((6890, 3)), np.ones((6890, 3)))


# ----------------------------------------------------------------- scene mIoU round trip


def test_scene_mask_round_trip(model):
    scene = generate_scene(model, SceneSpec(seed=11, n_records=50))
    again, _ = rasterize(model, scene.gt_params, scene.cam)
    assert miou(again, scene.mask) >= 0.99
