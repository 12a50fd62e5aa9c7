import pickle

import numpy as np
import pytest
import scipy.sparse

from soy.minimodel import SEGMENTS, RINGS, build_mini_model

NUM_VERTICES = 6890


@pytest.fixture(scope="session")
def mini_model():
    return build_mini_model()


@pytest.fixture(scope="session")
def official_pkl(mini_model, tmp_path_factory):
    """An archive with the official release's field layout, built from the
    procedural fixture so no licensed data is involved."""
    m = mini_model
    parents = np.asarray(m.parents).copy()
    parents[0] = 4294967295
    kintree = np.stack([parents.astype(np.int64), np.arange(24, dtype=np.int64)])
    data = {
        "v_template": np.asarray(m.v_template),
        "shapedirs": np.asarray(m.shapedirs),
        "posedirs": np.asarray(m.posedirs),
        "J_regressor": scipy.sparse.csc_matrix(np.asarray(m.joint_regressor)),
        "weights": np.asarray(m.skin_weights),
        "kintree_table": kintree,
        "f": np.asarray(m.faces, dtype=np.uint32),
        "bs_style": "lbs",
    }
    path = tmp_path_factory.mktemp("official") / "body_model.pkl"
    with open(path, "wb") as handle:
        pickle.dump(data, handle, protocol=2)
    return path


def sphere_params():
    """(phi, lam) of every fixture vertex from the known grid layout."""
    phi = np.empty(NUM_VERTICES)
    lam = np.empty(NUM_VERTICES)
    phi[0], lam[0] = 0.0, 0.0
    seg_lam = 2.0 * np.pi * np.arange(SEGMENTS) / SEGMENTS
    for i in range(RINGS):
        block = slice(1 + i * SEGMENTS, 1 + (i + 1) * SEGMENTS)
        phi[block] = np.pi * (i + 1) / (RINGS + 1)
        lam[block] = seg_lam
    phi[-1], lam[-1] = np.pi, 0.0
    return phi, lam


def build_chart(model):
    """Deterministic 24-part chart: 6 azimuth sectors x 4 latitude bands.

    Returns (npz_dict, part_of_face (F,), face_uv (F, 3, 2)).
    """
    phi, lam = sphere_params()
    F = np.asarray(model.faces)
    cphi = phi[F].copy()
    clam = lam[F].copy()

    # unwrap the azimuth seam per face
    span = clam.max(axis=1) - clam.min(axis=1)
    wrap = span > np.pi
    clam[wrap] = np.where(clam[wrap] < np.pi, clam[wrap] + 2.0 * np.pi, clam[wrap])

    # pole corners have no azimuth of their own: borrow the face mean
    pole = (F == 0) | (F == NUM_VERTICES - 1)
    for c in range(3):
        rows = pole[:, c]
        others = [(c + 1) % 3, (c + 2) % 3]
        clam[rows, c] = 0.5 * (clam[rows, others[0]] + clam[rows, others[1]])

    lam_c = np.mod(clam.mean(axis=1), 2.0 * np.pi)
    phi_c = cphi.mean(axis=1)
    sector = np.minimum((lam_c / (np.pi / 3.0)).astype(int), 5)
    band = np.minimum((phi_c / (np.pi / 4.0)).astype(int), 3)
    part_of_face = band * 6 + sector + 1  # 1..24

    npz = {}
    face_uv = np.zeros((len(F), 3, 2))
    for part in range(1, 25):
        sel = np.nonzero(part_of_face == part)[0]
        part_lam = clam[sel]
        part_phi = cphi[sel]
        lam_lo, lam_hi = part_lam.min(), part_lam.max()
        phi_lo, phi_hi = part_phi.min(), part_phi.max()
        u = (part_lam - lam_lo) / max(lam_hi - lam_lo, 1e-9)
        v = (part_phi - phi_lo) / max(phi_hi - phi_lo, 1e-9)
        uv = np.stack([u, v], axis=2)
        npz[f"faces_{part:02d}"] = sel
        npz[f"uv_{part:02d}"] = uv
        face_uv[sel] = uv
    return npz, part_of_face, face_uv


@pytest.fixture(scope="session")
def chart(mini_model, tmp_path_factory):
    npz, part_of_face, face_uv = build_chart(mini_model)
    path = tmp_path_factory.mktemp("chart") / "chart.npz"
    np.savez(path, **npz)
    return {"path": path, "part_of_face": part_of_face, "face_uv": face_uv}


@pytest.fixture(scope="session")
def table_path(chart, tmp_path_factory):
    from soy_convert.uvtable import build_table

    out = tmp_path_factory.mktemp("table") / "lookup.smf"
    build_table(chart["path"], out)
    return out
