import struct

import numpy as np
import pytest

from soy import smf
from soy.model import InvariantError, load_model, model_from_arrays


def test_container_round_trip(tmp_path):
    chunks = {
        "alpha": np.arange(12, dtype=np.float64).reshape(3, 4),
        "beta": np.arange(6, dtype=np.uint32).reshape(2, 3),
        "gamma": np.array([7.5]),
    }
    path = tmp_path / "t.smf"
    smf.write_chunks(path, chunks)
    back = smf.read_chunks(path)
    assert list(back) == ["alpha", "beta", "gamma"]
    for name in chunks:
        np.testing.assert_array_equal(back[name], chunks[name])
        assert back[name].dtype == chunks[name].dtype


def test_write_is_byte_stable(tmp_path):
    chunks = {"a": np.linspace(0, 1, 7), "b": np.arange(4, dtype=np.uint32)}
    p1, p2 = tmp_path / "a.smf", tmp_path / "b.smf"
    smf.write_chunks(p1, chunks)
    smf.write_chunks(p2, chunks)
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.smf"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(smf.BadMagicError):
        smf.read_chunks(path)


def test_truncated_payload_names_chunk(tmp_path):
    path = tmp_path / "trunc.smf"
    smf.write_chunks(path, {"shapedirs": np.ones((4, 4))})
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(smf.ChunkShapeError) as exc:
        smf.read_chunks(path)
    assert exc.value.chunk == "shapedirs"


def test_unknown_dtype_code(tmp_path):
    path = tmp_path / "odd.smf"
    name = b"x"
    payload = struct.pack("<H", len(name)) + name + struct.pack("<BB", 9, 1) + struct.pack("<Q", 1)
    path.write_bytes(smf.MAGIC + struct.pack("<I", 1) + payload + b"\x00" * 8)
    with pytest.raises(smf.ChunkFormatError):
        smf.read_chunks(path)


def test_missing_chunk(tmp_path):
    path = tmp_path / "missing.smf"
    smf.write_chunks(path, {"v_template": np.zeros((4, 3))})
    with pytest.raises(smf.MissingChunkError) as exc:
        load_model(path)
    assert exc.value.chunk == "shapedirs"


def test_load_valid_model(model_path):
    m = load_model(model_path)
    assert m.num_betas == 10
    assert m.v_template.shape == (6890, 3)
    assert m.joint_regressor.shape == (24, 6890)
    assert m.faces.shape == (13776, 3)
    assert m.parents[0] == -1


def test_save_load_round_trip(model, model_path):
    m = load_model(model_path)
    np.testing.assert_array_equal(m.v_template, model.v_template)
    np.testing.assert_array_equal(m.shapedirs, model.shapedirs)
    np.testing.assert_array_equal(m.skin_weights, model.skin_weights)
    np.testing.assert_array_equal(m.parents, model.parents)
    np.testing.assert_array_equal(m.pose_prior_cov, model.pose_prior_cov)


def test_truncated_shapedirs_shape_mismatch(model_chunks):
    chunks = model_chunks()
    chunks["shapedirs"] = chunks["shapedirs"][:-10]
    with pytest.raises(smf.ChunkShapeError) as exc:
        model_from_arrays(chunks)
    assert exc.value.chunk == "shapedirs"


def test_skin_weight_row_sum_violation(model_chunks):
    chunks = model_chunks()
    chunks["skin_weights"][0] *= 0.9
    with pytest.raises(InvariantError) as exc:
        model_from_arrays(chunks)
    assert exc.value.chunk == "skin_weights"


def test_negative_skin_weight(model_chunks):
    chunks = model_chunks()
    chunks["skin_weights"][3, 0] -= 2.0 * chunks["skin_weights"][3, 0] + 0.25
    chunks["skin_weights"][3] /= chunks["skin_weights"][3].sum()
    with pytest.raises(InvariantError) as exc:
        model_from_arrays(chunks)
    assert exc.value.chunk == "skin_weights"


def test_non_spd_covariance(model_chunks):
    chunks = model_chunks()
    cov = chunks["shape_prior_cov"].copy()
    cov[0, 0] = -1.0
    chunks["shape_prior_cov"] = cov
    with pytest.raises(InvariantError) as exc:
        model_from_arrays(chunks)
    assert exc.value.chunk == "shape_prior_cov"


def test_asymmetric_covariance(model_chunks):
    chunks = model_chunks()
    cov = chunks["pose_prior_cov"].copy()
    cov[0, 1] += 0.5
    chunks["pose_prior_cov"] = cov
    with pytest.raises(InvariantError) as exc:
        model_from_arrays(chunks)
    assert exc.value.chunk == "pose_prior_cov"


def test_face_index_out_of_range(model_chunks):
    chunks = model_chunks()
    faces = chunks["faces"].copy()
    faces[0, 0] = 6890
    chunks["faces"] = faces
    with pytest.raises(InvariantError) as exc:
        model_from_arrays(chunks)
    assert exc.value.chunk == "faces"


def test_parent_order_violation(model_chunks):
    chunks = model_chunks()
    parents = chunks["parents"].copy()
    parents[5] = 9
    chunks["parents"] = parents
    with pytest.raises(InvariantError) as exc:
        model_from_arrays(chunks)
    assert exc.value.chunk == "parents"
