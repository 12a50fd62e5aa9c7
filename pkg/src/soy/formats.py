"""On-disk formats: params JSON, DCM correspondence text, keypoints JSON
(with OpenPose BODY_25 remapping), PGM masks, Wavefront OBJ, scene dirs.

Writers are byte-stable: JSON is sorted-key with repr floats, DCM uses
repr floats, OBJ uses fixed 6-decimal vertices. Numeric round-trips are
exact for JSON/DCM (repr is shortest-exact) and 1e-6 for OBJ text.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from .losses import DenseCorrespondenceMap, Keypoints2D
from .model import BodyParams, Mesh, NUM_JOINTS, NUM_POSE
from .raster import SilhouetteMask


class InputFileError(ValueError):
    """A user-supplied file is missing, malformed, or inconsistent."""

    def __init__(self, path, detail: str):
        super().__init__(f"{path}: {detail}")
        self.path = str(path)


# --------------------------------------------------------------------------
# params JSON


def _float_list(a: np.ndarray) -> list[float]:
    return [float(x) for x in np.asarray(a).ravel()]


def write_params(path, params: BodyParams, meta: dict | None = None) -> None:
    doc = {
        "theta": _float_list(params.theta),
        "beta": _float_list(params.beta),
        "gamma": _float_list(params.gamma),
        "cam_t": _float_list(params.cam_t),
        "meta": meta or {},
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_params(path) -> tuple[BodyParams, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise InputFileError(path, "file not found") from exc
    except json.JSONDecodeError as exc:
        raise InputFileError(path, f"invalid JSON at line {exc.lineno}") from exc
    try:
        theta = np.asarray(doc["theta"], dtype=np.float64)
        beta = np.asarray(doc["beta"], dtype=np.float64)
        gamma = np.asarray(doc["gamma"], dtype=np.float64)
        cam_t = np.asarray(doc["cam_t"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputFileError(path, f"missing or malformed field: {exc}") from exc
    if theta.shape != (NUM_POSE,):
        raise InputFileError(path, f"theta must have {NUM_POSE} entries, got {theta.shape}")
    if gamma.shape != (3,) or cam_t.shape != (3,):
        raise InputFileError(path, "gamma and cam_t must have 3 entries")
    if beta.ndim != 1 or len(beta) < 1:
        raise InputFileError(path, "beta must be a non-empty vector")
    for name, arr in (("theta", theta), ("beta", beta), ("gamma", gamma), ("cam_t", cam_t)):
        if not np.isfinite(arr).all():
            raise InputFileError(path, f"non-finite values in {name}")
    return BodyParams(theta, beta, gamma, cam_t), doc.get("meta", {})


# --------------------------------------------------------------------------
# DCM correspondence text


def write_dcm(path, corr: DenseCorrespondenceMap) -> None:
    w, h = corr.image_size
    lines = [f"DCM1 {w} {h}"]
    for (u, v), f, (b0, b1, b2) in zip(corr.pixels, corr.face, corr.bary):
        lines.append(
            f"{float(u)!r} {float(v)!r} {int(f)} {float(b0)!r} {float(b1)!r} {float(b2)!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_dcm(path) -> DenseCorrespondenceMap:
    try:
        text = Path(path).read_text()
    except FileNotFoundError as exc:
        raise InputFileError(path, "file not found") from exc
    lines = text.splitlines()
    header = None
    records = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if header is None:
            parts = line.split()
            if len(parts) != 3 or parts[0] != "DCM1":
                raise InputFileError(path, f"line {lineno}: expected 'DCM1 <W> <H>' header")
            try:
                header = (int(parts[1]), int(parts[2]))
            except ValueError as exc:
                raise InputFileError(path, f"line {lineno}: bad header dimensions") from exc
            continue
        parts = line.split()
        if len(parts) != 6:
            raise InputFileError(path, f"line {lineno}: expected 6 fields, got {len(parts)}")
        try:
            u, v = float(parts[0]), float(parts[1])
            f = int(parts[2])
            b = (float(parts[3]), float(parts[4]), float(parts[5]))
        except ValueError as exc:
            raise InputFileError(path, f"line {lineno}: {exc}") from exc
        records.append((u, v, f, *b))
    if header is None:
        raise InputFileError(path, "missing DCM1 header")
    if records:
        arr = np.asarray(records, dtype=np.float64)
        pixels, faces, bary = arr[:, :2], arr[:, 2].astype(np.int64), arr[:, 3:]
    else:
        pixels = np.zeros((0, 2))
        faces = np.zeros(0, dtype=np.int64)
        bary = np.zeros((0, 3))
    try:
        return DenseCorrespondenceMap(header, pixels, faces, bary)
    except ValueError as exc:
        raise InputFileError(path, str(exc)) from exc


# --------------------------------------------------------------------------
# keypoints JSON (canonical 24-joint, or OpenPose BODY_25)


def _load_joint_map(map_path=None) -> list[int]:
    if map_path is not None:
        doc = json.loads(Path(map_path).read_text())
    else:
        doc = json.loads(
            resources.files("soy").joinpath("data/body25_to_smpl24.json").read_text()
        )
    mapping = doc["map"]
    if len(mapping) != NUM_JOINTS:
        raise ValueError(f"joint map must have {NUM_JOINTS} entries")
    return [int(x) for x in mapping]


def read_keypoints(path, joint_map_path=None) -> Keypoints2D:
    """Read canonical keypoints or an OpenPose BODY_25 document."""
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise InputFileError(path, "file not found") from exc
    except json.JSONDecodeError as exc:
        raise InputFileError(path, f"invalid JSON at line {exc.lineno}") from exc

    if "joints" in doc:
        joints = np.asarray(doc["joints"], dtype=np.float64)
        if joints.shape != (NUM_JOINTS, 3):
            raise InputFileError(path, f"joints must be {NUM_JOINTS} x 3, got {joints.shape}")
    elif "people" in doc:
        people = doc["people"]
        if not people:
            raise InputFileError(path, "OpenPose document contains no people")
        flat = np.asarray(people[0]["pose_keypoints_2d"], dtype=np.float64)
        if flat.size != 25 * 3:
            raise InputFileError(path, f"expected 75 BODY_25 values, got {flat.size}")
        body25 = flat.reshape(25, 3)
        mapping = _load_joint_map(joint_map_path)
        joints = np.zeros((NUM_JOINTS, 3))
        for smpl_idx, src in enumerate(mapping):
            if src >= 0:
                joints[smpl_idx] = body25[src]
        np.clip(joints[:, 2], 0.0, 1.0, out=joints[:, 2])
    else:
        raise InputFileError(path, "unrecognized keypoints document (no 'joints' or 'people')")
    try:
        return Keypoints2D(joints)
    except ValueError as exc:
        raise InputFileError(path, str(exc)) from exc


def write_keypoints(path, kp: Keypoints2D) -> None:
    doc = {"joints": [[float(x) for x in row] for row in kp.joints]}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# PGM masks


def write_pgm(path, mask: SilhouetteMask, *, binary: bool = True) -> None:
    w, h = mask.size
    if binary:
        header = f"P5\n{w} {h}\n255\n".encode("ascii")
        payload = np.where(mask.bitmap, 255, 0).astype(np.uint8).tobytes()
        Path(path).write_bytes(header + payload)
    else:
        rows = [" ".join("255" if x else "0" for x in row) for row in mask.bitmap]
        Path(path).write_text(f"P2\n{w} {h}\n255\n" + "\n".join(rows) + "\n")


def read_pgm(path) -> SilhouetteMask:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise InputFileError(path, "file not found") from exc
    if data[:2] not in (b"P5", b"P2"):
        raise InputFileError(path, "not a PGM file")
    binary = data[:2] == b"P5"

    # parse header tokens (magic, width, height, maxval), '#' comments allowed
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise InputFileError(path, "truncated PGM header")
        tokens.append(data[start:pos])
    try:
        w, h, maxval = int(tokens[0]), int(tokens[1]), int(tokens[2])
    except ValueError as exc:
        raise InputFileError(path, "malformed PGM header") from exc
    if maxval <= 0 or maxval > 255:
        raise InputFileError(path, f"unsupported PGM maxval {maxval}")

    if binary:
        pos += 1  # single whitespace after maxval
        payload = data[pos : pos + w * h]
        if len(payload) != w * h:
            raise InputFileError(path, "truncated PGM payload")
        values = np.frombuffer(payload, dtype=np.uint8).reshape(h, w)
    else:
        try:
            values = np.array(data[pos:].split(), dtype=np.int64).reshape(h, w)
        except ValueError as exc:
            raise InputFileError(path, "malformed P2 payload") from exc
    return SilhouetteMask(size=(w, h), bitmap=values != 0)


# --------------------------------------------------------------------------
# Wavefront OBJ


def export_obj(mesh: Mesh, path) -> None:
    """Write `v` lines (6 decimals) then 1-indexed `f` lines; byte-stable."""
    if not str(path):
        raise InputFileError("<empty>", "empty output path")
    path = Path(path)
    lines = [f"v {x:.6f} {y:.6f} {z:.6f}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    path.write_text("\n".join(lines) + "\n")


def read_obj(path) -> tuple[np.ndarray, np.ndarray]:
    verts, faces = [], []
    for raw in Path(path).read_text().splitlines():
        parts = raw.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            faces.append([int(x.split("/")[0]) - 1 for x in parts[1:4]])
    return np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int64)


# --------------------------------------------------------------------------
# scene directories


def write_scene(scene, outdir) -> None:
    from dataclasses import asdict

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_params(outdir / "params.json", scene.gt_params)
    write_dcm(outdir / "corr.dcm", scene.corr)
    write_keypoints(outdir / "keypoints.json", scene.keypoints)
    write_pgm(outdir / "mask.pgm", scene.mask)
    spec = asdict(scene.spec)
    if spec.get("beta_fixed") is not None:
        spec["beta_fixed"] = _float_list(spec["beta_fixed"])
    spec["size"] = list(spec["size"])
    manifest = {"seed": scene.seed, "spec": spec}
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
