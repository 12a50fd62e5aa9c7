"""Build the per-part UV-chart -> (face, barycentric) lookup table.

The user supplies chart data (whichever released variant they have) as an
npz with, per part p in 1..24, `faces_p` (N,) face indices and `uv_p`
(N, 3, 2) chart coordinates of each face's corners in [0, 1]. Each part
gets a 256x256 nearest-cell grid; grid nodes sit at k/(res-1), which
lines up exactly with 8-bit IUV quantization when res = 256.

The table is stored in the SMF chunk container, with the chart file's
sha256 recorded alongside.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .smf import read_chunks, write_chunks

NUM_PARTS = 24
DEFAULT_RESOLUTION = 256


class ChartDataError(ValueError):
    pass


def _barycentric(uv_tri: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of 2D points w.r.t. one UV triangle."""
    a, b, c = uv_tri
    m = np.stack([b - a, c - a], axis=1)  # (2, 2)
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if det == 0.0:
        return np.full((len(points), 3), np.nan)
    inv = np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det
    rel = points - a
    b1b2 = rel @ inv.T
    b0 = 1.0 - b1b2.sum(axis=1)
    return np.concatenate([b0[:, None], b1b2], axis=1)


def _fill_part(faces: np.ndarray, uv: np.ndarray, res: int):
    """Rasterize UV triangles onto the grid; nearest-centroid fills holes."""
    face_grid = np.full((res, res), -1, dtype=np.int64)
    bary_grid = np.zeros((res, res, 3))
    nodes = np.arange(res) / (res - 1)

    for local, (fid, tri) in enumerate(zip(faces, uv)):
        lo = np.clip(np.ceil(tri.min(axis=0) * (res - 1) - 1e-12).astype(int), 0, res - 1)
        hi = np.clip(np.floor(tri.max(axis=0) * (res - 1) + 1e-12).astype(int), 0, res - 1)
        if (hi < lo).any():
            continue
        uu, vv = np.meshgrid(nodes[lo[0] : hi[0] + 1], nodes[lo[1] : hi[1] + 1])
        pts = np.stack([uu.ravel(), vv.ravel()], axis=1)
        bary = _barycentric(tri, pts)
        inside = (bary >= -1e-9).all(axis=1)
        if not inside.any():
            continue
        ii = (vv.ravel()[inside] * (res - 1)).round().astype(int)
        jj = (uu.ravel()[inside] * (res - 1)).round().astype(int)
        empty = face_grid[ii, jj] < 0  # first write wins; face order is fixed
        ii, jj = ii[empty], jj[empty]
        face_grid[ii, jj] = fid
        b = np.clip(bary[inside][empty], 0.0, None)
        bary_grid[ii, jj] = b / b.sum(axis=1, keepdims=True)

    holes = np.argwhere(face_grid < 0)
    if len(holes):
        centroids = uv.mean(axis=1)
        tree = cKDTree(centroids)
        pts = np.stack([holes[:, 1] / (res - 1), holes[:, 0] / (res - 1)], axis=1)
        _, nearest = tree.query(pts)
        for (i, j), local, pt in zip(holes, nearest, pts):
            b = np.clip(_barycentric(uv[local], pt[None, :])[0], 0.0, None)
            s = b.sum()
            bary_grid[i, j] = b / s if s > 0 else np.array([1.0, 0.0, 0.0])
            face_grid[i, j] = faces[local]
    return face_grid, bary_grid


def build_table(chart_path, out_path, resolution: int = DEFAULT_RESOLUTION) -> dict:
    chart_path = Path(chart_path)
    source = chart_path.read_bytes()
    sha = hashlib.sha256(source).digest()

    with np.load(chart_path) as npz:
        available = set(npz.files)
        chunks: dict[str, np.ndarray] = {
            "resolution": np.array([resolution], dtype=np.uint32),
            "parts": np.array([NUM_PARTS], dtype=np.uint32),
            "source_sha256": np.frombuffer(sha, dtype=np.uint32).copy(),
        }
        covered = 0
        for part in range(1, NUM_PARTS + 1):
            fkey, ukey = f"faces_{part:02d}", f"uv_{part:02d}"
            if fkey not in available or ukey not in available:
                raise ChartDataError(f"chart data is missing {fkey}/{ukey}")
            faces = np.asarray(npz[fkey], dtype=np.int64)
            uv = np.asarray(npz[ukey], dtype=np.float64)
            if uv.shape != (len(faces), 3, 2):
                raise ChartDataError(f"{ukey}: expected ({len(faces)}, 3, 2), got {uv.shape}")
            if len(faces) == 0:
                raise ChartDataError(f"{fkey}: part has no faces")
            face_grid, bary_grid = _fill_part(faces, uv, resolution)
            covered += int((face_grid >= 0).sum())
            chunks[f"part{part:02d}_face"] = face_grid.astype(np.uint32)
            chunks[f"part{part:02d}_bary"] = bary_grid
    write_chunks(out_path, chunks)
    return {"cells": NUM_PARTS * resolution * resolution, "covered_directly": covered,
            "source_sha256": sha.hex()}


class LookupTable:
    def __init__(self, faces: np.ndarray, bary: np.ndarray, resolution: int):
        self.faces = faces  # (24, res, res)
        self.bary = bary  # (24, res, res, 3)
        self.resolution = resolution

    @classmethod
    def load(cls, path) -> "LookupTable":
        chunks = read_chunks(path)
        res = int(chunks["resolution"][0])
        faces = np.stack([chunks[f"part{p:02d}_face"] for p in range(1, NUM_PARTS + 1)])
        bary = np.stack([chunks[f"part{p:02d}_bary"] for p in range(1, NUM_PARTS + 1)])
        return cls(faces.astype(np.int64), bary, res)

    def lookup(self, part: np.ndarray, u: np.ndarray, v: np.ndarray):
        """Vectorized nearest-cell lookup; part is 1-based."""
        res = self.resolution
        jj = np.clip(np.round(u * (res - 1)).astype(np.int64), 0, res - 1)
        ii = np.clip(np.round(v * (res - 1)).astype(np.int64), 0, res - 1)
        p = part.astype(np.int64) - 1
        return self.faces[p, ii, jj], self.bary[p, ii, jj]
