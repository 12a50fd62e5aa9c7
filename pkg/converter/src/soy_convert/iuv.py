"""IUV image -> DCM correspondence file via the lookup table.

IUV convention: 8-bit RGB PNG; R = part index (0 background, 1..24),
G = u * 255, B = v * 255. One DCM record per foreground pixel through a
nearest-cell table lookup; pixels with out-of-range part indices are
skipped and counted.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .uvtable import NUM_PARTS, LookupTable


def iuv_to_dcm(iuv_path, table_path, out_path) -> dict:
    img = np.asarray(Image.open(iuv_path).convert("RGB"))
    h, w = img.shape[:2]
    part = img[:, :, 0].astype(np.int64)
    u = img[:, :, 1].astype(np.float64) / 255.0
    v = img[:, :, 2].astype(np.float64) / 255.0

    valid = (part >= 1) & (part <= NUM_PARTS)
    skipped = int((part > NUM_PARTS).sum())
    ys, xs = np.nonzero(valid)

    lines = [f"DCM1 {w} {h}"]
    if len(ys):
        table = LookupTable.load(table_path)
        faces, bary = table.lookup(part[ys, xs], u[ys, xs], v[ys, xs])
        for x, y, f, b in zip(xs, ys, faces, bary):
            lines.append(
                f"{float(x)!r} {float(y)!r} {int(f)} "
                f"{float(b[0])!r} {float(b[1])!r} {float(b[2])!r}"
            )
    Path(out_path).write_text("\n".join(lines) + "\n")
    return {"records": len(ys), "skipped": skipped, "size": (w, h)}
