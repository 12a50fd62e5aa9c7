"""Pure-NumPy rasterizer kernel, the fallback for `soy._core`.

Evaluates the same per-pixel expressions as the compiled kernel, in the
same order, so the two backends produce bit-identical buffers.
"""

from __future__ import annotations

import math

import numpy as np


def fill_triangles(tri, invz, ids, depth, face_id):
    H, W = depth.shape
    for f in range(len(tri)):
        (ax, ay), (bx, by), (cx, cy) = tri[f]
        iz0, iz1, iz2 = invz[f]

        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area == 0.0:
            continue
        if area < 0.0:
            bx, cx = cx, bx
            by, cy = cy, by
            iz1, iz2 = iz2, iz1
            area = -area

        x0 = max(0, math.ceil(min(ax, bx, cx)))
        x1 = min(W - 1, math.floor(max(ax, bx, cx)))
        y0 = max(0, math.ceil(min(ay, by, cy)))
        y1 = min(H - 1, math.floor(max(ay, by, cy)))
        if x0 > x1 or y0 > y1:
            continue

        dx0, dy0 = cx - bx, cy - by
        dx1, dy1 = ax - cx, ay - cy
        dx2, dy2 = bx - ax, by - ay
        tl0 = dy0 < 0.0 or (dy0 == 0.0 and dx0 > 0.0)
        tl1 = dy1 < 0.0 or (dy1 == 0.0 and dx1 > 0.0)
        tl2 = dy2 < 0.0 or (dy2 == 0.0 and dx2 > 0.0)

        px = np.arange(x0, x1 + 1, dtype=np.float64)[None, :]
        py = np.arange(y0, y1 + 1, dtype=np.float64)[:, None]
        w0 = dx0 * (py - by) - dy0 * (px - bx)
        w1 = dx1 * (py - cy) - dy1 * (px - cx)
        w2 = dx2 * (py - ay) - dy2 * (px - ax)
        cover = (
            ((w0 > 0.0) | ((w0 == 0.0) & tl0))
            & ((w1 > 0.0) | ((w1 == 0.0) & tl1))
            & ((w2 > 0.0) | ((w2 == 0.0) & tl2))
        )
        if not cover.any():
            continue

        b0 = w0 / area
        b1 = w1 / area
        b2 = w2 / area
        iz = b0 * iz0 + b1 * iz1 + b2 * iz2
        with np.errstate(divide="ignore", invalid="ignore"):
            zval = 1.0 / iz

        window_d = depth[y0 : y1 + 1, x0 : x1 + 1]
        window_f = face_id[y0 : y1 + 1, x0 : x1 + 1]
        write = cover & (zval < window_d)
        window_d[write] = zval[write]
        window_f[write] = ids[f]
