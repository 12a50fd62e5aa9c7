# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled rasterizer kernel.

Scalar per-pixel loops over each triangle's bounding box; z-buffered with
a top-left fill rule. The NumPy fallback in `_raster_py` evaluates the
same expressions in the same order, so both backends produce bit-identical
buffers.
"""

from libc.math cimport ceil, floor


def fill_triangles(double[:, :, ::1] tri, double[:, ::1] invz, long[::1] ids,
                   double[:, ::1] depth, int[:, ::1] face_id):
    """Rasterize triangles (screen xy per corner) into depth/face buffers.

    tri: (F, 3, 2) pixel coordinates; invz: (F, 3) inverse camera depth;
    ids: (F,) face indices written into face_id on z-pass.
    """
    cdef Py_ssize_t F = tri.shape[0]
    cdef Py_ssize_t H = depth.shape[0]
    cdef Py_ssize_t W = depth.shape[1]
    cdef Py_ssize_t f, px, py, x0, x1, y0, y1
    cdef double ax, ay, bx, by, cx, cy, sw
    cdef double iz0, iz1, iz2, area
    cdef double dx0, dy0, dx1, dy1, dx2, dy2
    cdef double w0, w1, w2, b0, b1, b2, iz, zval
    cdef double minx, maxx, miny, maxy
    cdef bint tl0, tl1, tl2

    for f in range(F):
        ax = tri[f, 0, 0]; ay = tri[f, 0, 1]
        bx = tri[f, 1, 0]; by = tri[f, 1, 1]
        cx = tri[f, 2, 0]; cy = tri[f, 2, 1]
        iz0 = invz[f, 0]; iz1 = invz[f, 1]; iz2 = invz[f, 2]

        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area == 0.0:
            continue
        if area < 0.0:
            sw = bx; bx = cx; cx = sw
            sw = by; by = cy; cy = sw
            sw = iz1; iz1 = iz2; iz2 = sw
            area = -area

        minx = ax if ax < bx else bx
        if cx < minx: minx = cx
        maxx = ax if ax > bx else bx
        if cx > maxx: maxx = cx
        miny = ay if ay < by else by
        if cy < miny: miny = cy
        maxy = ay if ay > by else by
        if cy > maxy: maxy = cy

        x0 = <Py_ssize_t>ceil(minx)
        if x0 < 0: x0 = 0
        x1 = <Py_ssize_t>floor(maxx)
        if x1 > W - 1: x1 = W - 1
        y0 = <Py_ssize_t>ceil(miny)
        if y0 < 0: y0 = 0
        y1 = <Py_ssize_t>floor(maxy)
        if y1 > H - 1: y1 = H - 1
        if x0 > x1 or y0 > y1:
            continue

        dx0 = cx - bx; dy0 = cy - by
        dx1 = ax - cx; dy1 = ay - cy
        dx2 = bx - ax; dy2 = by - ay
        tl0 = dy0 < 0.0 or (dy0 == 0.0 and dx0 > 0.0)
        tl1 = dy1 < 0.0 or (dy1 == 0.0 and dx1 > 0.0)
        tl2 = dy2 < 0.0 or (dy2 == 0.0 and dx2 > 0.0)

        for py in range(y0, y1 + 1):
            for px in range(x0, x1 + 1):
                w0 = dx0 * (py - by) - dy0 * (px - bx)
                w1 = dx1 * (py - cy) - dy1 * (px - cx)
                w2 = dx2 * (py - ay) - dy2 * (px - ax)
                if not (w0 > 0.0 or (w0 == 0.0 and tl0)):
                    continue
                if not (w1 > 0.0 or (w1 == 0.0 and tl1)):
                    continue
                if not (w2 > 0.0 or (w2 == 0.0 and tl2)):
                    continue
                b0 = w0 / area
                b1 = w1 / area
                b2 = w2 / area
                iz = b0 * iz0 + b1 * iz1 + b2 * iz2
                zval = 1.0 / iz
                if zval < depth[py, px]:
                    depth[py, px] = zval
                    face_id[py, px] = <int>ids[f]
