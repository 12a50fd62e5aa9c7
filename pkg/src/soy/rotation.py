"""Axis-angle rotations (Rodrigues) and their analytic derivatives.

R(w) = I + a(n) K + b(n) K^2 with K = [w]_x, n = |w|, a = sin(n)/n,
b = (1 - cos(n))/n^2. The coefficient derivatives come as
da/dw_i = fa * w_i, db/dw_i = fb * w_i. All four coefficients switch to
Taylor series below n < 1e-2, where the closed forms lose digits to
cancellation; the series are exact to f64 precision there.
"""

from __future__ import annotations

import numpy as np

_TAYLOR_CUTOFF = 1e-2


def _coefficients(n2: np.ndarray) -> tuple[np.ndarray, ...]:
    n = np.sqrt(n2)
    small = n < _TAYLOR_CUTOFF
    ns = np.where(small, 0.0, n)  # avoid 0/0 in the closed forms
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(small, 1.0 - n2 / 6.0 + n2 * n2 / 120.0, np.sin(ns) / ns)
        b = np.where(small, 0.5 - n2 / 24.0 + n2 * n2 / 720.0, (1.0 - np.cos(ns)) / n2)
        fa = np.where(
            small,
            -1.0 / 3.0 + n2 / 30.0 - n2 * n2 / 840.0,
            (ns * np.cos(ns) - np.sin(ns)) / (n2 * ns),
        )
        fb = np.where(
            small,
            -1.0 / 12.0 + n2 / 180.0 - n2 * n2 / 6720.0,
            (ns * np.sin(ns) - 2.0 * (1.0 - np.cos(ns))) / (n2 * n2),
        )
    return a, b, fa, fb


def _cross_matrices(w: np.ndarray) -> np.ndarray:
    K = np.zeros(w.shape[:-1] + (3, 3))
    K[..., 0, 1] = -w[..., 2]
    K[..., 0, 2] = w[..., 1]
    K[..., 1, 0] = w[..., 2]
    K[..., 1, 2] = -w[..., 0]
    K[..., 2, 0] = -w[..., 1]
    K[..., 2, 1] = w[..., 0]
    return K


_E = _cross_matrices(np.eye(3))  # [e_i]_x basis


def rodrigues(w: np.ndarray) -> np.ndarray:
    """Rotation matrices for axis-angle vectors, shape (..., 3) -> (..., 3, 3)."""
    w = np.asarray(w, dtype=np.float64)
    n2 = np.einsum("...i,...i->...", w, w)
    a, b, _, _ = _coefficients(n2)
    K = _cross_matrices(w)
    K2 = K @ K
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + a[..., None, None] * K + b[..., None, None] * K2


def rodrigues_with_jacobian(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rotations plus dR/dw, shapes (..., 3, 3) and (..., 3, 3, 3).

    The last axis of the Jacobian indexes the axis-angle component:
    out[..., :, :, i] = dR/dw_i.
    """
    w = np.asarray(w, dtype=np.float64)
    n2 = np.einsum("...i,...i->...", w, w)
    a, b, fa, fb = _coefficients(n2)
    K = _cross_matrices(w)
    K2 = K @ K
    eye = np.broadcast_to(np.eye(3), K.shape)
    R = eye + a[..., None, None] * K + b[..., None, None] * K2

    # dR/dw_i = fa w_i K + a E_i + fb w_i K^2 + b (E_i K + K E_i)
    EK = np.einsum("ijm,...mk->...jki", _E, K)
    KE = np.einsum("...jm,imk->...jki", K, _E)
    dR = (
        fa[..., None, None, None] * K[..., None] * w[..., None, None, :]
        + a[..., None, None, None] * np.moveaxis(_E, 0, -1)
        + fb[..., None, None, None] * K2[..., None] * w[..., None, None, :]
        + b[..., None, None, None] * (EK + KE)
    )
    return R, dR
