"""Rasterizer backend selection.

The compiled extension (`soy._core`, Cython) is used when it imported
successfully; otherwise the NumPy fallback. `SOY_BACKEND=python` or
`SOY_BACKEND=compiled` forces a choice at import time; `use()` switches
at runtime (mainly for tests and benchmarks). Both kernels are
bit-identical by construction.

The dense linear algebra elsewhere in the package is BLAS-bound through
NumPy in both modes; the rasterizer is the one genuinely loop-bound
kernel, which is why it alone is compiled.
"""

from __future__ import annotations

import os

from . import _raster_py

try:
    from . import _core

    HAVE_COMPILED = True
except ImportError:  # pragma: no cover - depends on build environment
    _core = None
    HAVE_COMPILED = False

_env = os.environ.get("SOY_BACKEND", "auto")
if _env not in ("auto", "python", "compiled"):
    raise RuntimeError(f"SOY_BACKEND must be auto|python|compiled, got {_env!r}")
if _env == "compiled" and not HAVE_COMPILED:
    raise RuntimeError("SOY_BACKEND=compiled but soy._core failed to import")

_current = "compiled" if (HAVE_COMPILED and _env != "python") else "python"


def current() -> str:
    return _current


def available() -> tuple[str, ...]:
    return ("python", "compiled") if HAVE_COMPILED else ("python",)


def use(name: str) -> None:
    global _current
    if name not in available():
        raise ValueError(f"backend {name!r} not available (have {available()})")
    _current = name


def fill_triangles(tri, invz, ids, depth, face_id) -> None:
    if _current == "compiled":
        _core.fill_triangles(tri, invz, ids, depth, face_id)
    else:
        _raster_py.fill_triangles(tri, invz, ids, depth, face_id)
