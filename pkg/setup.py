"""Build script: compiles the optional rasterizer extension when Cython is available.

The package works without the extension; `soy.backend` falls back to the
vectorized NumPy kernels at import time.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "soy._core",
                ["src/soy/_core.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
