"""Compare the compiled rasterizer kernel against the NumPy fallback,
and show where a fit iteration actually spends its time.

Usage: python benchmarks/bench_backends.py
"""

import time

import numpy as np

from soy import backend
from soy.fitter import make_stage_config
from soy.losses import evaluate_objective
from soy.minimodel import build_mini_model
from soy.model import BodyParams, skin_derivatives
from soy.raster import rasterize
from soy.synth import SceneSpec, generate_scene


def timeit(fn, repeat=5):
    fn()  # warm up
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    model = build_mini_model()
    scene = generate_scene(model, SceneSpec(seed=0, n_records=2000))
    params = scene.gt_params

    print(f"available backends: {backend.available()}")
    print()
    print(f"{'kernel':<38}{'python':>12}{'compiled':>12}{'speedup':>9}")
    print("-" * 71)

    rows = []
    for size in ((224, 224), (512, 512)):
        times = {}
        for name in backend.available():
            backend.use(name)
            cam = scene.cam
            times[name] = timeit(lambda: rasterize(model, params, cam, size))
        rows.append((f"rasterize {size[0]}x{size[1]} (13776 faces)", times))

    # the fit iteration is BLAS-bound in both modes: the rasterizer is not
    # on that path, so the numbers should match
    for name in backend.available():
        backend.use(name)
        t_obj = timeit(
            lambda: evaluate_objective(
                model, params, scene.cam, make_stage_config(2).weights, corr=scene.corr
            )
        )
        t_jac = timeit(lambda: skin_derivatives(model, params))
        if name == "python":
            obj_times = {"python": t_obj}
            jac_times = {"python": t_jac}
        else:
            obj_times["compiled"] = t_obj
            jac_times["compiled"] = t_jac
    rows.append(("fit iteration (2000-record energy+grad)", obj_times))
    rows.append(("full-mesh jacobian (6890 verts)", jac_times))

    backend.use(backend.available()[-1])

    for label, times in rows:
        py = times.get("python", np.nan)
        cc = times.get("compiled", np.nan)
        speedup = py / cc if np.isfinite(cc) and cc > 0 else np.nan
        print(f"{label:<38}{py * 1e3:>10.1f} ms{cc * 1e3:>10.1f} ms{speedup:>8.1f}x")

    print()
    print("note: only the rasterizer has a compiled kernel; the dense-algebra")
    print("path runs through BLAS in both modes, which is why its two columns match.")


if __name__ == "__main__":
    main()
