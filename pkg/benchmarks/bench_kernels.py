"""Time the compiled and NumPy per-triangle kernels on dumbbell meshes.

Run from the repository root after an editable install::

    python3 benchmarks/bench_kernels.py [--h 0.03125 0.015625] [--repeat 5] [--preset laplacian]

For each mesh and backend, prints the best-of-``repeat`` wall time of each
kernel and the speedup of the compiled backend.  Outputs of the two
backends are also compared so a timing is never reported for a wrong answer.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from spectral_perturb import _kernels
from spectral_perturb.coefficients import preset_from_dict
from spectral_perturb.fem import dof_of_vertex
from spectral_perturb.geometry import DomainSpec, build_dumbbell


def _cases(mesh, tensor):
    grads, areas = _kernels.p1_gradients(mesh.vertices, mesh.triangles)
    coeff = tensor(mesh.centroids)
    dofs = dof_of_vertex(mesh)
    field = np.random.default_rng(0).standard_normal((mesh.n_vertices, tensor.m))
    return {
        "p1_gradients": lambda impl: _kernels.p1_gradients(mesh.vertices, mesh.triangles, impl=impl),
        "stiffness_triplets": lambda impl: _kernels.stiffness_triplets(
            mesh.triangles, grads, areas, coeff, dofs, tensor.m, impl=impl),
        "mass_triplets": lambda impl: _kernels.mass_triplets(
            mesh.triangles, areas, dofs, tensor.m, impl=impl),
        "field_gradients": lambda impl: _kernels.field_gradients(
            field, mesh.triangles, grads, impl=impl),
    }


def _same(a, b) -> bool:
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return all(np.allclose(x, y, rtol=1e-12, atol=1e-12) for x, y in zip(a, b))


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--h", type=float, nargs="+", default=[1 / 32, 1 / 64, 1 / 128])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--preset", default="lame_const")
    args = parser.parse_args(argv)

    impls = _kernels.implementations()
    if "cython" not in impls:
        print("compiled backend not built; only the NumPy backend will be timed")
    tensor = preset_from_dict({"preset": args.preset})
    print(f"{'h':>10} {'triangles':>10} {'kernel':>20} " + " ".join(f"{n:>10}" for n in impls)
          + f" {'speedup':>8}")
    for h in args.h:
        mesh = build_dumbbell(DomainSpec.symmetric(), 0.25, h)
        for name, fn in _cases(mesh, tensor).items():
            results = {n: fn(impl) for n, impl in impls.items()}
            if "cython" in results and not _same(results["python"], results["cython"]):
                raise SystemExit(f"{name}: backends disagree at h={h}")
            times = {n: min(timeit.repeat(lambda: fn(impl), number=1, repeat=args.repeat))
                     for n, impl in impls.items()}
            speed = times["python"] / times["cython"] if "cython" in times else float("nan")
            print(f"{h:>10.6g} {len(mesh.triangles):>10} {name:>20} "
                  + " ".join(f"{times[n] * 1e3:>8.2f}ms" for n in impls) + f" {speed:>7.1f}x")


if __name__ == "__main__":
    main()
