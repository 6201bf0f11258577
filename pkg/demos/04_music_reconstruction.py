"""
Finding the scatterers
======================

For exact data the steering vector of a trial point lies in the range of F
exactly at the scatterers.  Scanning a grid with ``|phi| / |P phi|`` (P the
projector onto ker F) lights them up; noise blurs the kernel and the rank
threshold has to be relaxed.
"""
import numpy as np

from pointscat import (GridSpec, ScattererArray, SensorArray, closed_form_operator,
                       default_lambda, perturb_operator, reconstruct)
from pointscat.validation import fibonacci_sphere

truth = np.array([[-0.33, 0.21, 0.12], [0.36, -0.17, -0.22]])
sc = ScattererArray(truth, [0.5, 0.7])
se = SensorArray(fibonacci_sphere(12))
lam = default_lambda(sc, se)
op = closed_form_operator(sc, se, lam)
grid = GridSpec([-1, -1, -1], [1, 1, 1], 0.05)


def report(rec, label):
    print(f"{label}: rank {rec.rank}, singular values",
          np.array2string(rec.singular_values[:4], precision=2))
    for p in rec.peaks:
        err = np.linalg.norm(truth - p.pos, axis=1).min()
        print(f"   peak {np.round(p.pos, 3)} score {p.score:.3g} error {err:.3f}")


report(reconstruct(op, se, grid), "exact data")
report(reconstruct(perturb_operator(op, 0.01, seed=1), se, grid, rank_tol=1e-2), "1% noise")

# the peak sits on a grid node, so off-grid scatterers are located to
# within the grid cell; on-grid scatterers come out exactly
on_grid = ScattererArray([[-0.35, 0.2, 0.1], [0.35, -0.15, -0.2]], [0.5, 0.7])
rec = reconstruct(closed_form_operator(on_grid, se, lam), se, grid)
print("on-grid peaks", [np.round(p.pos, 12).tolist() for p in rec.peaks])
