"""
The data operator, simulated and factorised
===========================================

The N x N operator can be read off time-domain simulations (one unit pulse
per sensor, Laplace-transformed) or written down directly from the
interaction matrix.  The two routes share no code beyond the geometry.
"""
import time

import numpy as np

from pointscat import (ScattererArray, SensorArray, closed_form_operator, lambda_upper_bound,
                       simulated_operator)
from pointscat.validation import random_sphere

rng = np.random.default_rng(0)
sc = ScattererArray([[-0.4, 0.1, 0.2], [0.3, -0.2, 0.0], [0.1, 0.5, -0.3]], [0.3, 0.6, 0.9])
se = SensorArray(random_sphere(rng, 8))
lam = lambda_upper_bound(sc) + 1

Fc = closed_form_operator(sc, se, lam).matrix
t0 = time.perf_counter()
sim = simulated_operator(sc, se, lam)
print(f"simulation took {time.perf_counter() - t0:.2f}s with", sim.provenance)

rel = np.abs(sim.matrix - Fc) / np.abs(Fc)
print("max relative difference", rel.max())

# the closed form is symmetric positive semi-definite with rank n
ev = np.linalg.eigvalsh(Fc)
print("eigenvalues of F:", np.array2string(ev, precision=2))
