"""
Where the point-scatterer spectrum ends
=======================================

Negative couplings bind: the scatterer array then has discrete eigenvalues
``lam > 0``, found as the zeros of ``det M(lam)``.  Everything downstream
needs a spectral parameter above the largest of them.
"""
import numpy as np
from scipy.special import lambertw

from pointscat import (ScattererArray, build_m, is_positive_definite, lambda_upper_bound,
                       sup_spectrum_estimate)

# a single scatterer with alpha = -1/(4 pi) has its only eigenvalue at lam = 1
single = ScattererArray([[0, 0, 0]], [-1 / (4 * np.pi)])
rep = sup_spectrum_estimate(single, tol=1e-12)
print("singleton: bound", rep.lambda_bound, " top eigenvalue", rep.sup_estimate)

# M is indefinite just below and positive definite just above it
for lam in (0.99, 1.01):
    print(f"  lam = {lam}: positive definite -> {is_positive_definite(build_m(single, lam))}")

# two zero-coupling scatterers at unit distance: the bound solves s = exp(-s)
pair = ScattererArray([[0, 0, 0], [1, 0, 0]], [0.0, 0.0])
print("\npair bound", lambda_upper_bound(pair), " W(1)^2 =", lambertw(1).real ** 2)

# two bound scatterers far apart: the eigenvalue splits into a close pair,
# which a determinant sign scan alone would miss
far = ScattererArray([[0, 0, 0], [10, 0, 0]], [-1 / (4 * np.pi)] * 2)
rep = sup_spectrum_estimate(far, tol=1e-13)
print("\nfar pair eigenvalues", rep.discrete_eigs)
print("splitting", np.diff(rep.discrete_eigs)[0], " predicted 4 exp(-10)/10 =", 0.4 * np.exp(-10))
