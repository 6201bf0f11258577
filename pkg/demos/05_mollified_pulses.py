"""
Ideal pulses as a limit
=======================

The ideal pulse makes the charges jump.  Spreading each pulse over a small
ball of radius eps gives a continuous source instead; the resulting data
operator approaches the ideal one as eps shrinks.  Outside the ball the
spread only multiplies each entry by the ball mean of ``exp(-s r)/r``.
"""
import numpy as np

from pointscat import ScattererArray, SensorArray, closed_form_operator, simulated_operator
from pointscat.validation import ball_mean_factor

sc = ScattererArray([[0, 0, 0]], [0.5])
se = SensorArray([[1, 0, 0], [0, 1.5, 0], [0, 0, -2]])
lam = 1.0
ideal = simulated_operator(sc, se, lam, T=20.0, h=1e-3).matrix
exact = closed_form_operator(sc, se, lam).matrix
print("ideal pulses vs closed form:", np.abs(ideal / exact - 1).max())

for eps in (0.2, 0.1, 0.05):
    F = simulated_operator(sc, se, lam, T=20.0, h=1e-3, epsilon=eps).matrix
    print(f"eps = {eps:<5} deviation {np.abs(F / ideal - 1).max():.3e}"
          f"   mean-value factor - 1 = {ball_mean_factor(np.sqrt(lam) * eps) - 1:.3e}")
