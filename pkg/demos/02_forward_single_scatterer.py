"""
A pulse hitting one scatterer
=============================

The scatterer's charge jumps when the pulse arrives and then decays at rate
``4 pi alpha``; the scattered wave is the charge, retarded and spread as
``1/(4 pi R)``.  Everything here has a closed form to compare against.
"""
import numpy as np

from pointscat import (PulseWeights, ScattererArray, SensorArray, laplace_transform,
                       scattered_field, sensor_traces, solve_charges)

alpha, r0, R = 0.5, 1.0, 2.0
sc = ScattererArray([[0, 0, 0]], [alpha])
emitter = SensorArray([[r0, 0, 0]])
ch = solve_charges(sc, emitter, PulseWeights([1.0]), T=5.0, h=1e-3)

t = np.array([0.5, 1.0, 1.5, 3.0])
exact = np.where(t >= r0, np.exp(-4 * np.pi * alpha * (t - r0)) / r0, 0.0)
print("q(t)      ", ch.sample(0, t))
print("closed form", exact)

# the wave at distance R switches on at r0 + R
x = [0, R, 0]
print("\nu_s(2.9) =", scattered_field(ch, sc, 2.9, x))
print("u_s(3.5) =", scattered_field(ch, sc, 3.5, x), " exact", np.exp(-np.pi) / (8 * np.pi))

# Laplace transform of the recorded trace against the frequency-domain answer
se = SensorArray([[r0, 0, 0], [0, R, 0]])
s = 1.0
for h in (1e-3, 2.5e-4):
    tr = sensor_traces(sc, se, PulseWeights([1.0, 0.0]), T=16.0, h=h)
    F = laplace_transform(tr.times, tr.values[1], s)
    exact_F = np.exp(-s * (R + r0)) / (4 * np.pi * R * r0 * (s + 4 * np.pi * alpha))
    print(f"h = {h:g}: transform {F:.10f}, exact {exact_F:.10f}, rel err {abs(F / exact_F - 1):.1e}")
