"""
Scattering length of a soft potential
=====================================

Solve the zero-energy radial equation u'' = V u / 2 and read off a0 two ways:
from the linear tail u(r) = r - a0, and from the integral of V f.
"""
import math

import numpy as np

from gplab.potentials import PotentialSpec, b0_integral
from gplab.scattering import (build_correlation, scattering_length_integral, scattering_length_tail,
                              solve_zero_energy)

# soft sphere: closed form a0 = R - tanh(kR)/k with k = sqrt(V0/2)
soft = PotentialSpec("soft_sphere", 2.0, 1.0)
sol = solve_zero_energy(soft)
print("soft sphere a0 (tail)     ", scattering_length_tail(sol))
print("soft sphere a0 (integral) ", scattering_length_integral(soft, sol))
print("closed form               ", 1.0 - math.tanh(1.0))

# weak potentials: 8 pi a0 approaches the Born value b0 = int V
for v0 in (1.0, 0.1, 1e-4):
    spec = PotentialSpec("smooth_bump", v0, 1.0)
    ratio = 8 * math.pi * solve_zero_energy(spec).a0 / b0_integral(spec)
    print(f"V0={v0:8.1e}  8 pi a0 / b0 = {ratio:.6f}")

# the scaled potential N^2 V(N x) has scattering length a0 / N
for n in (1, 10, 100):
    f_n = build_correlation(sol, n)
    r = np.array([0.0, 0.5 / n, 1.0 / n, 2.0 / n])
    print(f"N={n:4d}  a0/N={f_n.scattering_length:.6f}  f_N at (0, .5, 1, 2)/N = {np.round(f_n(r), 4)}")
