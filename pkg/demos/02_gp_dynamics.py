"""
Cubic NLS dynamics and the GP ground state
==========================================

Split-step evolution of a kicked Gaussian, then the trapped ground state
found by energy minimisation.
"""
import numpy as np

from gplab.gp_field import (EvolutionParams, Field, evolution_summary, gp_energy, minimize_gp_energy,
                            nls_trajectory)

phi = Field.from_function(lambda x: np.exp(-x * x / 2 + 1j * x), 256, 20.0).normalized()
p = EvolutionParams(sigma=2.0, dt=1e-3, steps=2000)
traj = nls_trajectory(phi, p, every=250)
summ = evolution_summary(traj, a0=2.0 / (8 * np.pi))

print("   t      mass        energy")
for t, m, e in zip(summ["t"], summ["mass"], summ["energy"]):
    print(f"{t:5.2f}  {m:.12f}  {e:.10f}")

# ground state in V = x^2: free energy is exactly 1, repulsion raises it
trap = lambda x: x * x
for a0 in (0.0, 0.05, 0.1):
    ground = minimize_gp_energy(trap, a0, (256, 20.0))
    print(f"a0={a0:4.2f}  E_GP={gp_energy(ground, a0, trap):.8f}  peak |phi|^2={np.max(np.abs(ground.values)**2):.4f}")
