"""
Condensation along the many-body flow
=====================================

Evolve N bosons on a 1D periodic lattice from a product state and compare the
one-particle marginal with the NLS evolution of the condensate. The trace
distance shrinks as N grows, while a run with the wrong coupling stays off.
This is a reduced version of the ``gplab manybody`` experiment (N <= 4, M = 16).
"""
import numpy as np

from gplab.fock_lattice import LatticeSpec, assemble_hamiltonian, evolve_manybody, product_state
from gplab.gp_field import EvolutionParams, Field, evolve_nls
from gplab.marginals import condensate_fraction, pair_correlation, projector, reduce, trace_distance
from gplab.potentials import PotentialSpec, ScaledPair
from gplab.scattering import coupling_constant

lat = LatticeSpec(16, 4.0)
pot = PotentialSpec("smooth_bump", 2.0, 1.2, 1)
beta, t = 0.5, 0.5
sigma = coupling_constant(pot, beta)  # b0 for beta < 1
phi = Field.from_function(lambda x: np.exp(-x * x / 2), lat.m, lat.length).normalized()


def nls(s):
    p = EvolutionParams(sigma=s, dt=1e-3, steps=500, dispersion="lattice")
    return projector(evolve_nls(phi, p))


ref, wrong = nls(sigma), nls(2 * sigma)
print(f"sigma = {sigma:.5f}")
print(" N   delta_N   delta(2 sigma)  lambda_max  g2(0)")
for n in (2, 3, 4):
    ham = assemble_hamiltonian(lat, n, ScaledPair(pot, n, beta))
    psi = evolve_manybody(product_state(phi, n, lat), ham, 0.05, 10, krylov_dim=20)
    g1 = reduce(psi, 1)
    lam, _ = condensate_fraction(g1)
    g2 = pair_correlation(reduce(psi, 2)).g2
    print(f"{n:2d}  {trace_distance(g1, ref):.5f}   {trace_distance(g1, wrong):.5f}        "
          f"{lam:.6f}    {g2[0]:.4f}")
