import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gplab.gp_field import (AliasingError, AliasingWarning, ConvergenceError, EvolutionParams, Field,
                            evolution_summary, evolve_hartree, evolve_nls, gp_energy, kinetic_symbol,
                            mass, minimize_gp_energy, nls_trajectory, tangent_directional_derivative)

M, L = 256, 20.0


def gaussian(kick=1.0, m=M, length=L):
    return Field.from_function(lambda x: np.exp(-x * x / 2 + 1j * kick * x), m, length)


def test_plane_wave_free_evolution():
    k = 2 * math.pi * 3 / L
    phi = Field.from_function(lambda x: np.exp(1j * k * x), M, L)
    out = evolve_nls(phi, EvolutionParams(sigma=0.0, dt=0.01, steps=70))
    assert np.max(np.abs(out.values - phi.values * np.exp(-1j * k * k * 0.7))) < 1e-12


def test_constant_field_phase():
    phi = Field(np.ones(M), L)
    out = evolve_nls(phi, EvolutionParams(sigma=2.0, dt=1e-3, steps=1000))
    assert np.max(np.abs(out.values - np.exp(-2j))) < 1e-8


def test_strang_order():
    phi = gaussian()
    ref = evolve_nls(phi, EvolutionParams(sigma=3.0, dt=1e-4, steps=5000))
    errs = []
    for dt in (1e-2, 5e-3, 2.5e-3):
        out = evolve_nls(phi, EvolutionParams(sigma=3.0, dt=dt, steps=int(round(0.5 / dt))))
        errs.append(math.sqrt(mass(Field(out.values - ref.values, L))))
    slopes = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(abs(s - 2.0) < 0.1 for s in slopes)


def test_mass_and_energy_conservation():
    phi = gaussian()
    p = EvolutionParams(sigma=2.0, dt=1e-3, steps=1000)
    summ = evolution_summary(nls_trajectory(phi, p, every=100), a0=2.0 / (8 * math.pi))
    assert summ["max_mass_drift"] < 1e-12
    assert summ["max_energy_drift"] < 1e-6


def test_time_reversal():
    phi = gaussian()
    p = EvolutionParams(sigma=2.0, dt=1e-3, steps=500)
    fwd = evolve_nls(phi, p)
    # backward evolution: conjugate, evolve forward, conjugate
    back = evolve_nls(Field(fwd.values.conj(), L), p)
    assert np.max(np.abs(back.values.conj() - phi.values)) < 1e-8


def test_hartree_zero_kernel_is_free():
    phi = gaussian()
    free = evolve_nls(phi, EvolutionParams(sigma=0.0, dt=1e-3, steps=200))
    hart = evolve_hartree(phi, EvolutionParams(kernel=np.zeros(M), dt=1e-3, steps=200))
    assert np.max(np.abs(free.values - hart.values)) < 1e-14


def test_hartree_constant_field():
    kernel = lambda x: 1.5 * np.exp(-x * x)
    phi = Field(np.ones(M), L)
    out = evolve_hartree(phi, EvolutionParams(kernel=kernel, dt=1e-3, steps=1000))
    integral = 1.5 * math.sqrt(math.pi)
    assert np.max(np.abs(out.values - np.exp(-1j * integral))) < 1e-8


def test_hartree_approaches_nls():
    sigma = 2.0
    phi = gaussian(kick=0.5)
    p = dict(dt=1e-3, steps=300)
    nls = evolve_nls(phi, EvolutionParams(sigma=sigma, **p))
    errs = []
    for width in (0.8, 0.4, 0.2):
        kern = lambda x, w=width: sigma * np.exp(-x * x / (2 * w * w)) / (w * math.sqrt(2 * math.pi))
        out = evolve_hartree(phi, EvolutionParams(kernel=kern, **p))
        errs.append(math.sqrt(mass(Field(out.values - nls.values, L))))
    assert errs[0] > errs[1] > errs[2]


def test_aliasing_warning_and_strict():
    phi = Field(np.ones(M), L)
    with pytest.warns(AliasingWarning):
        evolve_nls(phi, EvolutionParams(sigma=5000.0, dt=1e-3, steps=1))
    with pytest.raises(AliasingError):
        evolve_nls(phi, EvolutionParams(sigma=5000.0, dt=1e-3, steps=1, strict=True))


def test_mode_errors():
    phi = gaussian()
    with pytest.raises(ValueError):
        evolve_nls(phi, EvolutionParams(kernel=np.zeros(M)))
    with pytest.raises(ValueError):
        evolve_hartree(phi, EvolutionParams())
    with pytest.raises(ValueError):
        EvolutionParams(dt=0.0)


def test_energy_examples():
    k = 2 * math.pi * 2 / L
    wave = Field.from_function(lambda x: np.exp(1j * k * x), M, L)
    assert gp_energy(wave, 0.0) == pytest.approx(k * k, rel=1e-12)
    const = Field.from_function(lambda x: np.ones_like(x), M, L)
    assert gp_energy(const, 0.3) == pytest.approx(4 * math.pi * 0.3 / L, rel=1e-12)


def test_mass_examples():
    phi = gaussian()
    assert mass(phi) == pytest.approx(1.0, abs=1e-14)
    assert mass(Field(2 * phi.values, L)) == pytest.approx(4.0, abs=1e-13)
    assert mass(phi) == mass(phi)


def test_minimizer_free_box():
    phi = minimize_gp_energy(None, 0.0, (64, 10.0))
    assert gp_energy(phi, 0.0) == pytest.approx(0.0, abs=1e-10)
    assert np.ptp(np.abs(phi.values)) < 1e-6


def test_minimizer_harmonic():
    trap = lambda x: x * x
    phi = minimize_gp_energy(trap, 0.0, (M, L))
    assert abs(gp_energy(phi, 0.0, trap) - 1.0) < 1e-4
    rng = np.random.default_rng(1)
    for _ in range(5):
        d = rng.standard_normal(M) + 1j * rng.standard_normal(M)
        assert abs(tangent_directional_derivative(phi, 0.0, trap, d)) < 1e-6


def test_minimizer_monotone_in_a0():
    trap = lambda x: x * x
    energies = [gp_energy(minimize_gp_energy(trap, a, (128, 16.0)), a, trap) for a in (0.0, 0.1, 0.2)]
    assert energies[0] <= energies[1] <= energies[2]


def test_minimizer_budget():
    with pytest.raises(ConvergenceError):
        minimize_gp_energy(lambda x: x * x, 0.0, (M, L), max_steps=3, polish=False)


def test_lattice_symbol():
    sym = kinetic_symbol(16, 4.0, dispersion="lattice")
    h = 0.25
    lap = (2 * np.eye(16) - np.roll(np.eye(16), 1, 0) - np.roll(np.eye(16), -1, 0)) / h ** 2
    assert np.allclose(np.sort(sym), np.sort(np.linalg.eigvalsh(lap)), atol=1e-10)


def test_checkpoints(tmp_path):
    phi = gaussian()
    phi.to_csv(tmp_path / "phi.csv")
    back = Field.from_csv(tmp_path / "phi.csv")
    assert back.same_grid(phi) and np.array_equal(back.values, phi.values)
    phi.save(tmp_path / "phi.npz")
    assert np.array_equal(Field.load(tmp_path / "phi.npz").values, phi.values)


@given(sigma=st.floats(0, 5), kick=st.floats(-2, 2))
@settings(max_examples=10, deadline=None)
def test_mass_invariant_property(sigma, kick):
    phi = gaussian(kick, m=64, length=12.0)
    out = evolve_nls(phi, EvolutionParams(sigma=sigma, dt=2e-3, steps=100))
    assert abs(mass(out) - 1) < 1e-12


def test_three_dimensional_run():
    phi = Field.from_function(lambda x, y, z: np.exp(-(x * x + y * y + z * z)), 16, 8.0, dimension=3)
    out = evolve_nls(phi, EvolutionParams(sigma=1.0, dt=1e-3, steps=20))
    assert abs(mass(out) - 1) < 1e-12
