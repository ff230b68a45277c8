import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.sparse.linalg import eigsh

from gplab.fock_lattice import (DenseNBody, FockState, LatticeSpec, assemble_hamiltonian,
                                density_correlation, fock_basis, product_state)
from gplab.gp_field import Field
from gplab.marginals import (InvalidOrderError, MarginalDensity, condensate_fraction, hk_norm, pair_correlation,
                             partial_trace, projector, reduce, summary, tensor, trace_distance, write_spectrum)
from gplab.potentials import PotentialSpec, ScaledPair

LAT = LatticeSpec(12, 3.0)


def field(lat, kick=0.5):
    return Field(np.exp(-lat.x ** 2 + 1j * kick * lat.x), lat.length).normalized()


def random_fock(lat, n, seed):
    rng = np.random.default_rng(seed)
    dim = fock_basis(lat.m, n).dim
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return FockState(lat, n, v / np.linalg.norm(v))


def random_density(m, seed, rank=3):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, rank)) + 1j * rng.standard_normal((m, rank))
    g = a @ a.conj().T
    return MarginalDensity(1, m, 1.0, g / np.trace(g).real)


def test_product_state_gives_projector():
    phi = field(LAT)
    for n in (1, 2, 4):
        g = reduce(product_state(phi, n, LAT), 1)
        assert np.max(np.abs(g.matrix - projector(phi).matrix)) < 1e-13
        assert g.invariant_violations() == []


def test_symmetrized_orthogonal_pair():
    lat = LatticeSpec(8, 8.0)
    e = np.eye(8)
    vals = (np.kron(e[0], e[1]) + np.kron(e[1], e[0])).reshape(8, 8) / math.sqrt(2)
    g = reduce(DenseNBody(lat, vals), 1)
    assert np.allclose(g.eigenvalues()[:3], [0.5, 0.5, 0.0], atol=1e-14)
    assert condensate_fraction(g)[0] == pytest.approx(0.5, abs=1e-14)


@given(seed=st.integers(0, 2 ** 16), n=st.integers(2, 4))
@settings(max_examples=15, deadline=None)
def test_reduce_invariants_and_partial_trace(seed, n):
    psi = random_fock(LAT, n, seed)
    g1, g2 = reduce(psi, 1), reduce(psi, 2)
    assert g1.invariant_violations() == [] and g2.invariant_violations() == []
    assert np.max(np.abs(partial_trace(g2).matrix - g1.matrix)) < 1e-10


def test_fock_and_dense_marginals_agree():
    psi = random_fock(LAT, 3, 11)
    dense = psi.to_dense()
    for k in (1, 2):
        assert np.max(np.abs(reduce(psi, k).matrix - reduce(dense, k).matrix)) < 1e-12


def test_invalid_order():
    psi = random_fock(LAT, 2, 0)
    with pytest.raises(InvalidOrderError):
        reduce(psi, 3)
    with pytest.raises(InvalidOrderError):
        reduce(random_fock(LAT, 3, 0), 3)
    assert reduce(random_fock(LAT, 3, 0).to_dense(), 3).invariant_violations() == []


def test_invariant_violation_names():
    g = random_density(6, 0).matrix.copy()
    g[0, 1] += 0.1
    assert "hermitian" in MarginalDensity(1, 6, 1.0, g).invariant_violations()
    assert MarginalDensity(1, 6, 1.0, 2 * random_density(6, 1).matrix).invariant_violations() == ["trace"]
    bad = np.diag([1.5, -0.5, 0, 0, 0, 0]).astype(complex)
    assert MarginalDensity(1, 6, 1.0, bad).invariant_violations() == ["positive"]


def test_trace_distance():
    a = random_density(6, 0)
    assert trace_distance(a, a) == 0
    e = np.eye(6)
    p, q = np.outer(e[0], e[0]), np.outer(e[1], e[1])
    assert trace_distance(p, q) == pytest.approx(2.0, abs=1e-14)
    with pytest.raises(ValueError):
        trace_distance(p, np.eye(5))


@given(st.integers(0, 2 ** 16))
@settings(max_examples=25, deadline=None)
def test_trace_distance_triangle(seed):
    a, b, c = (random_density(8, seed + i) for i in range(3))
    assert trace_distance(a, c) <= trace_distance(a, b) + trace_distance(b, c) + 1e-12


def test_condensate_fraction_product_state():
    phi = field(LAT)
    lam, vec = condensate_fraction(reduce(product_state(phi, 3, LAT), 1))
    assert lam == pytest.approx(1.0, abs=1e-12)
    overlap = abs(np.vdot(vec.values, phi.values)) * LAT.h
    assert overlap == pytest.approx(1.0, abs=1e-12)


def test_condensate_fraction_iterative_branch():
    lat = LatticeSpec(80, 10.0)
    lam, _ = condensate_fraction(projector(field(lat), None))
    assert lam == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_mixing_never_raises_lambda(seed):
    g = random_density(10, seed)
    mixed = MarginalDensity(1, 10, 1.0, 0.9 * g.matrix + 0.1 * np.eye(10) / 10)
    assert condensate_fraction(mixed)[0] <= condensate_fraction(g)[0] + 1e-14
    # direct computation as oracle
    assert condensate_fraction(mixed)[0] == pytest.approx(0.9 * np.linalg.eigvalsh(g.matrix)[-1] + 0.01)


def test_pair_correlation_product_state():
    g2 = reduce(product_state(field(LAT), 3, LAT), 2)
    pc = pair_correlation(g2)
    assert np.max(np.abs(pc.g2 - 1)) < 1e-10
    assert pc.r[-1] == pytest.approx(LAT.length / 2)


def test_pair_correlation_dip_for_repulsive_pair():
    lat = LatticeSpec(16, 4.0)
    pair = ScaledPair(PotentialSpec("smooth_bump", 40.0, 1.2, 1), 2, 0.5)
    ham = assemble_hamiltonian(lat, 2, pair)
    _, v = eigsh(ham.hopping + np.diag(ham.diagonal), k=1, which="SA")
    psi = FockState(lat, 2, v[:, 0])
    pc = pair_correlation(reduce(psi, 2))
    assert pc.g2[0] < pc.g2[-1]
    # the bare pair-probability path gives the same profile
    alt = pair_correlation(density_correlation(psi), h=lat.h)
    assert np.allclose(alt.g2, pc.g2, atol=1e-12)
    with pytest.raises(ValueError):
        pair_correlation(density_correlation(psi))


def test_pair_correlation_quotient():
    g2 = reduce(product_state(field(LAT), 2, LAT), 2)
    pc = pair_correlation(g2, f=lambda r: np.full_like(r, 0.5))
    assert np.allclose(pc.quotient, 4 * pc.g2)


def test_hk_norm_plane_wave_and_constant():
    q = 2 * math.pi * 3 / LAT.length
    assert hk_norm(projector(np.exp(1j * q * LAT.x), LAT)) == pytest.approx(1 + q * q, rel=1e-12)
    assert hk_norm(projector(np.ones(LAT.m), LAT)) == pytest.approx(1.0, rel=1e-12)


def test_hk_norm_tensor_and_growth():
    g1 = projector(field(LAT, 1.0))
    c = hk_norm(g1)
    assert hk_norm(tensor(g1, g1)) == pytest.approx(c ** 2, rel=1e-10)
    g2 = reduce(product_state(field(LAT, 1.0), 3, LAT), 2)
    assert hk_norm(g2) == pytest.approx(c ** 2, rel=1e-10)


def test_summary_and_exports(tmp_path):
    g = reduce(product_state(field(LAT), 2, LAT), 1)
    rec = summary(g, reference=g)
    assert rec["trace_distance"] == 0 and rec["lambda_max"] == pytest.approx(1)
    g.to_csv(tmp_path / "g1.csv")
    assert len((tmp_path / "g1.csv").read_text().splitlines()) == 1 + LAT.m ** 2
    write_spectrum(tmp_path / "spec.csv", g)
    with pytest.raises(ValueError):
        reduce(product_state(field(LAT), 2, LAT), 2).to_csv(tmp_path / "x.csv")
