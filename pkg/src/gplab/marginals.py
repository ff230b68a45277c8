"""Reduced density matrices and condensation diagnostics.

A MarginalDensity stores the k-particle density matrix in the orthonormal
site basis (entries are kernel values times h^k), so its matrix trace is 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.sparse.linalg import eigsh

from . import io
from .fock_lattice import DenseNBody, LatticeSpec, fock_basis
from .gp_field import Field


class InvalidOrderError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MarginalDensity:
    k: int
    m: int
    h: float
    matrix: np.ndarray  # (M^k, M^k)

    @property
    def length(self) -> float:
        return self.m * self.h

    @property
    def kernel(self) -> np.ndarray:
        """gamma(x_1..x_k; x'_1..x'_k) as a 2k-index array (measure h^k per side)."""
        return (self.matrix / self.h ** self.k).reshape((self.m,) * (2 * self.k))

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))[::-1]

    def invariant_violations(self, tol: float = 1e-10) -> list[str]:
        g = self.matrix
        bad = []
        if np.max(np.abs(g - g.conj().T)) > tol:
            bad.append("hermitian")
        if abs(self.trace - 1.0) > tol:
            bad.append("trace")
        if self.eigenvalues()[-1] < -tol:
            bad.append("positive")
        if self.k == 2:
            t = g.reshape((self.m,) * 4)
            if np.max(np.abs(t - t.transpose(1, 0, 3, 2))) > tol:
                bad.append("bosonic")
        return bad

    def same_shape(self, other: "MarginalDensity") -> bool:
        return self.k == other.k and self.m == other.m and math.isclose(self.h, other.h)

    def to_csv(self, path):
        if self.k != 1:
            raise ValueError("CSV export is for one-particle matrices")
        rows = [(i, j, float(v.real), float(v.imag)) for (i, j), v in np.ndenumerate(self.matrix)]
        return io.write_csv(path, ["row", "col", "re", "im"], rows)


def projector(phi, lattice: LatticeSpec | None = None) -> MarginalDensity:
    """|phi><phi| for a 1D field (normalised first)."""
    if isinstance(phi, Field):
        vals, m, h = phi.values, phi.m, phi.h
    else:
        vals = np.asarray(phi, dtype=complex)
        m, h = lattice.m, lattice.h
    v = vals * math.sqrt(h)
    v = v / np.linalg.norm(v)
    return MarginalDensity(1, m, h, np.outer(v, v.conj()))


def tensor(a: MarginalDensity, b: MarginalDensity) -> MarginalDensity:
    if not (a.k == b.k == 1 and a.m == b.m):
        raise ValueError("tensor product is formed from two one-particle matrices")
    g = np.einsum("ac,bd->abcd", a.matrix, b.matrix).reshape(a.m ** 2, a.m ** 2)
    return MarginalDensity(2, a.m, a.h, g)


@lru_cache(maxsize=32)
def _removal_maps(m: int, n: int):
    upper, lower = fock_basis(m, n), fock_basis(m, n - 1)
    return lower.dim, [upper.removal(x, lower) for x in range(m)]


def _annihilated(amps: np.ndarray, m: int, n: int) -> np.ndarray:
    """A[phi, x] = <phi| a_x |psi> for phi in the (N-1)-particle basis; trailing axes carried along."""
    dim, maps = _removal_maps(m, n)
    out = np.zeros((dim, m) + amps.shape[1:], dtype=complex)
    for x, (src, dst, c) in enumerate(maps):
        out[dst, x] = c.reshape((-1,) + (1,) * (amps.ndim - 1)) * amps[src]
    return out


def reduce(psi, k: int) -> MarginalDensity:
    """k-particle marginal with unit trace."""
    n = psi.n
    if not 1 <= k <= n:
        raise InvalidOrderError(f"order k={k} invalid for N={n}")
    lat = psi.lattice
    m, h = lat.m, lat.h
    if isinstance(psi, DenseNBody):
        v = psi.values.reshape(m ** k, -1) * h ** (n / 2)
        g = v @ v.conj().T
        return MarginalDensity(k, m, h, g / np.trace(g).real)
    if k > 2:
        raise InvalidOrderError("occupation-basis marginals are implemented for k <= 2")
    a1 = _annihilated(psi.amplitudes, m, n)
    if k == 1:
        g = a1.T @ a1.conj() / n
    else:
        a2 = _annihilated(a1, m, n - 1)  # a2[chi, x2, x1] = <chi| a_x2 a_x1 |psi>
        b = a2.transpose(0, 2, 1).reshape(a2.shape[0], m * m)
        g = b.T @ b.conj() / (n * (n - 1))
    return MarginalDensity(k, m, h, g)


def partial_trace(g: MarginalDensity) -> MarginalDensity:
    """Tr_2 of a two-particle marginal."""
    if g.k != 2:
        raise InvalidOrderError("partial trace implemented for k = 2")
    t = g.matrix.reshape((g.m,) * 4)
    return MarginalDensity(1, g.m, g.h, np.einsum("abcb->ac", t))


def _as_matrix(g) -> np.ndarray:
    return g.matrix if isinstance(g, MarginalDensity) else np.asarray(g)


def trace_distance(g, g2) -> float:
    """Tr|g - g2| via eigenvalues of the Hermitian difference."""
    a, b = _as_matrix(g), _as_matrix(g2)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    d = a - b
    return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T)))))


def condensate_fraction(g: MarginalDensity) -> tuple[float, Field]:
    """Largest eigenvalue of gamma^(1) and its eigenvector as an L2-normalised field."""
    if g.k != 1:
        raise InvalidOrderError("condensate fraction is defined for gamma^(1)")
    herm = 0.5 * (g.matrix + g.matrix.conj().T)
    if g.m > 64:
        lam, vec = eigsh(herm, k=1, which="LA")
        lam, vec = lam[0], vec[:, 0]
    else:
        w, v = np.linalg.eigh(herm)
        lam, vec = w[-1], v[:, -1]
    # fix the global phase: largest component real positive
    j = int(np.argmax(np.abs(vec)))
    vec = vec * np.exp(-1j * np.angle(vec[j]))
    return float(lam), Field(vec / math.sqrt(g.h), g.length)


@dataclass
class PairCorrelation:
    r: np.ndarray
    g2: np.ndarray
    quotient: np.ndarray | None = None

    def to_csv(self, path):
        cols = {"r": self.r, "g2": self.g2}
        if self.quotient is not None:
            cols["g2_over_f2"] = self.quotient
        return io.write_columns(path, cols)


def pair_density(g: MarginalDensity) -> np.ndarray:
    """P[x, y] = gamma^(2)(x, y; x, y) h^2 (probabilities summing to 1)."""
    t = g.matrix.reshape((g.m,) * 4)
    return np.einsum("abab->ab", t).real


def pair_correlation(g2, f=None, h: float | None = None) -> PairCorrelation:
    """Translation-averaged g2(r) on minimum-image separations r = 0..M/2 (in units of h).

    ``g2`` is a two-particle MarginalDensity or an (M, M) pair-probability matrix
    (as returned by density_correlation); ``h`` is required in the latter case.
    """
    if isinstance(g2, MarginalDensity):
        if g2.k != 2:
            raise InvalidOrderError("pair correlation needs gamma^(2)")
        p, h = pair_density(g2), g2.h
    else:
        p = np.asarray(g2, dtype=float)
        if h is None:
            raise ValueError("lattice spacing required for a bare pair density")
    m = p.shape[0]
    rho = p.sum(axis=1)
    seps = np.arange(m // 2 + 1)
    out = np.empty(seps.size)
    for d in seps:
        num = np.sum(p[np.arange(m), (np.arange(m) + d) % m]) + np.sum(p[np.arange(m), (np.arange(m) - d) % m])
        den = np.sum(rho * np.roll(rho, -d)) + np.sum(rho * np.roll(rho, d))
        out[d] = num / den
    r = seps * h
    quot = None
    if f is not None:
        fr = np.asarray(f(r), dtype=float)
        quot = out / fr ** 2
    return PairCorrelation(r, out, quot)


def _multiplier(m: int, h: float) -> np.ndarray:
    """(1 - Delta)^{1/2} as a dense M x M matrix (spectral)."""
    k = 2.0 * np.pi * np.fft.fftfreq(m, d=h)
    f = np.fft.fft(np.eye(m), axis=0, norm="ortho")
    return f.conj().T @ (np.sqrt(1.0 + k * k)[:, None] * f)


def hk_norm(g: MarginalDensity) -> float:
    """Tr |S_1..S_k gamma S_1..S_k| with S = (1 - Delta)^{1/2}."""
    if g.k > 2:
        raise InvalidOrderError("H_k norm implemented for k <= 2")
    s = _multiplier(g.m, g.h)
    if g.k == 2:
        s = np.kron(s, s)
    sandwich = s @ g.matrix @ s
    return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (sandwich + sandwich.conj().T)))))


def summary(g1: MarginalDensity, reference: MarginalDensity | None = None) -> dict:
    lam, _ = condensate_fraction(g1)
    rec = {"lambda_max": lam, "hk_norm": hk_norm(g1)}
    if reference is not None:
        rec["trace_distance"] = trace_distance(g1, reference)
    return rec


def write_spectrum(path, g: MarginalDensity):
    ev = g.eigenvalues()
    return io.write_columns(path, {"index": np.arange(ev.size), "eigenvalue": ev})
