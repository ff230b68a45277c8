"""Finite-N bosons on a 1D periodic lattice.

Production representation is the occupation-number basis of the symmetric
sector (dimension C(M+N-1, N)); the first-quantised M^N tensor is kept as an
oracle for N <= 3.  Both share the Hamiltonian

    H = sum_j (-Delta_h)_j + sum_j V_ext(x_j) + sum_{i<j} w(x_i - x_j)

with -Delta_h the periodic second difference (2 phi_x - phi_{x+1} - phi_{x-1}) / h^2
and w sampled at minimum-image lattice separations.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from . import io
from .gp_field import Field
from .krylov import KrylovStats, propagate
from .potentials import ScaledPair


class ResolutionError(ValueError):
    pass


class DegenerateQuotientError(ZeroDivisionError):
    pass


@dataclass(frozen=True, eq=False)
class LatticeSpec:
    m: int
    length: float
    v_ext: np.ndarray | None = None

    def __post_init__(self):
        if self.m < 8:
            raise ValueError("lattice needs M >= 8 sites")
        if self.v_ext is not None:
            v = np.asarray(self.v_ext(self.x) if callable(self.v_ext) else self.v_ext, dtype=float)
            if v.shape != (self.m,):
                raise ValueError("v_ext must be sampled on the M lattice sites")
            object.__setattr__(self, "v_ext", v)

    @property
    def h(self) -> float:
        return self.length / self.m

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.m) - self.m // 2) * self.h

    def separations(self) -> np.ndarray:
        """Minimum-image distance |x - y| for all site pairs."""
        i = np.arange(self.m)
        d = np.abs(i[:, None] - i[None, :])
        return np.minimum(d, self.m - d) * self.h

    def laplacian(self) -> np.ndarray:
        """Dense matrix of -Delta_h."""
        m, h2 = self.m, self.h ** 2
        k = 2.0 * np.eye(m) - np.eye(m, k=1) - np.eye(m, k=-1)
        k[0, -1] -= 1.0
        k[-1, 0] -= 1.0
        return k / h2

    def one_body(self) -> np.ndarray:
        k = self.laplacian()
        if self.v_ext is not None:
            k = k + np.diag(self.v_ext)
        return k

    def pair_matrix(self, pair: ScaledPair | None) -> np.ndarray:
        if pair is None or pair.is_zero:
            return np.zeros((self.m, self.m))
        return np.asarray(pair(self.separations()), dtype=float)

    def check_resolution(self, pair: ScaledPair | None, n: int) -> None:
        if pair is None or pair.is_zero or n < 2:
            return
        rng = pair.support
        if rng < 2.0 * self.h:
            raise ResolutionError(
                f"resolution constraint violated: interaction range R/N^beta = {rng:.4g} < 2h = {2 * self.h:.4g}")
        if rng >= 0.5 * self.length:
            raise ResolutionError(
                f"resolution constraint violated: interaction range {rng:.4g} >= L/2 (minimum image)")

    def same_as(self, other: "LatticeSpec") -> bool:
        return self.m == other.m and math.isclose(self.length, other.length)


def _rank_table(m: int, n: int) -> np.ndarray:
    """T[x, s, c] = sum_{i=s}^{s+c-1} C(x + i, i + 1): colex rank contribution of c bosons in mode x."""
    table = np.zeros((m, n + 1, n + 1), dtype=np.int64)
    for x in range(m):
        for s in range(n + 1):
            acc = 0
            for c in range(1, n - s + 1):
                i = s + c - 1
                acc += math.comb(x + i, i + 1)
                table[x, s, c] = acc
    return table


class FockBasis:
    """All occupation vectors with sum n_x = N, ordered lexicographically descending."""

    def __init__(self, m: int, n: int):
        self.m, self.n = int(m), int(n)
        self.dim = math.comb(m + n - 1, n)
        occ = np.zeros((self.dim, m), dtype=np.int16)
        if n > 0:
            # combinations_with_replacement enumerates mode multisets in exactly this order
            modes = np.fromiter(itertools.chain.from_iterable(
                itertools.combinations_with_replacement(range(m), n)), dtype=np.int16,
                count=self.dim * n).reshape(self.dim, n)
            np.add.at(occ, (np.repeat(np.arange(self.dim), n), modes.ravel()), 1)
        self.occupations = occ
        self._table = _rank_table(m, max(n, 0))
        colex = self._colex(occ)
        self._position = np.empty(self.dim, dtype=np.int64)
        self._position[colex] = np.arange(self.dim)

    def _colex(self, occ: np.ndarray) -> np.ndarray:
        occ = occ.astype(np.int64)
        before = np.cumsum(occ, axis=1) - occ
        return self._table[np.arange(self.m)[None, :], before, occ].sum(axis=1)

    def index(self, occ: np.ndarray) -> np.ndarray:
        """Canonical positions of occupation rows (must all have total N)."""
        occ = np.atleast_2d(occ)
        return self._position[self._colex(occ)]

    def removal(self, x: int, lower: "FockBasis"):
        """Sparse action of a_x: (source rows, target rows in ``lower``, sqrt(n_x))."""
        src = np.nonzero(self.occupations[:, x] > 0)[0]
        occ = self.occupations[src].copy()
        coeff = np.sqrt(occ[:, x].astype(float))
        occ[:, x] -= 1
        return src, lower.index(occ), coeff

    def hop(self, x: int, y: int):
        """Sparse action of a_y^dagger a_x within the basis."""
        src = np.nonzero(self.occupations[:, x] > 0)[0]
        occ = self.occupations[src].copy()
        nx = occ[:, x].astype(float)
        occ[:, x] -= 1
        occ[:, y] += 1
        return src, self.index(occ), np.sqrt(nx * occ[:, y])


@lru_cache(maxsize=16)
def fock_basis(m: int, n: int) -> FockBasis:
    return FockBasis(m, n)


@dataclass(eq=False)
class FockState:
    lattice: LatticeSpec
    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (self.basis.dim,):
            raise ValueError(f"expected {self.basis.dim} amplitudes")

    @property
    def basis(self) -> FockBasis:
        return fock_basis(self.lattice.m, self.n)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "FockState":
        return FockState(self.lattice, self.n, self.amplitudes.copy())

    def with_amplitudes(self, amps) -> "FockState":
        return FockState(self.lattice, self.n, amps)

    def to_dense(self) -> "DenseNBody":
        """First-quantised wave function psi(x_1..x_N), sum |psi|^2 h^N = 1."""
        m, n, h = self.lattice.m, self.n, self.lattice.h
        if m ** n > 5_000_000:
            raise MemoryError("dense tensor too large")
        occ = self.basis.occupations
        fact = np.array([math.factorial(k) for k in range(n + 1)], dtype=float)
        weight = np.sqrt(np.prod(fact[occ], axis=1) / math.factorial(n))
        vals = np.zeros((m,) * n, dtype=complex)
        coords = np.indices((m,) * n).reshape(n, -1).T
        if n:
            oc = np.zeros((coords.shape[0], m), dtype=np.int16)
            np.add.at(oc, (np.repeat(np.arange(coords.shape[0]), n), coords.ravel()), 1)
            idx = self.basis.index(oc)
            vals = (self.amplitudes[idx] * weight[idx]).reshape((m,) * n)
        return DenseNBody(self.lattice, vals / h ** (n / 2))

    def save(self, path):
        np.savez(path, amplitudes=self.amplitudes, occupations=self.basis.occupations,
                 m=self.lattice.m, length=self.lattice.length, n=self.n)

    @classmethod
    def load(cls, path, v_ext=None) -> "FockState":
        with np.load(path) as z:
            lat = LatticeSpec(int(z["m"]), float(z["length"]), v_ext)
            st = cls(lat, int(z["n"]), z["amplitudes"])
            if not np.array_equal(z["occupations"], st.basis.occupations):
                raise ValueError("checkpoint basis order differs from the canonical order")
        return st


@dataclass(eq=False)
class DenseNBody:
    lattice: LatticeSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if any(s != self.lattice.m for s in self.values.shape):
            raise ValueError("dense tensor must be M^N")

    @property
    def n(self) -> int:
        return self.values.ndim

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.lattice.h ** self.n))

    def normalized(self) -> "DenseNBody":
        return DenseNBody(self.lattice, self.values / self.norm)

    def with_values(self, vals) -> "DenseNBody":
        return DenseNBody(self.lattice, np.asarray(vals).reshape(self.values.shape))

    @property
    def amplitudes(self) -> np.ndarray:
        return self.values.ravel()


def symmetrize(t: DenseNBody, tol: float = 1e-12) -> DenseNBody:
    """Projection onto the bosonic sector, renormalised."""
    n = t.n
    if n > 3:
        raise ValueError("dense oracle is limited to N <= 3")
    acc = sum(np.transpose(t.values, perm) for perm in itertools.permutations(range(n)))
    acc = acc / math.factorial(n)
    out = DenseNBody(t.lattice, acc)
    if out.norm < tol * max(t.norm, 1e-300):
        raise ValueError("symmetrisation produced the zero vector")
    return out.normalized()


def _lattice_vector(phi, lattice: LatticeSpec) -> np.ndarray:
    if isinstance(phi, Field):
        if phi.dimension != 1 or phi.m != lattice.m or not math.isclose(phi.length, lattice.length):
            raise ValueError("field does not live on this lattice")
        vals = phi.values
    else:
        vals = np.asarray(phi, dtype=complex)
        if vals.shape != (lattice.m,):
            raise ValueError("field does not live on this lattice")
    return vals * math.sqrt(lattice.h)


def product_state(phi, n: int, lattice: LatticeSpec) -> FockState:
    """(sum_x phi_x a_x^dagger)^N |0> / sqrt(N!) in the occupation basis."""
    v = _lattice_vector(phi, lattice)
    v = v / np.linalg.norm(v)
    basis = fock_basis(lattice.m, n)
    occ = basis.occupations
    logfact = np.array([math.lgamma(k + 1) for k in range(n + 1)])
    mag = np.exp(0.5 * (math.lgamma(n + 1) - logfact[occ].sum(axis=1)))
    amps = mag * np.prod(np.where(occ > 0, v[None, :] ** occ, 1.0), axis=1)
    amps = amps / np.linalg.norm(amps)
    return FockState(lattice, n, amps)


def dense_product_state(phi, n: int, lattice: LatticeSpec) -> DenseNBody:
    v = _lattice_vector(phi, lattice) / math.sqrt(lattice.h)
    t = v
    for _ in range(n - 1):
        t = np.multiply.outer(t, v)
    return DenseNBody(lattice, t).normalized()


class FockHamiltonian:
    """H on the occupation basis: sparse hopping plus a diagonal (kinetic, trap, pair terms)."""

    def __init__(self, lattice: LatticeSpec, n: int, pair: ScaledPair | None):
        lattice.check_resolution(pair, n)
        self.lattice, self.n, self.pair = lattice, n, pair
        basis = fock_basis(lattice.m, n)
        self.dim = basis.dim
        m, h2 = lattice.m, lattice.h ** 2
        occ = basis.occupations.astype(float)
        rows, cols, data = [], [], []
        for x in range(m):
            y = (x + 1) % m
            for a, b in ((x, y), (y, x)):
                src, dst, c = basis.hop(a, b)
                rows.append(dst)
                cols.append(src)
                data.append(-c / h2)
        rows = np.concatenate(rows) if rows else np.zeros(0, int)
        self.hopping = sp.csr_matrix((np.concatenate(data), (rows, np.concatenate(cols))),
                                     shape=(self.dim, self.dim))
        diag = np.full(self.dim, 2.0 * n / h2)
        if lattice.v_ext is not None:
            diag += occ @ lattice.v_ext
        w = lattice.pair_matrix(pair)
        if np.any(w):
            diag += 0.5 * (np.einsum("ix,ix->i", occ, occ @ w) - occ @ np.diag(w))
        self.diagonal = diag

    def matvec(self, v: np.ndarray) -> np.ndarray:
        if np.iscomplexobj(v):
            hop = self.hopping @ v.real + 1j * (self.hopping @ v.imag)
        else:
            hop = self.hopping @ v
        return hop + self.diagonal * v

    def to_dense(self) -> np.ndarray:
        return self.hopping.toarray() + np.diag(self.diagonal)


class DenseHamiltonian:
    """First-quantised H acting on M^N tensors (matrix-free)."""

    def __init__(self, lattice: LatticeSpec, n: int, pair: ScaledPair | None):
        lattice.check_resolution(pair, n)
        self.lattice, self.n, self.pair = lattice, n, pair
        m = lattice.m
        self.shape = (m,) * n
        self.dim = m ** n
        w = lattice.pair_matrix(pair)
        pot = np.zeros(self.shape)
        for i, j in itertools.combinations(range(n), 2):
            pot = pot + _pair_broadcast(w, i, j, n)
        if lattice.v_ext is not None:
            for j in range(n):
                idx = [None] * n
                idx[j] = slice(None)
                pot = pot + lattice.v_ext[tuple(idx)]
        self.potential = pot + 2.0 * n / lattice.h ** 2

    def matvec(self, v: np.ndarray) -> np.ndarray:
        t = v.reshape(self.shape)
        out = self.potential * t
        inv = 1.0 / self.lattice.h ** 2
        for ax in range(self.n):
            out -= inv * (np.roll(t, 1, axis=ax) + np.roll(t, -1, axis=ax))
        return out.ravel()


def _pair_broadcast(w: np.ndarray, i: int, j: int, n: int) -> np.ndarray:
    """w[x_i, x_j] broadcast against an M^N tensor (i < j)."""
    shape = [1] * n
    shape[i] = shape[j] = w.shape[0]
    return w.reshape(shape)


def assemble_hamiltonian(lattice: LatticeSpec, n: int, pair: ScaledPair | None,
                         representation: str = "fock"):
    """Matrix-free Hamiltonian handle for the occupation ("fock") or first-quantised ("dense") form."""
    if representation == "fock":
        return FockHamiltonian(lattice, n, pair)
    if representation == "dense":
        if n > 3:
            raise ValueError("dense oracle is limited to N <= 3")
        return DenseHamiltonian(lattice, n, pair)
    raise ValueError(f"unknown representation {representation!r}")


def evolve_manybody(psi, ham, dt: float, steps: int, krylov_dim: int = 12, tol: float = 1e-12,
                    stats: KrylovStats | None = None, callback=None):
    """Krylov propagation psi -> exp(-i H dt)^steps psi, same representation as the input."""
    v = psi.amplitudes.copy()
    nrm = np.linalg.norm(v)
    for s in range(steps):
        v = propagate(ham.matvec, v, dt, m=krylov_dim, tol=tol, stats=stats)
        if callback is not None:
            callback((s + 1) * dt, _rewrap(psi, v))
    drift = abs(np.linalg.norm(v) - nrm)
    if drift > 1e-9 * max(nrm, 1.0):
        raise RuntimeError(f"norm drift {drift:.2e} during Krylov propagation")
    return _rewrap(psi, v)


def _rewrap(psi, v):
    if isinstance(psi, FockState):
        return psi.with_amplitudes(v)
    return psi.with_values(v)


def _inner_weight(psi) -> float:
    return psi.lattice.h ** psi.n if isinstance(psi, DenseNBody) else 1.0


def expectation_moments(psi, ham) -> tuple[float, float]:
    """(<H>, <H^2>) for a normalised state."""
    v = psi.amplitudes
    hv = ham.matvec(v)
    w = _inner_weight(psi)
    return float(np.vdot(v, hv).real * w), float(np.vdot(hv, hv).real * w)


def translation_expectation(psi: FockState) -> complex:
    """<psi| T |psi> for the one-site lattice translation T."""
    basis = psi.basis
    shifted = basis.index(np.roll(basis.occupations, 1, axis=1))
    c = psi.amplitudes
    out = np.zeros_like(c)
    out[shifted] = c
    return complex(np.vdot(c, out))


def density_correlation(psi: FockState) -> np.ndarray:
    """P[x, y] = <n_x n_y - delta_xy n_x> / (N (N - 1)): diagonal of the two-body marginal."""
    n = psi.n
    if n < 2:
        raise ValueError("pair density needs N >= 2")
    p = np.abs(psi.amplitudes) ** 2
    occ = psi.basis.occupations.astype(float)
    nn = (occ * p[:, None]).T @ occ
    nn -= np.diag(p @ occ)
    return nn / (n * (n - 1))


@dataclass
class ProbeReport:
    lhs: float
    rhs: float
    ratio: float | None
    degenerate: bool = False
    per_pair: dict = field(default_factory=dict)


def _centered(t: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(t, -1, axis=axis) - np.roll(t, 1, axis=axis)) / (2.0 * h)


def energy_ratio_probe(psi: DenseNBody, pair: ScaledPair | None, f, ham=None,
                       floor: float = 1e-12) -> ProbeReport:
    """<H^2> against N^2 max_{i != j} || d_i d_j (psi / f_N(x_i - x_j)) ||^2 (centered differences)."""
    n = psi.n
    if n not in (2, 3):
        raise ValueError("probe is defined for N in {2, 3}")
    lat = psi.lattice
    if ham is None:
        ham = DenseHamiltonian(lat, n, pair)
    lhs = expectation_moments(psi, ham)[1]
    fsep = np.asarray(f(lat.separations()), dtype=float) if f is not None else np.ones((lat.m, lat.m))
    if np.min(np.abs(fsep)) < floor:
        raise DegenerateQuotientError("correlation function vanishes on the lattice")
    vol = lat.h ** n
    per_pair = {}
    for i, j in itertools.combinations(range(n), 2):
        q = psi.values / _pair_broadcast(fsep, i, j, n)
        d = _centered(_centered(q, i, lat.h), j, lat.h)
        per_pair[(i, j)] = float(np.sum(np.abs(d) ** 2) * vol)
    rhs = n * n * max(per_pair.values())
    if rhs < floor * max(lhs, 1.0):
        return ProbeReport(lhs, rhs, None, degenerate=True, per_pair=per_pair)
    return ProbeReport(lhs, rhs, lhs / rhs, per_pair=per_pair)


def trajectory_summary(times, states, ham) -> dict:
    rows = {"t": [], "norm": [], "H": [], "H2": []}
    for t, s in zip(times, states):
        e1, e2 = expectation_moments(s, ham)
        rows["t"].append(float(t))
        rows["norm"].append(float(np.linalg.norm(s.amplitudes) * math.sqrt(_inner_weight(s))))
        rows["H"].append(e1)
        rows["H2"].append(e2)
    return rows


def write_trajectory(path, summary: dict):
    return io.write_json(path, summary)
