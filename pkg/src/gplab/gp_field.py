"""Split-step spectral solvers for the cubic NLS / Gross-Pitaevskii and Hartree equations.

Fields live on a periodic box [-L/2, L/2)^d with M points per axis and are
normalised so that sum |phi|^2 h^d = 1.  Time stepping is Strang splitting:
half kinetic step (exact in Fourier space), full pointwise phase from the
nonlinearity plus external potential, half kinetic step.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from . import io

Dispersion = Literal["spectral", "lattice"]


class AliasingWarning(RuntimeWarning):
    pass


class AliasingError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass
class Field:
    values: np.ndarray
    length: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        shape = self.values.shape
        if len(shape) not in (1, 3) or len(set(shape)) != 1:
            raise ValueError("field must be 1D or a cubic 3D array")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field amplitudes must be finite")

    @classmethod
    def from_function(cls, func: Callable, m: int, length: float, dimension: int = 1,
                      normalize: bool = True) -> "Field":
        coords = grid_coordinates(m, length, dimension)
        vals = func(*coords) if dimension == 3 else func(coords[0])
        f = cls(np.broadcast_to(np.asarray(vals, dtype=complex), (m,) * dimension).copy(), length)
        return f.normalized() if normalize else f

    @property
    def dimension(self) -> int:
        return self.values.ndim

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> float:
        return self.length / self.m

    @property
    def coords(self) -> list[np.ndarray]:
        return grid_coordinates(self.m, self.length, self.dimension)

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.m) - self.m // 2) * self.h

    def copy(self) -> "Field":
        return Field(self.values.copy(), self.length)

    def normalized(self) -> "Field":
        nrm = math.sqrt(mass(self))
        if nrm == 0:
            raise ValueError("cannot normalise the zero field")
        return Field(self.values / nrm, self.length)

    def same_grid(self, other: "Field") -> bool:
        return self.values.shape == other.values.shape and math.isclose(self.length, other.length)

    def to_csv(self, path):
        if self.dimension != 1:
            raise ValueError("CSV checkpoints are 1D only; use save() for 3D")
        return io.write_columns(path, {"x": self.x, "re": self.values.real, "im": self.values.imag})

    @classmethod
    def from_csv(cls, path) -> "Field":
        _, data = io.read_csv(path)
        x = data[:, 0]
        h = x[1] - x[0]
        return cls(data[:, 1] + 1j * data[:, 2], h * len(x))

    def save(self, path):
        np.savez(path, values=self.values, length=self.length)

    @classmethod
    def load(cls, path) -> "Field":
        with np.load(path) as z:
            return cls(z["values"], float(z["length"]))


def grid_coordinates(m: int, length: float, dimension: int = 1) -> list[np.ndarray]:
    x = (np.arange(m) - m // 2) * (length / m)
    if dimension == 1:
        return [x]
    return list(np.meshgrid(x, x, x, indexing="ij"))


def kinetic_symbol(m: int, length: float, dimension: int = 1,
                   dispersion: Dispersion = "spectral") -> np.ndarray:
    """Fourier multiplier of -Delta: k^2, or the second-difference symbol 4 sin^2(kh/2)/h^2."""
    h = length / m
    k = 2.0 * np.pi * np.fft.fftfreq(m, d=h)
    if dispersion == "spectral":
        s = k * k
    elif dispersion == "lattice":
        s = (2.0 * np.sin(0.5 * k * h) / h) ** 2
    else:
        raise ValueError(f"unknown dispersion {dispersion!r}")
    if dimension == 1:
        return s
    return s[:, None, None] + s[None, :, None] + s[None, None, :]


def mass(phi: Field) -> float:
    return float(np.sum(np.abs(phi.values) ** 2) * phi.h ** phi.dimension)


def _sample(v, phi: Field):
    if v is None:
        return None
    if callable(v):
        c = phi.coords
        v = v(*c) if phi.dimension == 3 else v(c[0])
    v = np.asarray(v)
    if v.shape != phi.values.shape:
        v = np.broadcast_to(v, phi.values.shape)
    return v


@dataclass
class EvolutionParams:
    """Parameters of a split-step run.

    ``kernel`` switches on Hartree mode; it is a callable of the coordinates
    or an array sampled on the field grid (value at x = 0 sits at index M//2).
    """

    sigma: float = 0.0
    dt: float = 1e-3
    steps: int = 1
    v_ext: object = None
    kernel: object = None
    dispersion: Dispersion = "spectral"
    strict: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")

    @property
    def hartree(self) -> bool:
        return self.kernel is not None


def _convolver(kernel, phi: Field):
    v = _sample(kernel, phi).astype(complex)
    axes = tuple(range(phi.dimension))
    vk = np.fft.fftn(np.fft.ifftshift(v, axes=axes)) * phi.h ** phi.dimension
    return lambda rho: np.fft.ifftn(vk * np.fft.fftn(rho)).real


def _split_step(phi: Field, p: EvolutionParams, potential: Callable[[np.ndarray], np.ndarray],
                callback=None, every: int = 1) -> Field:
    psi = phi.values.copy()
    sym = kinetic_symbol(phi.m, phi.length, phi.dimension, p.dispersion)
    half = np.exp(-0.5j * p.dt * sym)
    full = half * half
    fft, ifft = np.fft.fftn, np.fft.ifftn
    if p.steps == 0:
        return Field(psi, phi.length)
    psi = ifft(half * fft(psi))
    for n in range(p.steps):
        pot = potential(psi)
        peak = float(np.max(np.abs(pot))) * p.dt
        if peak > math.pi:
            msg = f"dt*max|potential| = {peak:.3f} exceeds pi (phase aliasing)"
            if p.strict:
                raise AliasingError(msg)
            warnings.warn(msg, AliasingWarning, stacklevel=3)
        psi = psi * np.exp(-1j * p.dt * pot)
        last = n == p.steps - 1
        if callback is not None and (n + 1) % every == 0:
            snap = ifft(half * fft(psi))
            callback((n + 1) * p.dt, Field(snap, phi.length))
            if not last:
                psi = ifft(half * fft(snap))
                continue
            return Field(snap, phi.length)
        psi = ifft((half if last else full) * fft(psi))
    return Field(psi, phi.length)


def _cubic_potential(phi: Field, p: EvolutionParams):
    v_ext = _sample(p.v_ext, phi)
    sigma = p.sigma

    def pot(psi):
        out = sigma * np.abs(psi) ** 2
        return out if v_ext is None else out + v_ext
    return pot


def _hartree_potential(phi: Field, p: EvolutionParams):
    v_ext = _sample(p.v_ext, phi)
    conv = _convolver(p.kernel, phi)

    def pot(psi):
        out = conv(np.abs(psi) ** 2)
        return out if v_ext is None else out + v_ext
    return pot


def evolve_nls(phi: Field, p: EvolutionParams, callback=None, every: int = 1) -> Field:
    """i d_t phi = -Delta phi + (sigma |phi|^2 + V_ext) phi."""
    if p.hartree:
        raise ValueError("evolve_nls needs cubic mode (kernel must be None)")
    return _split_step(phi, p, _cubic_potential(phi, p), callback, every)


def evolve_hartree(phi: Field, p: EvolutionParams, callback=None, every: int = 1) -> Field:
    """i d_t phi = -Delta phi + ((v * |phi|^2) + V_ext) phi, convolution done spectrally."""
    if not p.hartree:
        raise ValueError("evolve_hartree needs a kernel")
    return _split_step(phi, p, _hartree_potential(phi, p), callback, every)


@dataclass
class Trajectory:
    times: np.ndarray
    fields: list[Field] = field(default_factory=list)
    params: EvolutionParams | None = None

    def summary(self, a0: float | None = None, v_ext=None) -> dict:
        rec = {"t": self.times.tolist(), "mass": [mass(f) for f in self.fields]}
        if a0 is not None:
            rec["energy"] = [gp_energy(f, a0, v_ext) for f in self.fields]
        return rec


def nls_trajectory(phi: Field, p: EvolutionParams, every: int = 1) -> Trajectory:
    """Snapshots of evolve_nls/evolve_hartree every ``every`` steps, starting with phi itself."""
    times, fields = [0.0], [phi.copy()]

    def keep(t, f):
        times.append(t)
        fields.append(f)

    (evolve_hartree if p.hartree else evolve_nls)(phi, p, callback=keep, every=every)
    return Trajectory(np.array(times), fields, p)


def kinetic_energy(phi: Field, dispersion: Dispersion = "spectral") -> float:
    sym = kinetic_symbol(phi.m, phi.length, phi.dimension, dispersion)
    fk = np.fft.fftn(phi.values)
    return float(np.sum(sym * np.abs(fk) ** 2) * phi.h ** phi.dimension / phi.values.size)


def gp_energy(phi: Field, a0: float, v_ext=None, dispersion: Dispersion = "spectral") -> float:
    """sum (|grad phi|^2 + V_ext |phi|^2 + 4 pi a0 |phi|^4) h^d, gradient taken spectrally."""
    dens = np.abs(phi.values) ** 2
    vol = phi.h ** phi.dimension
    e = kinetic_energy(phi, dispersion) + 4.0 * math.pi * a0 * float(np.sum(dens * dens)) * vol
    v = _sample(v_ext, phi)
    if v is not None:
        e += float(np.sum(v * dens)) * vol
    return e


def _polish_1d(phi: Field, a0: float, v: np.ndarray | None, tol: float = 1e-13,
               max_iter: int = 500, mixing: float = 0.5) -> Field:
    """Self-consistent lowest eigenvector of -Delta + V + 8 pi a0 |phi|^2 (dense, 1D)."""
    m = phi.m
    sym = kinetic_symbol(m, phi.length, 1)
    eye = np.eye(m)
    lap = np.fft.ifft(sym[:, None] * np.fft.fft(eye, axis=0), axis=0).real
    base = lap + (np.diag(v) if v is not None else 0.0)
    g = 8.0 * math.pi * a0
    cur = phi.values / math.sqrt(mass(phi))
    dens = np.abs(cur) ** 2
    for _ in range(max_iter):
        _, vecs = np.linalg.eigh(base + np.diag(g * dens))
        new = vecs[:, 0].astype(complex)
        ov = np.vdot(new, cur)
        new *= np.exp(-1j * np.angle(ov)) if abs(ov) > 0 else 1.0
        new /= math.sqrt(np.sum(np.abs(new) ** 2) * phi.h)
        step = float(np.max(np.abs(new - cur)))
        cur = new
        if g == 0.0 or step < tol:
            return Field(cur, phi.length)
        dens = (1.0 - mixing) * dens + mixing * np.abs(cur) ** 2
    raise ConvergenceError("self-consistent polish did not converge")


def minimize_gp_energy(v_ext, a0: float, grid: tuple, initial: Field | None = None,
                       taus=(1e-1, 1e-2, 1e-3), tol: float = 1e-10,
                       max_steps: int = 200_000, polish: bool = True) -> Field:
    """Normalised gradient flow (imaginary-time Strang) for the GP minimiser.

    ``grid`` is (M, L) or (M, L, d). Each imaginary time step in ``taus`` runs
    until the energy decrement per step falls below ``tol``.  In 1D the result
    is refined by a dense self-consistent eigen-solve.
    """
    m, length = int(grid[0]), float(grid[1])
    d = int(grid[2]) if len(grid) > 2 else 1
    if initial is None:
        w = length / 8.0
        initial = Field.from_function(
            (lambda x: np.exp(-x * x / (2 * w * w))) if d == 1 else
            (lambda x, y, z: np.exp(-(x * x + y * y + z * z) / (2 * w * w))), m, length, d)
    phi = initial.normalized()
    v = _sample(v_ext, phi)
    v = None if v is None else np.asarray(v, dtype=float)
    sym = kinetic_symbol(m, length, d)
    g = 8.0 * math.pi * a0
    fft, ifft = np.fft.fftn, np.fft.ifftn
    psi = phi.values
    used = 0
    energy = gp_energy(phi, a0, v)
    for tau in taus:
        half = np.exp(-0.5 * tau * sym)
        while True:
            pot = g * np.abs(psi) ** 2
            if v is not None:
                pot = pot + v
            psi = ifft(half * fft(np.exp(-tau * pot) * ifft(half * fft(psi))))
            psi /= math.sqrt(np.sum(np.abs(psi) ** 2) * phi.h ** d)
            used += 1
            new_e = gp_energy(Field(psi, length), a0, v)
            dec = energy - new_e
            energy = new_e
            if abs(dec) < tol:
                break
            if used >= max_steps:
                raise ConvergenceError(f"imaginary-time flow exceeded {max_steps} steps")
    out = Field(psi, length)
    if polish and d == 1 and m <= 2048:
        out = _polish_1d(out, a0, v)
    return out


def tangent_directional_derivative(phi: Field, a0: float, v_ext, direction: np.ndarray,
                                   eps: float = 1e-5) -> float:
    """Central-difference derivative of gp_energy along a norm-preserving curve."""
    vol = phi.h ** phi.dimension
    eta = direction - np.vdot(phi.values, direction) * vol * phi.values
    eta = eta / math.sqrt(np.sum(np.abs(eta) ** 2) * vol)

    def at(s):
        return gp_energy(Field(math.cos(s) * phi.values + math.sin(s) * eta, phi.length), a0, v_ext)
    return (at(eps) - at(-eps)) / (2.0 * eps)


def evolution_summary(traj: Trajectory, a0: float | None = None, v_ext=None) -> dict:
    rec = traj.summary(a0, v_ext)
    m = np.array(rec["mass"])
    rec["max_mass_drift"] = float(np.max(np.abs(m - m[0])))
    if "energy" in rec:
        e = np.array(rec["energy"])
        rec["max_energy_drift"] = float(np.max(np.abs(e - e[0])) / max(abs(e[0]), 1e-300))
    return rec

