"""Residual checks of the BBGKY and infinite (GP) hierarchies on simulated data.

All one- and two-particle objects are handled as matrices in the orthonormal
site basis (kernel values times h per side), so Frobenius norms of matrices
equal the h-weighted kernel norms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import io
from .fock_lattice import FockState, LatticeSpec, evolve_manybody
from .gp_field import Trajectory, kinetic_symbol
from .krylov import KrylovStats
from .marginals import InvalidOrderError, MarginalDensity, reduce
from .potentials import ScaledPair


@dataclass
class MarginalTrajectory:
    times: np.ndarray
    gamma1: list[MarginalDensity]
    gamma2: list[MarginalDensity] | None
    n: int
    lattice: LatticeSpec
    pair: ScaledPair | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size > 1:
            d = np.diff(self.times)
            if np.any(d <= 0) or np.max(np.abs(d - d[0])) > 1e-9 * d[0]:
                raise ValueError("trajectory times must be uniform and increasing")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


def record_marginals(psi0: FockState, ham, dt: float, steps: int, with_gamma2: bool = True,
                     krylov_dim: int = 12, tol: float = 1e-13) -> MarginalTrajectory:
    """Evolve psi0 and store gamma^(1) (and gamma^(2) when N >= 2) after every step."""
    g1, g2, times = [reduce(psi0, 1)], [], [0.0]
    want2 = with_gamma2 and psi0.n >= 2
    if want2:
        g2.append(reduce(psi0, 2))
    stats = KrylovStats()

    def keep(t, psi):
        times.append(t)
        g1.append(reduce(psi, 1))
        if want2:
            g2.append(reduce(psi, 2))

    evolve_manybody(psi0, ham, dt, steps, krylov_dim=krylov_dim, tol=tol, stats=stats, callback=keep)
    return MarginalTrajectory(np.array(times), g1, g2 if want2 else None, psi0.n, psi0.lattice,
                              ham.pair, {"krylov_matvecs": stats.matvecs})


@dataclass
class ResidualSeries:
    times: np.ndarray
    residual: np.ndarray
    model: np.ndarray | None = None

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual)) if self.residual.size else 0.0

    def to_csv(self, path):
        cols = {"t": self.times, "residual": self.residual}
        if self.model is not None:
            cols["error_model"] = self.model
        return io.write_columns(path, cols)

    def summary(self, refinement_order: float | None = None) -> dict:
        return {"max_residual": self.max_residual, "refinement_order": refinement_order}


def _interaction_term(g2: MarginalDensity, w: np.ndarray, n: int) -> np.ndarray:
    """(N-1) sum_{x2} (w(x1-x2) - w(y1-x2)) G2[(x1,x2),(y1,x2)]."""
    t = g2.matrix.reshape((g2.m,) * 4)
    diag = np.einsum("abcb->acb", t)  # [x1, y1, x2]
    return (n - 1) * (np.einsum("ab,acb->ac", w, diag) - np.einsum("cb,acb->ac", w, diag))


def _third_derivative(mats: list[np.ndarray], dt: float) -> list[float]:
    n = len(mats)
    out = [float("nan")] * n
    for j in range(2, n - 2):
        d3 = (mats[j + 2] - 2 * mats[j + 1] + 2 * mats[j - 1] - mats[j - 2]) / (2 * dt ** 3)
        out[j] = float(np.linalg.norm(d3))
    good = [v for v in out if not math.isnan(v)]
    if good:
        first, last = next(v for v in out if not math.isnan(v)), good[-1]
        out = [first if (math.isnan(v) and j < 2) else (last if math.isnan(v) else v)
               for j, v in enumerate(out)]
    return out


def bbgky_residual_k1(traj: MarginalTrajectory, pair: ScaledPair | None = None) -> ResidualSeries:
    """Relative residual of the first BBGKY equation at interior snapshots.

    Time derivative by centered differences.  The error model dt^2/6 |d^3 gamma/dt^3|
    is estimated from the snapshots; on the lattice the spatial operators are exact,
    so no h^2 contribution enters.
    """
    if len(traj.gamma1) < 3:
        raise ValueError("BBGKY residual needs at least 3 snapshots")
    pair = traj.pair if pair is None else pair
    lat, dt = traj.lattice, traj.dt
    k = lat.one_body()
    w = lat.pair_matrix(pair)
    interacting = traj.n >= 2 and np.any(w)
    if interacting and traj.gamma2 is None:
        raise ValueError("interacting residual needs gamma^(2) snapshots")
    mats = [g.matrix for g in traj.gamma1]
    d3 = _third_derivative(mats, dt)
    res, model, times = [], [], []
    for j in range(1, len(mats) - 1):
        dgam = 1j * (mats[j + 1] - mats[j - 1]) / (2 * dt)
        comm = k @ mats[j] - mats[j] @ k
        inter = _interaction_term(traj.gamma2[j], w, traj.n) if interacting else np.zeros_like(comm)
        scale = max(np.linalg.norm(dgam), np.linalg.norm(comm), np.linalg.norm(inter),
                    np.linalg.norm(mats[j]))
        res.append(np.linalg.norm(dgam - comm - inter) / scale)
        model.append(dt * dt / 6.0 * d3[j] / scale if not math.isnan(d3[j]) else float("nan"))
        times.append(traj.times[j])
    return ResidualSeries(np.array(times), np.array(res), np.array(model))


def refinement_order(coarse: ResidualSeries, fine: ResidualSeries, ratio: float = 2.0) -> float:
    return math.log(coarse.max_residual / fine.max_residual) / math.log(ratio)


def collision_apply(g2: MarginalDensity, a0: float | None = None, sigma: float | None = None,
                    k: int = 1) -> np.ndarray:
    """Kernel of B^(1) gamma^(2): c i [gamma2(x,x;x',x) - gamma2(x,x';x',x')], c = 8 pi a0 or sigma.

    The lattice delta is the Kronecker delta divided by h.
    """
    if k != 1:
        raise NotImplementedError("collision operator implemented for k = 1")
    if g2.k != 2:
        raise InvalidOrderError("collision operator acts on gamma^(2)")
    if (a0 is None) == (sigma is None):
        raise ValueError("give exactly one of a0 (3D convention) or sigma (1D convention)")
    c = 8.0 * math.pi * a0 if sigma is None else sigma
    t = g2.matrix.reshape((g2.m,) * 4)  # [x1, x2, y1, y2], kernel times h^2
    first = np.einsum("aaca->ac", t)
    second = np.einsum("accc->ac", t)
    return 1j * c * (first - second) / g2.h ** 2


def kernel_trace(kernel: np.ndarray, h: float) -> complex:
    return complex(np.trace(kernel) * h)


def _propagator(m: int, h: float, t: float, dispersion: str = "spectral") -> np.ndarray:
    sym = kinetic_symbol(m, m * h, 1, dispersion)
    f = np.fft.fft(np.eye(m), axis=0, norm="ortho")
    return f.conj().T @ (np.exp(-1j * t * sym)[:, None] * f)


def free_propagate(g: MarginalDensity, t: float, dispersion: str = "spectral") -> MarginalDensity:
    """U^(k)(t) gamma = e^{it sum Delta} gamma e^{-it sum Delta}."""
    if g.k > 2:
        raise InvalidOrderError("free propagation implemented for k <= 2")
    u = _propagator(g.m, g.h, t, dispersion)
    if g.k == 2:
        u = np.kron(u, u)
    return MarginalDensity(g.k, g.m, g.h, u @ g.matrix @ u.conj().T)


def _kinetic_matrix(m: int, length: float, dispersion: str) -> np.ndarray:
    sym = kinetic_symbol(m, length, 1, dispersion)
    f = np.fft.fft(np.eye(m), axis=0, norm="ortho")
    return f.conj().T @ (sym[:, None] * f)


def _kron_norm(terms) -> float:
    """Frobenius norm of sum_a c_a A_a^(1) x ... x A_a^(k) without forming the products."""
    n = len(terms)
    gram = np.ones((n, n), dtype=complex)
    for i in range(n):
        for j in range(i, n):
            val = np.conj(terms[i][0]) * terms[j][0]
            for a, b in zip(terms[i][1], terms[j][1]):
                val *= np.vdot(a, b)
            gram[i, j] = val
            gram[j, i] = np.conj(val)
    return float(math.sqrt(max(gram.sum().real, 0.0)))


_STENCIL5 = ((-2, 1.0 / 12), (-1, -8.0 / 12), (1, 8.0 / 12), (2, -1.0 / 12))


def factorized_hierarchy_residual(traj: Trajectory, sigma: float, k: int = 1,
                                  allow_sigma_mismatch: bool = False) -> ResidualSeries:
    """Residual of gamma_t = |phi_t><phi_t|^{(x)k} in the infinite hierarchy with coupling sigma.

    Terms: i d_t gamma (five-point centered stencil), sum_j [-Delta_j, gamma] with the
    trajectory's own dispersion, and sigma sum_j Tr_{k+1}[delta_j, gamma^(k+1)], which for
    factorized data equals sigma sum_j (|phi(x_j)|^2 - |phi(x'_j)|^2) gamma.  Normalised by
    the largest single term, floored at |gamma| so that stationary data give absolute values.
    """
    if k not in (1, 2):
        raise InvalidOrderError("factorized check implemented for k in {1, 2}")
    fields = traj.fields
    if len(fields) < 5:
        raise ValueError("five-point stencil needs at least 5 snapshots")
    f0 = fields[0]
    if f0.dimension != 1 or any(not f0.same_grid(f) for f in fields):
        raise ValueError("trajectory must live on one 1D grid")
    params = traj.params
    dispersion, v_ext = "spectral", None
    if params is not None:
        if params.hartree:
            raise ValueError("factorized check needs a cubic NLS trajectory")
        if not allow_sigma_mismatch and not math.isclose(params.sigma, sigma, rel_tol=1e-12, abs_tol=1e-15):
            raise ValueError(f"trajectory sigma {params.sigma} differs from check sigma {sigma}")
        dispersion = params.dispersion
        if params.v_ext is not None:
            v_ext = np.asarray(params.v_ext(f0.x) if callable(params.v_ext) else params.v_ext, dtype=float)
    times = np.asarray(traj.times)
    dt = float(times[1] - times[0])
    if np.max(np.abs(np.diff(times) - dt)) > 1e-9 * dt:
        raise ValueError("snapshots must be uniformly spaced")
    m, h = f0.m, f0.h
    kin = _kinetic_matrix(m, f0.length, dispersion)
    if v_ext is not None:
        kin = kin + np.diag(v_ext)
    vecs = [f.values * math.sqrt(h) for f in fields]
    proj = [np.outer(v, v.conj()) for v in vecs]
    out_t, out_r = [], []
    for j in range(2, len(fields) - 2):
        p = proj[j]
        rho = np.abs(fields[j].values) ** 2
        comm = kin @ p - p @ kin
        inter = sigma * (rho[:, None] - rho[None, :]) * p
        # differences from p keep every Kronecker term small (no cancellation in the Gram sum)
        deltas = [(c / dt, proj[j + s] - p) for s, c in _STENCIL5]
        d1 = sum(c * d for c, d in deltas)
        gen = comm + inter
        r1 = 1j * d1 - gen
        if k == 1:
            resid = float(np.linalg.norm(r1))
            d_norm = float(np.linalg.norm(d1))
            c_norm = float(np.linalg.norm(comm))
            i_norm = float(np.linalg.norm(inter))
            g_norm = float(np.linalg.norm(p))
        else:
            # sum c_s P_s (x) P_s = D1 (x) P + P (x) D1 + sum c_s Delta_s (x) Delta_s
            quad = [(1j * c, [d, d]) for c, d in deltas]
            resid = _kron_norm([(1.0, [r1, p]), (1.0, [p, r1])] + quad)
            d_norm = _kron_norm([(1.0, [d1, p]), (1.0, [p, d1])] + [(c, [d, d]) for c, d in deltas])
            c_norm = _kron_norm([(1.0, [comm, p]), (1.0, [p, comm])])
            i_norm = _kron_norm([(1.0, [inter, p]), (1.0, [p, inter])])
            g_norm = float(np.linalg.norm(p)) ** 2
        scale = max(d_norm, c_norm, i_norm, g_norm)
        out_t.append(times[j])
        out_r.append(resid / scale)
    return ResidualSeries(np.array(out_t), np.array(out_r))


def duhamel_counts(k: int, m: int, n: int | None = None) -> dict:
    """Exact summand counts of the Duhamel expansion and the graph bound (Python integers)."""
    for name, v in (("k", k), ("m", m)) + ((("n", n),) if n is not None else ()):
        if not isinstance(v, (int, np.integer)) or v < 0:
            raise ValueError(f"{name} must be a non-negative integer")
    if k < 1:
        raise ValueError("k must be >= 1")
    k, m = int(k), int(m)
    rec = {"k": k, "m": m, "xi_summands": math.factorial(m + k) // math.factorial(k),
           "graph_bound": 2 ** (4 * m + k)}
    if n is not None:
        rec["n"] = int(n)
        rec["eta_summands"] = math.factorial(int(n) + k) // math.factorial(k)
    return rec
