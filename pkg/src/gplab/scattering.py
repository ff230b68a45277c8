"""Zero-energy scattering problem (-Delta + V/2) f = 0 and the scattering length.

The radial reduction u(r) = r f(r) satisfies u'' = V(r) u / 2 with u(0) = 0.
Inside the support it is integrated with classical RK4 on a uniform grid whose
step is halved until the Richardson error estimate drops below tolerance;
beyond the support u is exactly linear and is normalised to u(r) = r - a0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from . import io
from .potentials import PotentialSpec, ScaledPair, alpha_measure, b0_integral


class ScatteringError(RuntimeError):
    pass


class InvalidDomainError(ScatteringError, ValueError):
    pass


class TailNotLinearError(ScatteringError):
    pass


@dataclass(frozen=True, eq=False)
class ScatteringSolution:
    spec: PotentialSpec | ScaledPair
    r_grid: np.ndarray
    u: np.ndarray
    du: np.ndarray
    a0: float
    f0: float
    n_inner: int
    error_estimate: float = 0.0

    @property
    def support(self) -> float:
        return self.spec.support

    @property
    def r_max(self) -> float:
        return float(self.r_grid[-1])

    @property
    def f(self) -> np.ndarray:
        r = self.r_grid
        out = np.empty_like(r)
        out[0] = self.f0
        out[1:] = self.u[1:] / r[1:]
        return out

    def f_prime(self) -> np.ndarray:
        r = self.r_grid
        out = np.zeros_like(r)
        out[1:] = (self.du[1:] * r[1:] - self.u[1:]) / r[1:] ** 2
        return out

    def evaluate_f(self, r) -> np.ndarray:
        """f at arbitrary radii: Hermite interpolation inside, exact tail outside."""
        r = np.abs(np.asarray(r, dtype=float))
        R = self.support
        out = np.empty_like(r)
        tail = r >= R
        with np.errstate(divide="ignore"):
            out[tail] = 1.0 - self.a0 / r[tail]
        inner = ~tail
        if np.any(inner):
            k = self.n_inner + 1
            spline = CubicHermiteSpline(self.r_grid[:k], self.u[:k], self.du[:k])
            ri = r[inner]
            vals = np.empty_like(ri)
            small = ri < 1e-300
            vals[small] = self.f0
            vals[~small] = spline(ri[~small]) / ri[~small]
            out[inner] = vals
        return out

    def to_csv(self, path):
        return io.write_columns(path, {"r": self.r_grid, "u": self.u, "f": self.f})


def _potential_nodes(spec, grid: np.ndarray) -> np.ndarray:
    # left limit at the support edge keeps soft-sphere RK4 stages on the interior branch
    r = grid.copy()
    R = spec.support
    r[r >= R] = np.nextafter(R, 0.0)
    return np.asarray(spec(r), dtype=float)


def _rk4_radial(spec, R: float, n: int):
    """Integrate u'' = V u / 2 on [0, R] with n uniform RK4 steps, u(0)=0, u'(0)=1."""
    h = R / n
    nodes = _potential_nodes(spec, np.linspace(0.0, R, 2 * n + 1))
    half = 0.5 * nodes
    u = np.empty(n + 1)
    du = np.empty(n + 1)
    u[0], du[0] = 0.0, 1.0
    a, b = 0.0, 1.0
    for j in range(n):
        q0, q1, q2 = half[2 * j], half[2 * j + 1], half[2 * j + 2]
        k1u, k1v = b, q0 * a
        k2u, k2v = b + 0.5 * h * k1v, q1 * (a + 0.5 * h * k1u)
        k3u, k3v = b + 0.5 * h * k2v, q1 * (a + 0.5 * h * k2u)
        k4u, k4v = b + h * k3v, q2 * (a + h * k3u)
        a = a + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        b = b + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        u[j + 1], du[j + 1] = a, b
    return u, du


def _check_positive(spec):
    probe = np.asarray(spec(np.linspace(0.0, spec.support, 257)), dtype=float)
    if np.any(probe < 0):
        raise ScatteringError("non-positive potential rejected")


def solve_zero_energy(spec: PotentialSpec | ScaledPair, r_max: float | None = None,
                      tol: float = 1e-12, n_start: int = 64, n_max: int = 1 << 16,
                      n_fixed: int | None = None, n_tail: int = 400) -> ScatteringSolution:
    """Solve the radial zero-energy scattering equation.

    ``tol`` bounds the Richardson estimate of the sup-norm error of u on the
    inner grid, relative to the support radius. ``n_fixed`` bypasses the
    adaptive refinement (used for convergence-order studies).
    """
    if spec.dimension != 3:
        raise InvalidDomainError("zero-energy scattering is solved in d=3 only")
    R = float(spec.support)
    if r_max is None:
        r_max = 20.0 * R
    if r_max <= 3.0 * R:
        raise InvalidDomainError(f"r_max={r_max} must exceed 3R={3 * R}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    _check_positive(spec)

    if n_fixed is not None:
        n = int(n_fixed)
        u, du = _rk4_radial(spec, R, n)
        est = float("nan")
    else:
        n = n_start
        u, du = _rk4_radial(spec, R, n)
        while True:
            u2, du2 = _rk4_radial(spec, R, 2 * n)
            scale = du2[-1]
            est = float(np.max(np.abs(u2[::2] - u)) / 15.0 / scale)
            u, du, n = u2, du2, 2 * n
            if est < tol * R or 2 * n > n_max:
                break
        if est >= tol * R:
            raise ScatteringError(f"RK4 refinement stalled at n={n} (estimate {est:.2e})")

    slope = du[-1]
    u = u / slope
    du = du / slope
    a0 = R - u[-1]
    f0 = du[0]

    # outward continuation through the force-free region: u'' = 0 is integrated exactly
    r_tail = np.linspace(R, r_max, n_tail + 1)[1:]
    u_tail = u[-1] + du[-1] * (r_tail - R)
    du_tail = np.full_like(r_tail, du[-1])
    r_in = np.linspace(0.0, R, n + 1)
    return ScatteringSolution(
        spec=spec,
        r_grid=np.concatenate([r_in, r_tail]),
        u=np.concatenate([u, u_tail]),
        du=np.concatenate([du, du_tail]),
        a0=float(a0),
        f0=float(f0),
        n_inner=n,
        error_estimate=est,
    )


def scattering_length_tail(sol: ScatteringSolution, window_start: float = 1.5,
                           tol: float = 1e-9) -> float:
    """Least-squares fit of u(r) = r - a0 over (window_start * R, r_max]."""
    R = sol.support
    if sol.r_max <= R:
        raise InvalidDomainError("solution does not extend beyond the support")
    sel = sol.r_grid > window_start * R
    if sel.sum() < 2:
        raise InvalidDomainError("tail window is empty")
    r, u = sol.r_grid[sel], sol.u[sel]
    a0 = float(np.mean(r - u))
    resid = float(np.sqrt(np.mean((u - (r - a0)) ** 2)))
    if resid > tol * max(R, abs(a0)):
        raise TailNotLinearError(f"tail fit residual {resid:.3e} exceeds tolerance")
    return a0


def scattering_length_integral(spec, sol: ScatteringSolution) -> float:
    """(1/8pi) int V f dx = (1/2) int_0^R V(r) u(r) r dr, composite Simpson on the solve grid."""
    if spec != sol.spec:
        raise ValueError("solution was computed for a different potential")
    n = sol.n_inner
    r = sol.r_grid[: n + 1]
    integrand = _potential_nodes(spec, r) * sol.u[: n + 1] * r
    h = r[1] - r[0]
    simpson = h / 3.0 * (integrand[0] + integrand[-1] + 4.0 * integrand[1:-1:2].sum()
                         + 2.0 * integrand[2:-1:2].sum())
    return 0.5 * float(simpson)


@dataclass(frozen=True)
class FBoundReport:
    c_low: float
    c_grad: float
    c_hess: float
    alpha: float
    deviation: float = 0.0  # 1 - min f

    def as_dict(self) -> dict:
        return {"c_low": self.c_low, "c_grad": self.c_grad, "c_hess": self.c_hess,
                "alpha": self.alpha, "deviation": self.deviation}


def _second_difference(r: np.ndarray, f: np.ndarray) -> np.ndarray:
    h0 = r[1:-1] - r[:-2]
    h1 = r[2:] - r[1:-1]
    out = np.zeros_like(f)
    out[1:-1] = 2.0 * (h0 * f[2:] - (h0 + h1) * f[1:-1] + h1 * f[:-2]) / (h0 * h1 * (h0 + h1))
    out[0] = out[1]
    out[-1] = out[-2]
    return out


def verify_f_bounds(sol: ScatteringSolution, alpha: float | None = None,
                    slack: float = 1e-12) -> FBoundReport:
    """Smallest constants with 1 - C_low a <= f <= 1, |f'| <= C_grad a / r, |f''| <= C_hess a / r^2."""
    f = sol.f
    if np.any(f > 1.0 + slack):
        raise ScatteringError("f exceeds 1")
    if np.any(np.diff(f) < -slack):
        raise ScatteringError("f is not nondecreasing")
    if alpha is None:
        alpha = alpha_measure(sol.spec) if isinstance(sol.spec, PotentialSpec) else None
        if alpha is None:
            raise ValueError("alpha must be given for scaled potentials")
    deviation = float(1.0 - f.min())
    if alpha == 0.0:
        return FBoundReport(0.0, 0.0, 0.0, 0.0, deviation)
    r = sol.r_grid
    fp = sol.f_prime()
    fpp = _second_difference(r, f)
    return FBoundReport(
        c_low=deviation / alpha,
        c_grad=float(np.max(r * np.abs(fp))) / alpha,
        c_hess=float(np.max(r * r * np.abs(fpp))) / alpha,
        alpha=float(alpha),
        deviation=deviation,
    )


@dataclass(frozen=True, eq=False)
class CorrelationFunction:
    """f_N(x) = f(N|x|) built from an unscaled scattering solution."""

    solution: ScatteringSolution
    n: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("N must be >= 1")

    @property
    def scattering_length(self) -> float:
        return self.solution.a0 / self.n

    def __call__(self, x):
        return self.solution.evaluate_f(self.n * np.abs(np.asarray(x, dtype=float)))

    def resolved_scattering_length(self, **kw) -> float:
        """Scattering length of N^2 V(N x) from an independent solve."""
        pair = ScaledPair(self.solution.spec, n=self.n, beta=1.0)
        kw.setdefault("r_max", self.solution.r_max / self.n)
        return solve_zero_energy(pair, **kw).a0


def build_correlation(sol: ScatteringSolution, n: int) -> CorrelationFunction:
    return CorrelationFunction(sol, int(n))


def coupling_constant(spec: PotentialSpec, beta: float, sol: ScatteringSolution | None = None) -> float:
    """Effective nonlinearity: 8 pi a0 at beta = 1, b0 = int V for 0 < beta < 1."""
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta={beta} out of range (0, 1]")
    if spec.is_zero:
        return 0.0
    if beta == 1.0:
        if spec.dimension != 3:
            raise ValueError("beta = 1 coupling needs the 3D scattering length")
        if sol is None:
            sol = solve_zero_energy(spec)
        return 8.0 * math.pi * sol.a0
    return b0_integral(spec)


def scattering_summary(spec: PotentialSpec, r_max: float | None = None, tol: float = 1e-12) -> dict:
    sol = solve_zero_energy(spec, r_max=r_max, tol=tol)
    return {
        "a0_tail": scattering_length_tail(sol),
        "a0_integral": scattering_length_integral(spec, sol),
        "b0": b0_integral(spec),
        "alpha": alpha_measure(spec),
        "f0": sol.f0,
    }
