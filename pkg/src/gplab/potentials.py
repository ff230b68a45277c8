"""Radial pair interactions, their strength measures and the N, beta scaling family."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Literal

import numpy as np
from scipy import integrate
from scipy.optimize import minimize_scalar

Kind = Literal["soft_sphere", "smooth_bump", "zero"]

QUAD_RTOL = 1e-10


@dataclass(frozen=True)
class PotentialSpec:
    """Positive, spherically symmetric, compactly supported profile V(|x|).

    ``soft_sphere`` is V0 on |x| < R; ``smooth_bump`` is
    V0 * exp(-1 / (1 - (|x|/R)^2)) on |x| < R; ``zero`` vanishes identically.
    """

    kind: Kind = "soft_sphere"
    v0: float = 1.0
    radius: float = 1.0
    dimension: int = 3

    def __post_init__(self):
        if self.kind not in ("soft_sphere", "smooth_bump", "zero"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.v0 < 0:
            raise ValueError("only repulsive potentials (v0 >= 0) are supported")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.dimension not in (1, 3):
            raise ValueError("dimension must be 1 or 3")

    @property
    def support(self) -> float:
        return self.radius

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.v0 == 0.0

    def __call__(self, r):
        """Evaluate V at radius (or signed 1D position) ``r``; accepts arrays."""
        r = np.abs(np.asarray(r, dtype=float))
        if self.is_zero:
            return np.zeros_like(r)
        inside = r < self.radius
        if self.kind == "soft_sphere":
            return np.where(inside, self.v0, 0.0)
        s = np.where(inside, r / self.radius, 0.0)
        with np.errstate(divide="ignore", over="ignore"):
            val = self.v0 * np.exp(-1.0 / (1.0 - s * s))
        return np.where(inside, val, 0.0)

    def to_record(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ScaledPair:
    """Pair interaction w(x) = N^(d*beta - 1) V(N^beta x)."""

    base: PotentialSpec
    n: int = 1
    beta: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("particle number must be >= 1")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")

    @property
    def dimension(self) -> int:
        return self.base.dimension

    @property
    def length_scale(self) -> float:
        return float(self.n) ** self.beta

    @property
    def prefactor(self) -> float:
        return float(self.n) ** (self.dimension * self.beta - 1.0)

    @property
    def support(self) -> float:
        return self.base.radius / self.length_scale

    @property
    def is_zero(self) -> bool:
        return self.base.is_zero

    def __call__(self, x):
        return scaled_eval(self, x)

    def to_record(self) -> dict:
        rec = self.base.to_record()
        rec.update(n=self.n, beta=self.beta)
        return rec


def potential_from_record(rec: dict) -> PotentialSpec | ScaledPair:
    """Inverse of ``to_record``; returns a ScaledPair when ``n`` is present."""
    base = PotentialSpec(
        kind=rec.get("kind", "soft_sphere"),
        v0=float(rec.get("v0", 1.0)),
        radius=float(rec.get("radius", 1.0)),
        dimension=int(rec.get("dimension", 3)),
    )
    if "n" in rec:
        return ScaledPair(base, n=int(rec["n"]), beta=float(rec.get("beta", 1.0)))
    return base


def scaled_eval(pair: ScaledPair, x):
    return pair.prefactor * pair.base(pair.length_scale * np.abs(np.asarray(x, dtype=float)))


def _radial_quad(func, radius: float) -> float:
    val, _ = integrate.quad(func, 0.0, radius, epsabs=0.0, epsrel=QUAD_RTOL, limit=200)
    return val


def b0_integral(spec: PotentialSpec) -> float:
    """Integral of V over R^d."""
    if spec.is_zero:
        return 0.0
    R, d = spec.radius, spec.dimension
    if spec.kind == "soft_sphere":
        return spec.v0 * (4.0 / 3.0 * math.pi * R**3 if d == 3 else 2.0 * R)
    if d == 3:
        return 4.0 * math.pi * _radial_quad(lambda r: float(spec(r)) * r * r, R)
    return 2.0 * _radial_quad(lambda r: float(spec(r)), R)


def alpha_measure(spec: PotentialSpec) -> float:
    """sup |x|^2 V(x) + int V(x)/|x| dx.

    In one dimension the second term diverges for any V with V(0) > 0, so
    ``inf`` is returned there.
    """
    if spec.is_zero:
        return 0.0
    R = spec.radius
    if spec.dimension == 1:
        return math.inf
    if spec.kind == "soft_sphere":
        return spec.v0 * R**2 + 2.0 * math.pi * spec.v0 * R**2
    # r^2 exp(-1/(1-s^2)) is unimodal on (0, R)
    res = _bounded_max(lambda r: r * r * float(spec(r)), 0.0, R)
    return res + 4.0 * math.pi * _radial_quad(lambda r: float(spec(r)) * r, R)


def _bounded_max(func, a: float, b: float, tol: float = 1e-13) -> float:
    out = minimize_scalar(lambda r: -func(r), bounds=(a, b), method="bounded",
                          options={"xatol": tol * max(b, 1.0)})
    return float(-out.fun)
