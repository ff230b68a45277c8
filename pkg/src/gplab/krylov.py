"""Lanczos approximation of exp(-i t H) v for Hermitian H given as a matvec."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal


class KrylovError(RuntimeError):
    pass


@dataclass
class KrylovStats:
    steps: int = 0
    substeps: int = 0
    rejected: int = 0
    matvecs: int = 0
    breakdowns: int = 0
    max_error: float = 0.0


def lanczos_expm(matvec, v: np.ndarray, tau: float, m: int = 12, stats: KrylovStats | None = None):
    """One Lanczos projection of exp(-i tau H) v.

    Returns (w, err) where err is the usual a-posteriori estimate
    beta_m |e_m^T exp(-i tau T_m) e_1| |v|.  A happy breakdown gives err = 0.
    """
    nrm = np.linalg.norm(v)
    if nrm == 0:
        return np.zeros_like(v), 0.0
    basis = np.empty((m, v.size), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    basis[0] = v / nrm
    k = m
    for j in range(m):
        w = matvec(basis[j])
        if stats is not None:
            stats.matvecs += 1
        alpha[j] = np.vdot(basis[j], w).real
        # full reorthogonalisation; m is small
        w = w - basis[: j + 1].T @ (basis[: j + 1].conj() @ w)
        w = w - basis[: j + 1].T @ (basis[: j + 1].conj() @ w)
        b = np.linalg.norm(w)
        beta[j] = b
        if b < 1e-13 * max(1.0, abs(alpha[j])):
            k = j + 1
            if stats is not None:
                stats.breakdowns += 1
            break
        if j + 1 < m:
            basis[j + 1] = w / b
    if k == 1:
        evals, evecs = np.array([alpha[0]]), np.ones((1, 1))
    else:
        evals, evecs = eigh_tridiagonal(alpha[:k], beta[: k - 1])
    coef = evecs @ (np.exp(-1j * tau * evals) * evecs[0].conj())
    out = nrm * (coef @ basis[:k])
    err = 0.0 if k < m else float(beta[m - 1] * abs(coef[-1]) * nrm)
    return out, err


def propagate(matvec, v: np.ndarray, t: float, m: int = 12, tol: float = 1e-12,
              stats: KrylovStats | None = None, min_fraction: float = 1e-9) -> np.ndarray:
    """exp(-i t H) v with adaptive substeps so that each Lanczos error estimate is <= tol |v|."""
    if stats is None:
        stats = KrylovStats()
    stats.steps += 1
    done, tau = 0.0, t
    nrm = np.linalg.norm(v)
    while done < t * (1 - 1e-14):
        tau = min(tau, t - done)
        w, err = lanczos_expm(matvec, v, tau, m, stats)
        if err > tol * max(nrm, 1e-300):
            stats.rejected += 1
            tau *= 0.5
            if tau < min_fraction * abs(t):
                raise KrylovError(f"Krylov step collapsed below {tau:.3e}; reduce dt or raise krylov_dim")
            continue
        stats.max_error = max(stats.max_error, err)
        stats.substeps += 1
        v = w
        done += tau
        if err < 0.01 * tol * nrm:
            tau *= 2.0
    return v
