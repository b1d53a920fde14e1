"""Divisibility diagnostics for time-local master equations.

CP divisibility of the flow is read off the instantaneous rates (all
nonnegative). P divisibility is probed through the positivity of the
projected jump-rate operator W restricted to span{psi}^perp: the flow is
P divisible iff W is PSD for every pure state. The generic test samples
Haar-random states plus the computational basis and is therefore one-sided:
a negative eigenvalue certifies violation, an all-positive sample is
evidence only. For the phase-covariant family the exact closed form
g_plus, g_minus >= 0 and g_z >= -(1/2) sqrt(g_plus g_minus) is available.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import EPS, haar_state, orthonormal_complement
from .master_equation import MasterEquation
from .propagate import TimeGrid

__all__ = [
    "is_cp_divisible_at",
    "min_rate_at",
    "is_p_divisible_at",
    "p_divisibility_min_eigenvalue",
    "phase_covariant_p_divisible_at",
    "DivisibilityReport",
    "divisibility_scan",
]


def min_rate_at(me: MasterEquation, t: float) -> float:
    return float(np.min(me.at(t).gammas))


def is_cp_divisible_at(me: MasterEquation, t: float) -> bool:
    """True iff every rate gamma_a(t) >= -eps."""
    return min_rate_at(me, t) >= -EPS


def _sample_states(dim: int, sample_count: int, seed: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=[seed, 0x9e3779b9]))
    psis = np.empty((sample_count + dim, dim), dtype=complex)
    for k in range(sample_count):
        psis[k] = haar_state(dim, gen)
    psis[sample_count:] = np.eye(dim)  # basis states catch sigma_+/- rate signs
    return psis


def _w_perp_min(me: MasterEquation, t: float, psis: np.ndarray, qs: np.ndarray) -> float:
    """min over samples of the smallest eigenvalue of Q^dag J[psi psi^dag] Q.

    Q's columns span psi^perp, so Q^dag J Q equals the W operator restricted
    to the jump-relevant subspace (the projector P acts as identity there).
    """
    snap = me.at(t)
    s, d = psis.shape
    j = np.zeros((s, d, d), dtype=complex)
    for a in range(len(snap.gammas)):
        y = psis @ snap.ls[a].T  # rows L_a psi
        j += snap.gammas[a] * np.einsum("si,sj->sij", y, np.conj(y))
    w_perp = np.einsum("sik,skl,slj->sij", np.conj(np.swapaxes(qs, 1, 2)), j, qs)
    w_perp = 0.5 * (w_perp + np.conj(np.swapaxes(w_perp, 1, 2)))
    return float(np.min(np.linalg.eigvalsh(w_perp)))


def p_divisibility_min_eigenvalue(
    me: MasterEquation, t: float, sample_count: int = 200, seed: int = 7
) -> float:
    psis = _sample_states(me.dim, sample_count, seed)
    qs = np.stack([orthonormal_complement(psi) for psi in psis])
    return _w_perp_min(me, t, psis, qs)


def is_p_divisible_at(me: MasterEquation, t: float, sample_count: int = 200, seed: int = 7) -> bool:
    """Sampled P-divisibility test; one-sided (False is a certificate)."""
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    return p_divisibility_min_eigenvalue(me, t, sample_count, seed) >= -EPS


def phase_covariant_p_divisible_at(gamma_plus: float, gamma_minus: float, gamma_z: float) -> bool:
    """Exact closed form for the phase-covariant family."""
    if gamma_plus < -EPS or gamma_minus < -EPS:
        return False
    prod = max(gamma_plus, 0.0) * max(gamma_minus, 0.0)
    return gamma_z >= -0.5 * np.sqrt(prod) - EPS


@dataclass(frozen=True)
class DivisibilityReport:
    time: float
    cp: bool
    p: bool
    min_rate: float
    min_w_eigenvalue: float


def divisibility_scan(
    me: MasterEquation, grid: TimeGrid, sample_count: int = 200, seed: int = 7
) -> list[DivisibilityReport]:
    """Classify every grid point. The same state sample is reused across times."""
    psis = _sample_states(me.dim, sample_count, seed)
    qs = np.stack([orthonormal_complement(psi) for psi in psis])
    reports = []
    for t in grid.times():
        mr = min_rate_at(me, t)
        mw = _w_perp_min(me, t, psis, qs)
        cp = mr >= -EPS
        p = mw >= -EPS
        assert not (cp and not p), f"CP without P at t={t}: numerical inconsistency"
        reports.append(DivisibilityReport(float(t), cp, p, mr, mw))
    return reports
