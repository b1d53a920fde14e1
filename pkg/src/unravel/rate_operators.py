"""Rate operators for orthogonal-jump unravelings and their gauges.

Three flavors share the jump part J_t[|psi><psi|] = sum_a gamma_a L_a
|psi><psi| L_a^dag:

* W     = P J P with P = 1 - |psi><psi|; PSD for every psi iff the flow is
          P divisible. Jumps land orthogonal to psi.
* R     = J + (1/2)(C_t |psi><psi| + |psi><psi| C_t^dag), a time-dependent
          gauge C_t; the master equation is unchanged, the unraveling is not.
* Psi-R = J + (1/2)(|phi><psi| + |psi><phi|) with a state-dependent raw
          vector phi = phi(t, psi); phi is used exactly as supplied (no
          normalization, no phase convention).

The accompanying deterministic drifts:
  K^W   = K + (i/2) sum_a gamma_a (2 conj(l_a) L_a - |l_a|^2),  l_a = <psi|L_a|psi>
  K'    = K - (i/2) C_t
  K^Psi = K - (i/2) |phi><psi|
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .linalg import complement_batch, eigh_batched, hermitize, phase_fix_columns
from .master_equation import GeneratorSnapshot, MasterEquation

__all__ = [
    "GaugeTransform",
    "gauge_none",
    "time_dependent_gauge",
    "state_dependent_gauge",
    "RateOperatorSpectrum",
    "jump_matrix",
    "w_rate_operator",
    "rate_operator",
    "w_drift_step",
    "r_drift_matrix",
    "psi_drift_step",
    "w_matching_gauge",
    "w_spectrum_batch",
    "ro_spectrum_batch",
    "gauge_vectors_batch",
]


@dataclass(frozen=True)
class GaugeTransform:
    """kind is 'none', 'time_dependent' (c: t -> matrix) or 'state_dependent'
    (phi: (t, psi) -> raw vector). phi_batch, if given, evaluates phi on a
    stack of states at once; the vectorized runners use it."""

    kind: str
    c: Callable[[float], np.ndarray] | None = None
    phi: Callable[[float, np.ndarray], np.ndarray] | None = None
    phi_batch: Callable[[float, np.ndarray], np.ndarray] | None = None


def gauge_none() -> GaugeTransform:
    return GaugeTransform("none")


def time_dependent_gauge(c) -> GaugeTransform:
    cfn = c if callable(c) else (lambda t, _m=np.asarray(c, dtype=complex): _m)
    return GaugeTransform("time_dependent", c=cfn)


def state_dependent_gauge(phi, phi_batch=None) -> GaugeTransform:
    return GaugeTransform("state_dependent", phi=phi, phi_batch=phi_batch)


@dataclass(frozen=True)
class RateOperatorSpectrum:
    """Eigenvalues descending; eigenvectors in matching columns."""

    values: np.ndarray
    vectors: np.ndarray

    @property
    def eigenpairs(self) -> list[tuple[float, np.ndarray]]:
        return [(float(self.values[k]), self.vectors[:, k]) for k in range(len(self.values))]


def jump_matrix(snap: GeneratorSnapshot, psi: np.ndarray) -> np.ndarray:
    """J_t[|psi><psi|]."""
    y = np.einsum("aij,j->ai", snap.ls, psi)
    return np.einsum("a,ai,aj->ij", snap.gammas, y, np.conj(y))


def gauge_vectors_batch(gauge: GaugeTransform, t: float, states: np.ndarray) -> np.ndarray:
    """phi for every row of ``states``; zeros for the trivial gauge."""
    if gauge.kind == "none":
        return np.zeros_like(states)
    if gauge.kind == "time_dependent":
        return states @ gauge.c(t).T
    if gauge.phi_batch is not None:
        return np.asarray(gauge.phi_batch(t, states), dtype=complex)
    return np.stack([np.asarray(gauge.phi(t, s), dtype=complex) for s in states])


def w_spectrum_batch(snap: GeneratorSnapshot, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """W spectrum on span{psi}^perp for each row: ((n, d-1), (n, d, d-1)).

    The projector P acts as the identity on the complement basis Q, so the
    restricted operator is just Q^dag J Q.
    """
    n, d = states.shape
    qs = complement_batch(states)
    y = np.einsum("aij,nj->ani", snap.ls, states)
    j = np.einsum("a,ani,anj->nij", snap.gammas, y, np.conj(y))
    w_perp = np.einsum("nki,nkl,nlj->nij", np.conj(qs), j, qs)
    if d == 2:
        vals = w_perp[:, 0, 0].real.reshape(n, 1)
        phis = qs.copy()
    else:
        vals, small = eigh_batched(hermitize(w_perp))
        phis = np.einsum("nkp,npj->nkj", qs, small)
    return vals, phase_fix_columns(phis)


def w_rate_operator(me: MasterEquation, t: float, psi: np.ndarray) -> RateOperatorSpectrum:
    """Spectrum of (1 - |psi><psi|) J_t[|psi><psi|] (1 - |psi><psi|) on psi^perp.

    Only the d-1 jump-relevant eigenpairs are returned; every eigenvector is
    orthogonal to psi by construction (psi itself spans the trivial kernel).
    """
    vals, phis = w_spectrum_batch(me.at(t), np.asarray(psi, dtype=complex)[None, :])
    return RateOperatorSpectrum(vals[0], phis[0])


def ro_spectrum_batch(
    snap: GeneratorSnapshot, states: np.ndarray, phis: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gauged rate-operator spectrum per row: ((n, d), (n, d, d))."""
    y = np.einsum("aij,nj->ani", snap.ls, states)
    r = np.einsum("a,ani,anj->nij", snap.gammas, y, np.conj(y))
    cross = 0.5 * np.einsum("ni,nj->nij", phis, np.conj(states))
    r += cross + np.conj(np.swapaxes(cross, 1, 2))
    return eigh_batched(hermitize(r))


def rate_operator(me: MasterEquation, t: float, psi: np.ndarray, g: GaugeTransform) -> RateOperatorSpectrum:
    """Full spectrum of the gauged rate operator (R or Psi-R by gauge kind)."""
    psi = np.asarray(psi, dtype=complex)
    phi = gauge_vectors_batch(g, t, psi[None, :])
    vals, vecs = ro_spectrum_batch(me.at(t), psi[None, :], phi)
    return RateOperatorSpectrum(vals[0], vecs[0])


def w_drift_step(snap: GeneratorSnapshot, states: np.ndarray, dt: float) -> np.ndarray:
    """Euler step of the W-ROQJ nonlinear drift, unnormalized rows.

    K^W = K + (i/2) sum_a gamma_a (2 conj(l_a) L_a - |l_a|^2), so the Euler
    update is psi - i dt K psi + (dt/2) sum_a gamma_a (2 conj(l_a) L_a psi
    - |l_a|^2 psi).
    """
    y = np.einsum("aij,nj->ani", snap.ls, states)
    ell = np.einsum("ni,ani->an", np.conj(states), y)
    corr = np.einsum("a,an,ani->ni", snap.gammas, 2.0 * np.conj(ell), y)
    corr -= np.einsum("a,an,ni->ni", snap.gammas, np.abs(ell) ** 2, states)
    return states - 1j * dt * (states @ snap.k.T) + 0.5 * dt * corr


def r_drift_matrix(snap: GeneratorSnapshot, c_t: np.ndarray, dt: float) -> np.ndarray:
    """One-step Euler matrix for the linear R-ROQJ drift K' = K - (i/2) C_t."""
    kp = snap.k - 0.5j * c_t
    return np.eye(snap.k.shape[0], dtype=complex) - 1j * dt * kp


def psi_drift_step(snap: GeneratorSnapshot, states: np.ndarray, phis: np.ndarray, dt: float) -> np.ndarray:
    """Euler step of the Psi-ROQJ drift K^Psi = K - (i/2)|phi><psi|, unnormalized.

    With <psi|psi> = 1 the gauge term contributes -(dt/2) phi.
    """
    return states - 1j * dt * (states @ snap.k.T) - 0.5 * dt * phis


def w_matching_gauge(me: MasterEquation, offset: float = 1.0) -> GaugeTransform:
    """State-dependent gauge whose Psi-R reproduces W on span{psi}^perp.

    phi = -2 J psi + (<psi|J psi> + offset) psi makes psi an eigenvector of
    Psi-R with eigenvalue ``offset`` > 0 and leaves the perp block equal to W.
    """
    if offset <= 0:
        raise ValueError("offset must be positive so psi's eigenvalue stays positive")

    def phi_batch(t: float, states: np.ndarray) -> np.ndarray:
        snap = me.at(t)
        y = np.einsum("aij,nj->ani", snap.ls, states)
        jpsi = np.einsum("a,ani,anj,nj->ni", snap.gammas, y, np.conj(y), states)
        a = np.einsum("ni,ni->n", np.conj(states), jpsi).real
        return -2.0 * jpsi + (a + offset)[:, None] * states

    def phi(t: float, psi: np.ndarray) -> np.ndarray:
        return phi_batch(t, np.asarray(psi, dtype=complex)[None, :])[0]

    return state_dependent_gauge(phi, phi_batch)
