"""Time-local master equations in GKSL form with possibly negative rates.

d rho / dt = -i [H(t), rho] + sum_a gamma_a(t) L_a rho L_a^dag
             - (1/2) {G(t), rho}

where G(t) defaults to sum_a gamma_a(t) L_a^dag L_a. A ``trace_sink``
override replaces G(t) in the anticommutator (and in the effective
Hamiltonian) with an arbitrary hermitian operator, in which case the
evolution no longer preserves the trace:  d tr(rho)/dt = tr((G_L - G) rho).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionMismatch
from .linalg import require_hermitian

__all__ = [
    "Channel",
    "MasterEquation",
    "GeneratorSnapshot",
    "channel",
    "master_equation",
    "decay_operator",
    "drift_decay_operator",
    "effective_hamiltonian",
    "lindblad_apply",
    "jump_superoperator_apply",
]

MatrixFn = Callable[[float], np.ndarray]
RateFn = Callable[[float], float]


def _const_matrix(m: np.ndarray) -> MatrixFn:
    m = np.asarray(m, dtype=complex)
    return lambda t: m


def _const_rate(g: float) -> RateFn:
    g = float(g)
    return lambda t: g


@dataclass(frozen=True)
class Channel:
    """One decay channel: jump operator L(t) and a real rate gamma(t)."""

    jump_operator: MatrixFn
    rate: RateFn
    label: str = ""


def channel(jump_operator, rate, label: str = "") -> Channel:
    """Build a Channel from callables or constants."""
    op = jump_operator if callable(jump_operator) else _const_matrix(jump_operator)
    r = rate if callable(rate) else _const_rate(rate)
    return Channel(op, r, label)


@dataclass(frozen=True)
class MasterEquation:
    dim: int
    hamiltonian: MatrixFn
    channels: tuple[Channel, ...]
    trace_sink: MatrixFn | None = None
    # memo of recent snapshots; RK4 and nested embeddings hit the same t
    # repeatedly (time-dependent pieces are required to be pure in t)
    _memo: dict = field(default_factory=dict, repr=False, compare=False)

    def at(self, t: float) -> "GeneratorSnapshot":
        """Evaluate every time-dependent piece once; hot loops step on this."""
        hit = self._memo.get(t)
        if hit is not None:
            return hit
        snap = self._evaluate(t)
        if len(self._memo) >= 8:
            self._memo.clear()
        self._memo[t] = snap
        return snap

    def _evaluate(self, t: float) -> "GeneratorSnapshot":
        h = np.asarray(self.hamiltonian(t), dtype=complex)
        if h.shape != (self.dim, self.dim):
            raise DimensionMismatch(f"hamiltonian(t={t}) has shape {h.shape}, expected {(self.dim,) * 2}")
        require_hermitian(h, what=f"hamiltonian(t={t})")
        ls = np.empty((len(self.channels), self.dim, self.dim), dtype=complex)
        gammas = np.empty(len(self.channels))
        for i, ch in enumerate(self.channels):
            li = np.asarray(ch.jump_operator(t), dtype=complex)
            if li.shape != (self.dim, self.dim):
                raise DimensionMismatch(f"jump operator {i}(t={t}) has shape {li.shape}")
            ls[i] = li
            gammas[i] = float(ch.rate(t))
        gamma_l = np.einsum("a,aki,akj->ij", gammas, np.conj(ls), ls)
        if self.trace_sink is not None:
            sink = np.asarray(self.trace_sink(t), dtype=complex)
            require_hermitian(sink, what=f"trace_sink(t={t})")
            drift = sink
        else:
            drift = gamma_l
        return GeneratorSnapshot(t=t, h=h, ls=ls, gammas=gammas, gamma_l=gamma_l, gamma_drift=drift)


@dataclass
class GeneratorSnapshot:
    """All generator pieces evaluated at one time."""

    t: float
    h: np.ndarray            # hamiltonian
    ls: np.ndarray           # (n_channels, d, d) jump operators
    gammas: np.ndarray       # (n_channels,) real rates
    gamma_l: np.ndarray      # sum_a gamma_a L_a^dag L_a
    gamma_drift: np.ndarray  # trace_sink override if present, else gamma_l
    _k: np.ndarray | None = field(default=None, repr=False)

    @property
    def k(self) -> np.ndarray:
        """Effective (non-hermitian) Hamiltonian K = H - (i/2) G."""
        if self._k is None:
            self._k = self.h - 0.5j * self.gamma_drift
        return self._k


def master_equation(dim, hamiltonian, channels, trace_sink=None) -> MasterEquation:
    """Build a MasterEquation from constants or callables.

    ``channels`` may mix Channel instances with (operator, rate) or
    (operator, rate, label) tuples.
    """
    h = hamiltonian if callable(hamiltonian) else _const_matrix(hamiltonian)
    chans = []
    for c in channels:
        if isinstance(c, Channel):
            chans.append(c)
        else:
            chans.append(channel(*c))
    sink = None
    if trace_sink is not None:
        sink = trace_sink if callable(trace_sink) else _const_matrix(trace_sink)
    return MasterEquation(int(dim), h, tuple(chans), sink)


def decay_operator(me: MasterEquation, t: float) -> np.ndarray:
    """G_L(t) = sum_a gamma_a(t) L_a(t)^dag L_a(t)."""
    return me.at(t).gamma_l


def drift_decay_operator(me: MasterEquation, t: float) -> np.ndarray:
    """The G(t) entering the anticommutator and K; trace_sink override if set."""
    return me.at(t).gamma_drift


def effective_hamiltonian(me: MasterEquation, t: float) -> np.ndarray:
    """K(t) = H(t) - (i/2) G(t)."""
    return me.at(t).k


def lindblad_apply(me: MasterEquation, t: float, rho: np.ndarray) -> np.ndarray:
    """Generator action L_t[rho]; rho may be any matrix (linearity is used
    by the propagator-map builder)."""
    snap = me.at(t)
    return lindblad_apply_snapshot(snap, rho)


def lindblad_apply_snapshot(snap: GeneratorSnapshot, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    out = -1j * (snap.h @ rho - rho @ snap.h)
    out += np.einsum("a,aik,kl,ajl->ij", snap.gammas, snap.ls, rho, np.conj(snap.ls))
    g = snap.gamma_drift
    out -= 0.5 * (g @ rho + rho @ g)
    return out


def jump_superoperator_apply(me: MasterEquation, t: float, rho: np.ndarray) -> np.ndarray:
    """J_t[rho] = sum_a gamma_a(t) L_a rho L_a^dag."""
    snap = me.at(t)
    return np.einsum("a,aik,kl,ajl->ij", snap.gammas, snap.ls, np.asarray(rho, dtype=complex), np.conj(snap.ls))
