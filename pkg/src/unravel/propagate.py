"""Deterministic reference propagation of the master equation.

Classic fixed-step RK4 on d rho/dt = L_t[rho]. This is the oracle every
stochastic method is measured against, so it deliberately has no adaptive
machinery: a TimeGrid pins the step sequence exactly and a ``substeps``
argument refines between grid points when higher accuracy is wanted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch, SingularMap
from .linalg import require_density, vec
from .master_equation import MasterEquation, lindblad_apply

__all__ = [
    "TimeGrid",
    "OracleSolution",
    "rk4_step",
    "propagate",
    "propagator_map",
    "propagator_maps",
    "intermediate_propagator",
    "choi_matrix",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t0, t0+dt, ..., t_max with t_max hit exactly."""

    t0: float
    t_max: float
    dt: float

    def __post_init__(self):
        if self.dt <= 0 or self.t_max <= self.t0:
            raise ValueError(f"bad grid: t0={self.t0}, t_max={self.t_max}, dt={self.dt}")
        n = round((self.t_max - self.t0) / self.dt)
        if n < 1 or abs(self.t0 + n * self.dt - self.t_max) > 1e-9 * max(1.0, abs(self.t_max)):
            raise ValueError(f"dt={self.dt} does not divide [{self.t0}, {self.t_max}]")

    @property
    def n_steps(self) -> int:
        return round((self.t_max - self.t0) / self.dt)

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)


@dataclass(frozen=True)
class OracleSolution:
    """Deterministic solution: one density matrix per grid point."""

    grid: TimeGrid
    states: np.ndarray  # (n_steps+1, d, d)

    def __post_init__(self):
        if self.states.shape[0] != self.grid.n_steps + 1:
            raise GridMismatch(
                f"{self.states.shape[0]} states on a grid with {self.grid.n_steps + 1} points"
            )


def _rhs(me: MasterEquation, t: float, rho: np.ndarray) -> np.ndarray:
    return lindblad_apply(me, t, rho)


def rk4_step(me: MasterEquation, t: float, rho: np.ndarray, dt: float) -> np.ndarray:
    k1 = _rhs(me, t, rho)
    k2 = _rhs(me, t + 0.5 * dt, rho + 0.5 * dt * k1)
    k3 = _rhs(me, t + 0.5 * dt, rho + 0.5 * dt * k2)
    k4 = _rhs(me, t + dt, rho + dt * k3)
    return rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def propagate(
    me: MasterEquation,
    rho0: np.ndarray,
    grid: TimeGrid,
    substeps: int = 1,
    check_trace: bool | None = None,
) -> OracleSolution:
    """Solve the master equation on the grid.

    ``substeps`` RK4 steps are taken between neighboring grid points.
    Trace conservation is monitored (drift above 1e-8 raises) unless the
    equation has a trace sink, which legitimately changes the trace.
    """
    rho = require_density(rho0).astype(complex)
    if check_trace is None:
        check_trace = me.trace_sink is None
    out = np.empty((grid.n_steps + 1, me.dim, me.dim), dtype=complex)
    out[0] = rho
    h = grid.dt / substeps
    times = grid.times()
    for i in range(grid.n_steps):
        for j in range(substeps):
            rho = rk4_step(me, times[i] + j * h, rho, h)
        if check_trace:
            drift = abs(np.trace(rho).real - 1.0) + abs(np.trace(rho).imag)
            if drift > 1e-8:
                raise ArithmeticError(f"trace drifted by {drift:.2e} at t={times[i + 1]:.6g}; reduce dt")
        out[i + 1] = rho
    return OracleSolution(grid, out)


def propagator_map(me: MasterEquation, grid: TimeGrid, t_index: int, substeps: int = 1) -> np.ndarray:
    """Superoperator matrix of the map from t0 to grid point ``t_index``."""
    if not 0 <= t_index <= grid.n_steps:
        raise IndexError(f"t_index {t_index} outside grid with {grid.n_steps + 1} points")
    return propagator_maps(me, grid, substeps)[t_index]


def propagator_maps(me: MasterEquation, grid: TimeGrid, substeps: int = 1) -> np.ndarray:
    """Column-stacked superoperator matrices S(t): vec(rho_t) = S(t) vec(rho_0).

    Returns (n_steps+1, d^2, d^2); S(t0) is the identity. Built by evolving
    all d^2 matrix units at once (the generator is linear, hermiticity of the
    intermediate matrices is irrelevant).
    """
    d = me.dim
    basis = np.zeros((d * d, d, d), dtype=complex)
    for j in range(d):
        for i in range(d):
            basis[i + j * d, i, j] = 1.0  # vec index of E_ij is i + j*d
    h = grid.dt / substeps
    times = grid.times()
    out = np.empty((grid.n_steps + 1, d * d, d * d), dtype=complex)
    out[0] = np.eye(d * d)
    cur = basis.copy()
    for n in range(grid.n_steps):
        for j in range(substeps):
            t = times[n] + j * h
            k1 = _batch_rhs(me, t, cur)
            k2 = _batch_rhs(me, t + 0.5 * h, cur + 0.5 * h * k1)
            k3 = _batch_rhs(me, t + 0.5 * h, cur + 0.5 * h * k2)
            k4 = _batch_rhs(me, t + h, cur + h * k3)
            cur = cur + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for p in range(d * d):
            out[n + 1][:, p] = vec(cur[p])
    return out


def _batch_rhs(me: MasterEquation, t: float, rhos: np.ndarray) -> np.ndarray:
    snap = me.at(t)
    out = -1j * (snap.h[None] @ rhos - rhos @ snap.h[None])
    out += np.einsum("a,aik,nkl,ajl->nij", snap.gammas, snap.ls, rhos, np.conj(snap.ls))
    g = snap.gamma_drift
    out -= 0.5 * (g[None] @ rhos + rhos @ g[None])
    return out


def intermediate_propagator(s_t: np.ndarray, s_s: np.ndarray, cond_limit: float = 1e12) -> np.ndarray:
    """V(t, s) = S(t) S(s)^{-1}; raises SingularMap when S(s) is too ill-conditioned."""
    c = np.linalg.cond(s_s)
    if not np.isfinite(c) or c > cond_limit:
        raise SingularMap(f"propagator at s has condition number {c:.3e} > {cond_limit:.1e}")
    return np.linalg.solve(s_s.T, s_t.T).T


def choi_matrix(s: np.ndarray, d: int) -> np.ndarray:
    """Choi matrix C = sum_ij E_ij (x) S[E_ij] of a column-stacked superoperator.

    C is PSD iff the map is completely positive.
    """
    c = np.empty((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            block = s[:, i + j * d].reshape(d, d, order="F")
            c[i * d:(i + 1) * d, j * d:(j + 1) * d] = block
    return c


def grids_equal(a: TimeGrid, b: TimeGrid) -> None:
    if (a.t0, a.t_max, a.dt) != (b.t0, b.t_max, b.dt):
        raise GridMismatch(f"grids differ: {a} vs {b}")
