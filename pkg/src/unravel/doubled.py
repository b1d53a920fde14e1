"""Pair-of-vectors unraveling for generators with negative rates.

A trajectory carries theta = (phi, psi), two unnormalized vectors whose
norms carry the statistical weight. The density matrix is recovered as the
hermitized ensemble mean of |phi><psi| with no per-trajectory
renormalization. Negative rates are absorbed into the jump factorization by
flipping the sign of one factor, so every jump has a nonnegative firing
probability while C rho D^dag still reproduces gamma L rho L^dag.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import StepTooLarge, ZeroVector
from .linalg import EPS
from .master_equation import MasterEquation
from .outcomes import Branch, Deterministic, Jump, select_branch
from .propagate import TimeGrid
from .rng import trajectory_uniforms

__all__ = [
    "DoubledState",
    "DoubledModel",
    "gksl_to_doubled",
    "doubled_branches",
    "doubled_step",
    "run_chunk",
]

Matrix = Callable[[float], np.ndarray]


@dataclass(frozen=True)
class DoubledState:
    phi: np.ndarray
    psi: np.ndarray

    @property
    def norm2(self) -> float:
        return float(np.vdot(self.phi, self.phi).real + np.vdot(self.psi, self.psi).real)


@dataclass(frozen=True)
class DoubledModel:
    """Drift blocks A, B and jump factor pairs (C_i, D_i), all time-dependent."""

    a: Matrix
    b: Matrix
    cs: tuple[Matrix, ...]
    ds: tuple[Matrix, ...]


def gksl_to_doubled(me: MasterEquation) -> DoubledModel:
    """Factor the generator so that drift = A rho + rho B^dag and the jump
    sandwich C_i rho D_i^dag carries the signed rate (sign goes on D)."""

    def drift_block(t: float) -> np.ndarray:
        snap = me.at(t)
        return -1j * snap.h - 0.5 * snap.gamma_l

    def c_factor(i: int) -> Matrix:
        def c(t: float) -> np.ndarray:
            snap = me.at(t)
            return np.sqrt(abs(snap.gammas[i])) * snap.ls[i]

        return c

    def d_factor(i: int) -> Matrix:
        def d(t: float) -> np.ndarray:
            snap = me.at(t)
            g = snap.gammas[i]
            return np.copysign(1.0, g) * np.sqrt(abs(g)) * snap.ls[i]

        return d

    m = len(me.channels)
    return DoubledModel(
        a=drift_block,
        b=drift_block,
        cs=tuple(c_factor(i) for i in range(m)),
        ds=tuple(d_factor(i) for i in range(m)),
    )


def _jump_images(model: DoubledModel, theta: DoubledState, t: float):
    n2 = theta.norm2
    if n2 <= EPS:
        raise ZeroVector("doubled state has zero joint norm")
    images = []
    qs = []
    for c, d in zip(model.cs, model.ds):
        cphi = c(t) @ theta.phi
        dpsi = d(t) @ theta.psi
        jn2 = float(np.vdot(cphi, cphi).real + np.vdot(dpsi, dpsi).real)
        images.append((cphi, dpsi, jn2))
        qs.append(jn2 / n2)
    return images, qs, n2


def doubled_branches(
    model: DoubledModel, theta: DoubledState, t: float, dt: float
) -> Sequence[Branch]:
    images, qs, n2 = _jump_images(model, theta, t)
    branches = []
    total = 0.0
    for i, ((cphi, dpsi, jn2), q) in enumerate(zip(images, qs)):
        p = q * dt
        total += p
        if p > 0.0:
            scale = np.sqrt(n2 / jn2)
            branches.append(
                Branch(p, DoubledState(scale * cphi, scale * dpsi), Jump(channel=i, probability=p))
            )
        else:
            branches.append(Branch(0.0, theta, Jump(channel=i, probability=0.0)))
    if total > 1.0:
        raise StepTooLarge(f"total doubled jump probability {total:.4g} > 1 at t={t:.6g}", time=t)
    sigma = 0.5 * sum(qs)
    phi = theta.phi + dt * (model.a(t) @ theta.phi + sigma * theta.phi)
    psi = theta.psi + dt * (model.b(t) @ theta.psi + sigma * theta.psi)
    branches.append(Branch(1.0 - total, DoubledState(phi, psi), Deterministic(1.0 - total)))
    return branches


def doubled_step(
    model: DoubledModel, theta: DoubledState, t: float, dt: float, u: float
) -> tuple[DoubledState, object]:
    branch = select_branch(doubled_branches(model, theta, t, dt), u)
    return branch.state, branch.event


def run_chunk(
    me: MasterEquation,
    psi0: np.ndarray,
    grid: TimeGrid,
    idx0: int,
    n: int,
    seed: int,
):
    """Evolve n doubled trajectories; rho_sum accumulates sum_k |phi_k><psi_k|
    raw (not hermitized), norms and all, which is the estimator's convention."""
    model = gksl_to_doubled(me)
    d = me.dim
    steps = grid.n_steps
    times = grid.times()
    us = trajectory_uniforms(seed, idx0, n, steps)
    phis = np.tile(np.asarray(psi0, dtype=complex), (n, 1))
    psis = phis.copy()
    rho_sum = np.zeros((steps + 1, d, d), dtype=complex)
    norm2_sum = np.zeros(steps + 1)
    rho_sum[0] = n * np.outer(psi0, np.conj(psi0))
    norm2_sum[0] = 2.0 * n
    m = len(model.cs)
    jump_total = np.zeros(m, dtype=np.int64)
    n_det = 0
    for k in range(steps):
        t = times[k]
        a_t = model.a(t)
        b_t = model.b(t)
        cs_t = [c(t) for c in model.cs]
        ds_t = [dd(t) for dd in model.ds]
        cphi = np.einsum("aij,nj->ani", np.array(cs_t), phis) if m else np.zeros((0, n, d))
        dpsi = np.einsum("aij,nj->ani", np.array(ds_t), psis) if m else np.zeros((0, n, d))
        jn2 = (
            np.einsum("ani,ani->an", cphi, np.conj(cphi)).real
            + np.einsum("ani,ani->an", dpsi, np.conj(dpsi)).real
        )
        n2 = (
            np.einsum("ni,ni->n", phis, np.conj(phis)).real
            + np.einsum("ni,ni->n", psis, np.conj(psis)).real
        )
        if np.any(n2 <= EPS):
            return rho_sum, _counts(jump_total, n_det), {"theta_norm2_sum": norm2_sum}, (
                ZeroVector(f"doubled state collapsed to zero at t={t:.6g}", time=t),
                k,
            )
        qs = jn2 / n2[None, :]
        probs = qs * grid.dt
        total = probs.sum(axis=0) if m else np.zeros(n)
        if np.any(total > 1.0):
            err = StepTooLarge(
                f"total doubled jump probability {total.max():.4g} > 1 at t={t:.6g}", time=t
            )
            return rho_sum, _counts(jump_total, n_det), {"theta_norm2_sum": norm2_sum}, (err, k)
        cum = np.cumsum(probs, axis=0) if m else np.zeros((0, n))
        choice = (us[:, k][None, :] >= cum).sum(axis=0)  # == m means deterministic
        sigma = 0.5 * qs.sum(axis=0) if m else np.zeros(n)
        new_phis = phis + grid.dt * (phis @ a_t.T + sigma[:, None] * phis)
        new_psis = psis + grid.dt * (psis @ b_t.T + sigma[:, None] * psis)
        for a in range(m):
            rows = np.nonzero(choice == a)[0]
            if rows.size == 0:
                continue
            scale = np.sqrt(n2[rows] / jn2[a, rows])
            new_phis[rows] = scale[:, None] * cphi[a, rows]
            new_psis[rows] = scale[:, None] * dpsi[a, rows]
            jump_total[a] += rows.size
        n_det += int((choice == m).sum())
        phis, psis = new_phis, new_psis
        rho_sum[k + 1] = np.einsum("ni,nj->ij", phis, np.conj(psis))
        norm2_sum[k + 1] = (
            np.einsum("ni,ni->", phis, np.conj(phis)).real
            + np.einsum("ni,ni->", psis, np.conj(psis)).real
        )
    return rho_sum, _counts(jump_total, n_det), {"theta_norm2_sum": norm2_sum}, None


def _counts(jump_total: np.ndarray, n_det: int) -> dict:
    return {
        "jump": int(jump_total.sum()),
        "jump_by_channel": jump_total.tolist(),
        "deterministic": n_det,
    }
