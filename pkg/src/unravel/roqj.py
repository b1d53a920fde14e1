"""Rate-operator quantum jump steppers.

Jump branches are the eigenpairs of the rate operator (W, R or Psi-R):
eigenstate nu is entered with probability lambda_nu dt. Eigendirections that
coincide with the current state are no-ops, so they are folded into the
deterministic branch and exempted from the positivity guard; the guard
rejects genuinely negative jump rates only (NegativeWEigenvalue for W,
NegativeROEigenvalue for gauged operators), which is how a loss of
P divisibility, or a badly chosen gauge, surfaces at runtime.
"""

from __future__ import annotations

import numpy as np

from .errors import NegativeROEigenvalue, NegativeWEigenvalue, StepTooLarge
from .linalg import EPS, normalize, weighted_outer_sum
from .master_equation import MasterEquation
from .outcomes import Branch, Deterministic, Jump, StepOutcome, select_branch
from .propagate import TimeGrid
from .rate_operators import (
    GaugeTransform,
    gauge_vectors_batch,
    psi_drift_step,
    r_drift_matrix,
    ro_spectrum_batch,
    w_drift_step,
    w_spectrum_batch,
)
from .rng import trajectory_uniforms

__all__ = ["wroqj_step", "roqj_step", "wroqj_branches", "roqj_branches", "run_chunk"]

_SELF_OVERLAP = 1.0 - 1e-8


def _jump_branches(vals, vecs_cols, psi, t, dt, err_cls, label) -> list[Branch]:
    """Jump branches with p = lambda dt; self-directed eigenpairs excluded."""
    branches = []
    for nu in range(len(vals)):
        phi = vecs_cols[:, nu]
        if abs(np.vdot(psi, phi)) ** 2 >= _SELF_OVERLAP:
            continue  # jumping to psi is a no-op; see module docstring
        lam = float(vals[nu])
        if lam < -EPS:
            raise err_cls(f"{label} eigenvalue {lam:.6g} < 0 at t={t:.6g}", time=t)
        p = max(lam, 0.0) * dt
        branches.append(Branch(p, phi, Jump(nu, probability=p, eigenvalue=lam)))
    total = sum(b.probability for b in branches)
    if total > 1.0:
        raise StepTooLarge(f"jump probability {total:.4g} > 1 at t={t:.6g}", time=t)
    return branches


def wroqj_branches(me: MasterEquation, psi: np.ndarray, t: float, dt: float) -> list[Branch]:
    psi = np.asarray(psi, dtype=complex)
    snap = me.at(t)
    vals, phis = w_spectrum_batch(snap, psi[None, :])
    branches = _jump_branches(vals[0], phis[0], psi, t, dt, NegativeWEigenvalue, "W")
    total = sum(b.probability for b in branches)
    drift = normalize(w_drift_step(snap, psi[None, :], dt)[0])[0]
    branches.append(Branch(1.0 - total, drift, Deterministic(probability=1.0 - total)))
    return branches


def wroqj_step(me: MasterEquation, psi: np.ndarray, t: float, dt: float, u: float) -> StepOutcome:
    b = select_branch(wroqj_branches(me, psi, t, dt), u)
    return StepOutcome(b.state, b.event)


def roqj_branches(
    me: MasterEquation, psi: np.ndarray, t: float, dt: float, g: GaugeTransform
) -> list[Branch]:
    psi = np.asarray(psi, dtype=complex)
    snap = me.at(t)
    phi_g = gauge_vectors_batch(g, t, psi[None, :])
    vals, vecs = ro_spectrum_batch(snap, psi[None, :], phi_g)
    branches = _jump_branches(vals[0], vecs[0], psi, t, dt, NegativeROEigenvalue, "rate operator")
    total = sum(b.probability for b in branches)
    if g.kind == "time_dependent":
        drift = normalize(r_drift_matrix(snap, g.c(t), dt) @ psi)[0]
    else:
        drift = normalize(psi_drift_step(snap, psi[None, :], phi_g, dt)[0])[0]
    branches.append(Branch(1.0 - total, drift, Deterministic(probability=1.0 - total)))
    return branches


def roqj_step(
    me: MasterEquation, psi: np.ndarray, t: float, dt: float, g: GaugeTransform, u: float
) -> StepOutcome:
    b = select_branch(roqj_branches(me, psi, t, dt, g), u)
    return StepOutcome(b.state, b.event)


def _batch_step_w(snap, states, dt):
    """Jump menu and drift for all rows at once (W flavor)."""
    vals, phis = w_spectrum_batch(snap, states)
    ov = np.abs(np.einsum("ni,nij->nj", np.conj(states), phis)) ** 2
    selfish = ov >= _SELF_OVERLAP
    bad = np.where(~selfish, vals, 0.0) < -EPS
    if np.any(bad):
        raise NegativeWEigenvalue(
            f"W eigenvalue {vals[bad].min():.6g} < 0 at t={snap.t:.6g}", time=snap.t
        )
    probs = np.where(selfish, 0.0, np.clip(vals, 0.0, None)) * dt
    drift = w_drift_step(snap, states, dt)
    return probs, phis, drift


def _batch_step_ro(snap, states, dt, g):
    phi_g = gauge_vectors_batch(g, snap.t, states)
    vals, vecs = ro_spectrum_batch(snap, states, phi_g)
    ov = np.abs(np.einsum("ni,nij->nj", np.conj(states), vecs)) ** 2
    selfish = ov >= _SELF_OVERLAP
    bad = np.where(~selfish, vals, 0.0) < -EPS
    if np.any(bad):
        raise NegativeROEigenvalue(
            f"rate-operator eigenvalue {vals[bad].min():.6g} < 0 at t={snap.t:.6g}", time=snap.t
        )
    probs = np.where(selfish, 0.0, np.clip(vals, 0.0, None)) * dt
    if g.kind == "time_dependent":
        drift = states @ r_drift_matrix(snap, g.c(snap.t), dt).T
    else:
        drift = psi_drift_step(snap, states, phi_g, dt)
    return probs, vecs, drift


def run_chunk(
    me: MasterEquation,
    psi0: np.ndarray,
    grid: TimeGrid,
    idx0: int,
    n: int,
    seed: int,
    flavor: str = "w",
    gauge: GaugeTransform | None = None,
):
    """Vectorized chunk runner for all three flavors ('w', 'r', 'psi')."""
    times = grid.times()
    steps = grid.n_steps
    u = trajectory_uniforms(seed, idx0, n, steps)
    states = np.tile(np.asarray(psi0, dtype=complex), (n, 1))
    rho_sum = np.zeros((steps + 1, me.dim, me.dim), dtype=complex)
    rho_sum[0] = weighted_outer_sum(states)
    n_jumps = 0
    for k in range(steps):
        snap = me.at(times[k])
        try:
            if flavor == "w":
                probs, targets, drift = _batch_step_w(snap, states, grid.dt)
            else:
                probs, targets, drift = _batch_step_ro(snap, states, grid.dt, gauge)
            total = probs.sum(axis=1)
            if np.any(total > 1.0):
                raise StepTooLarge(
                    f"max jump probability {total.max():.4g} > 1 at t={snap.t:.6g}", time=snap.t
                )
        except (NegativeWEigenvalue, NegativeROEigenvalue, StepTooLarge) as err:
            counts = {"jump": n_jumps, "deterministic": n * k - n_jumps}
            return rho_sum, counts, {}, (err, k)
        cum = np.cumsum(probs, axis=1)
        choice = (u[:, k][:, None] >= cum).sum(axis=1)  # == n_branches -> drift
        nb = probs.shape[1]
        out = drift / np.linalg.norm(drift, axis=1)[:, None]
        jumped = choice < nb
        if np.any(jumped):
            rows = np.nonzero(jumped)[0]
            out[rows] = targets[rows, :, choice[rows]]
            n_jumps += int(rows.size)
        states = out
        rho_sum[k + 1] = weighted_outer_sum(states)
    counts = {"jump": n_jumps, "deterministic": n * steps - n_jumps}
    return rho_sum, counts, {}, None
