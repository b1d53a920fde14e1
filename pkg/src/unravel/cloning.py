"""Variable-population unraveling of trace-non-preserving equations.

When the anticommutator operator is overridden (trace_sink), the trace of
rho grows or shrinks at rate tr((G_L - G) rho). A fixed-size trajectory
ensemble cannot represent that, so a step may also clone the current member
(both copies keep the pre-step state) or destroy it, with probabilities
delta * dt and -delta * dt where delta = <psi|(G_L - G)|psi>. The ensemble
estimate is trace_factor * sum |psi><psi| / N(0), whose trace tracks
tr rho(t) instead of sticking at one.

All rates must be nonnegative here; negative rates need one of the weighted
or pair-vector methods instead.
"""

from __future__ import annotations

import numpy as np

from .errors import NegativeRate, StepTooLarge
from .linalg import EPS, normalize
from .master_equation import MasterEquation
from .outcomes import Branch, Clone, Deterministic, Destroy, Jump, StepOutcome, select_branch
from .propagate import TimeGrid
from .rng import replica_generator

__all__ = ["clone_branches", "cloning_step", "run_replica"]


def _require_nonnegative(snap, t: float) -> None:
    worst = float(snap.gammas.min()) if len(snap.gammas) else 0.0
    if worst < -EPS:
        raise NegativeRate(
            f"rate {worst:.4g} < 0 at t={t:.6g}; the cloning method needs nonnegative rates",
            time=t,
        )


def clone_branches(me: MasterEquation, psi: np.ndarray, t: float, dt: float) -> list[Branch]:
    """Branch order: channel jumps, clone, destroy, deterministic drift."""
    snap = me.at(t)
    _require_nonnegative(snap, t)
    branches = []
    total = 0.0
    for a in range(len(snap.gammas)):
        y = snap.ls[a] @ psi
        p = float(snap.gammas[a] * np.vdot(y, y).real) * dt
        total += p
        target = normalize(y)[0] if p > 0.0 else psi
        branches.append(Branch(p, target, Jump(channel=a, probability=p)))
    delta = float(np.vdot(psi, (snap.gamma_l - snap.gamma_drift) @ psi).real)
    p_clone = max(0.0, delta * dt)
    p_destroy = max(0.0, -delta * dt)
    branches.append(Branch(p_clone, psi, Clone(p_clone), copies=2))
    branches.append(Branch(p_destroy, psi, Destroy(p_destroy), copies=0))
    total += p_clone + p_destroy
    if total > 1.0:
        raise StepTooLarge(f"total event probability {total:.4g} > 1 at t={t:.6g}", time=t)
    drift = normalize(psi - 1j * dt * (snap.k @ psi))[0]
    branches.append(Branch(1.0 - total, drift, Deterministic(1.0 - total)))
    return branches


def cloning_step(psi: np.ndarray, me: MasterEquation, t: float, dt: float, u: float) -> StepOutcome:
    """The event type tells the caller what to do with the population:
    Clone means two copies of the returned (pre-step) state now exist,
    Destroy means the member is gone."""
    b = select_branch(clone_branches(me, psi, t, dt), u)
    return StepOutcome(state=b.state, event=b.event)


def run_replica(
    me: MasterEquation,
    psi0: np.ndarray,
    grid: TimeGrid,
    n_members: int,
    replica: int,
    seed: int,
    resample_lo: float = 0.5,
    resample_hi: float = 2.0,
):
    """One population realization; rho_sum rows are trace_factor * sum |psi><psi|.

    The population is resampled back to n_members (uniform, with
    replacement) whenever it leaves [lo*n, hi*n]; the size ratio moves into
    trace_factor so the estimator is unchanged in expectation.
    """
    gen = replica_generator(seed, replica)
    d = me.dim
    steps = grid.n_steps
    times = grid.times()
    states = np.tile(np.asarray(psi0, dtype=complex), (n_members, 1))
    trace_factor = 1.0
    rho_sum = np.zeros((steps + 1, d, d), dtype=complex)
    rho_sum[0] = n_members * np.outer(psi0, np.conj(psi0))
    population = np.zeros(steps + 1, dtype=np.int64)
    population[0] = n_members
    m = len(me.channels)
    jump_total = np.zeros(m, dtype=np.int64)
    n_clone = n_destroy = n_det = 0
    for k in range(steps):
        t = times[k]
        cur = states.shape[0]
        if cur == 0:
            population[k + 1] = 0
            continue  # population extinct; the estimate is legitimately zero
        snap = me.at(t)
        try:
            _require_nonnegative(snap, t)
        except NegativeRate as err:
            return rho_sum, _counts(jump_total, n_clone, n_destroy, n_det), _diag(population), (err, k)
        ys = np.einsum("aij,nj->ani", snap.ls, states) if m else np.zeros((0, cur, d))
        n2 = np.einsum("ani,ani->an", ys, np.conj(ys)).real if m else np.zeros((0, cur))
        probs = snap.gammas[:, None] * n2 * grid.dt
        deltas = np.einsum(
            "ni,ij,nj->n", np.conj(states), snap.gamma_l - snap.gamma_drift, states
        ).real
        p_clone = np.maximum(0.0, deltas * grid.dt)
        p_destroy = np.maximum(0.0, -deltas * grid.dt)
        all_probs = np.vstack([probs, p_clone[None, :], p_destroy[None, :]])
        total = all_probs.sum(axis=0)
        if np.any(total > 1.0):
            err = StepTooLarge(
                f"total event probability {total.max():.4g} > 1 at t={t:.6g}", time=t
            )
            return rho_sum, _counts(jump_total, n_clone, n_destroy, n_det), _diag(population), (err, k)
        us = gen.random(cur)
        cum = np.cumsum(all_probs, axis=0)
        choice = (us[None, :] >= cum).sum(axis=0)  # m -> clone, m+1 -> destroy, m+2 -> drift
        drift = states - 1j * grid.dt * (states @ snap.k.T)
        drift /= np.linalg.norm(drift, axis=1)[:, None]
        out = drift
        copies = np.ones(cur, dtype=np.int64)
        for a in range(m):
            rows = np.nonzero(choice == a)[0]
            if rows.size:
                out[rows] = ys[a, rows] / np.linalg.norm(ys[a, rows], axis=1)[:, None]
                jump_total[a] += rows.size
        clone_rows = choice == m
        destroy_rows = choice == m + 1
        out[clone_rows] = states[clone_rows]  # both copies keep the pre-step state
        copies[clone_rows] = 2
        copies[destroy_rows] = 0
        n_clone += int(clone_rows.sum())
        n_destroy += int(destroy_rows.sum())
        n_det += int((choice == m + 2).sum())
        states = np.repeat(out, copies, axis=0)
        if not (resample_lo * n_members <= states.shape[0] <= resample_hi * n_members):
            if states.shape[0] > 0:
                idx = gen.integers(0, states.shape[0], size=n_members)
                trace_factor *= states.shape[0] / n_members
                states = states[idx]
        population[k + 1] = states.shape[0]
        if states.shape[0]:
            rho_sum[k + 1] = trace_factor * np.einsum("ni,nj->ij", states, np.conj(states))
    return rho_sum, _counts(jump_total, n_clone, n_destroy, n_det), _diag(population), None


def _counts(jump_total, n_clone, n_destroy, n_det):
    return {
        "jump": int(jump_total.sum()),
        "jump_by_channel": jump_total.tolist(),
        "clone": n_clone,
        "destroy": n_destroy,
        "deterministic": n_det,
    }


def _diag(population):
    return {"population": population}
