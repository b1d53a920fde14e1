"""Monte Carlo wave function stepper (first order in dt).

Jump alpha fires with p_a = gamma_a ||L_a psi||^2 dt and lands at
normalize(L_a psi); otherwise the state drifts under the effective
Hamiltonian K and is renormalized. Rates must be nonnegative: a negative
rate means the dynamics needs one of the non-Markovian methods.
"""

from __future__ import annotations

import numpy as np

from .errors import NegativeRate, StepTooLarge
from .linalg import EPS, normalize, weighted_outer_sum
from .master_equation import GeneratorSnapshot, MasterEquation
from .outcomes import Branch, Deterministic, Jump, StepOutcome, select_branch
from .propagate import TimeGrid
from .rng import trajectory_uniforms

__all__ = ["mcwf_branches", "mcwf_step", "run_chunk", "first_jump_times"]


def _require_nonnegative_rates(snap: GeneratorSnapshot) -> None:
    lo = float(np.min(snap.gammas)) if len(snap.gammas) else 0.0
    if lo < -EPS:
        raise NegativeRate(
            f"rate {lo:.6g} < 0 at t={snap.t:.6g}; MCWF needs a CP-divisible flow "
            "(use NMQJ, a rate-operator method, or a weighted unraveling)",
            time=snap.t,
        )


def mcwf_branches(me: MasterEquation, psi: np.ndarray, t: float, dt: float) -> list[Branch]:
    """All one-step branches with exact probabilities; deterministic last."""
    snap = me.at(t)
    _require_nonnegative_rates(snap)
    psi = np.asarray(psi, dtype=complex)
    branches = []
    total = 0.0
    for a in range(len(snap.gammas)):
        y = snap.ls[a] @ psi
        p = float(snap.gammas[a] * dt * np.vdot(y, y).real)
        if p > 0.0:
            target = normalize(y)[0]
        else:
            target = psi
        branches.append(Branch(p, target, Jump(a, probability=p)))
        total += p
    if total > 1.0:
        raise StepTooLarge(f"sum of jump probabilities {total:.4g} > 1 at t={t:.6g}; reduce dt", time=t)
    drift = normalize(psi - 1j * dt * (snap.k @ psi))[0]
    branches.append(Branch(1.0 - total, drift, Deterministic(probability=1.0 - total)))
    return branches


def mcwf_step(me: MasterEquation, psi: np.ndarray, t: float, dt: float, u: float) -> StepOutcome:
    b = select_branch(mcwf_branches(me, psi, t, dt), u)
    return StepOutcome(b.state, b.event)


def step_states(
    snap: GeneratorSnapshot, states: np.ndarray, dt: float, u: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized one step for all rows; returns (new states, jumps per channel).

    Branch order matches mcwf_branches: channels in declaration order, then
    the deterministic branch.
    """
    _require_nonnegative_rates(snap)
    n, d = states.shape
    m = len(snap.gammas)
    ys = np.einsum("aij,nj->ani", snap.ls, states)
    probs = snap.gammas[:, None] * dt * np.einsum("ani,ani->an", ys, np.conj(ys)).real  # (m, n)
    total = probs.sum(axis=0)
    if np.any(total > 1.0):
        raise StepTooLarge(
            f"max one-step jump probability {total.max():.4g} > 1 at t={snap.t:.6g}", time=snap.t
        )
    cum = np.cumsum(probs, axis=0)
    choice = (u[None, :] >= cum).sum(axis=0)  # m means deterministic
    out = states - 1j * dt * (states @ snap.k.T)
    out /= np.linalg.norm(out, axis=1)[:, None]
    jumps = np.zeros(m, dtype=np.int64)
    for a in range(m):
        mask = choice == a
        if np.any(mask):
            ya = ys[a, mask]
            out[mask] = ya / np.linalg.norm(ya, axis=1)[:, None]
            jumps[a] = int(mask.sum())
    return out, jumps


def run_chunk(
    me: MasterEquation, psi0: np.ndarray, grid: TimeGrid, idx0: int, n: int, seed: int
):
    """Run n trajectories; returns (rho_sum series, event counts, diagnostics, abort)."""
    times = grid.times()
    steps = grid.n_steps
    u = trajectory_uniforms(seed, idx0, n, steps)
    states = np.tile(np.asarray(psi0, dtype=complex), (n, 1))
    rho_sum = np.zeros((steps + 1, me.dim, me.dim), dtype=complex)
    rho_sum[0] = weighted_outer_sum(states)
    jump_total = np.zeros(len(me.channels), dtype=np.int64)
    for k in range(steps):
        snap = me.at(times[k])
        try:
            states, jumps = step_states(snap, states, grid.dt, u[:, k])
        except (NegativeRate, StepTooLarge) as err:
            return rho_sum, _counts(jump_total, n * k), {}, (err, k)
        jump_total += jumps
        rho_sum[k + 1] = weighted_outer_sum(states)
    return rho_sum, _counts(jump_total, n * steps), {}, None


def _counts(jumps: np.ndarray, total_steps: int) -> dict:
    j = [int(x) for x in jumps]
    return {
        "jump": int(sum(j)),
        "jump_by_channel": j,
        "deterministic": int(total_steps - sum(j)),
    }


def first_jump_times(
    me: MasterEquation, psi0: np.ndarray, grid: TimeGrid, n: int, seed: int
) -> np.ndarray:
    """First-jump time per trajectory (inf where none fired before t_max).

    All trajectories share the deterministic no-jump path, so the survival
    scan is vectorized: trajectory k jumps at the first step whose uniform
    falls below that step's jump probability; the recorded time is the end
    of that step.
    """
    times = grid.times()
    steps = grid.n_steps
    psi = np.asarray(psi0, dtype=complex).copy()
    p_step = np.empty(steps)
    for k in range(steps):
        snap = me.at(times[k])
        _require_nonnegative_rates(snap)
        y = np.einsum("aij,j->ai", snap.ls, psi)
        p_step[k] = grid.dt * float(np.einsum("a,ai,ai->", snap.gammas, y, np.conj(y)).real)
        psi = normalize(psi - 1j * grid.dt * (snap.k @ psi))[0]
    u = trajectory_uniforms(seed, 0, n, steps)
    hit = u < p_step[None, :]
    first = np.argmax(hit, axis=1)
    out = times[first + 1].astype(float)
    out[~hit.any(axis=1)] = np.inf
    return out
