"""Weighted unravelings: influence martingale and sign-bit trajectories.

Both methods jump with a strictly positive sampling rate r_a even where the
physical rate gamma_a is negative, and repair the mismatch with a scalar
weight per trajectory. The weighted ensemble mean E[w |psi><psi|] solves
the master equation; the weight itself is a martingale, E[w(t)] = 1.

The sign-bit flavor samples at r_a = |gamma_a|. Each negative-rate jump
then contributes the factor gamma/r = -1, so the jump part of the weight is
a bit s in {+1,-1}, which is what the trajectory record exposes. The
deterministic steps still rescale the weight magnitude; dropping that
rescaling would bias the estimator whenever rates are negative, so the
magnitude is carried alongside the sign rather than silently discarded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidRatePolicy, StepTooLarge
from .linalg import EPS, normalize, weighted_outer_sum
from .master_equation import MasterEquation
from .outcomes import Branch, Deterministic, Jump, select_branch
from .propagate import TimeGrid
from .rng import trajectory_uniforms

__all__ = [
    "WeightedTrajectory",
    "PlqtTrajectory",
    "default_rate_policy",
    "im_branches",
    "im_step",
    "plqt_branches",
    "plqt_step",
    "run_chunk_im",
    "run_chunk_plqt",
]

RatePolicy = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class WeightedTrajectory:
    state: np.ndarray
    weight: float


@dataclass(frozen=True)
class PlqtTrajectory:
    """State, sign bit, and the deterministic weight magnitude.

    ``sign`` is the +/-1 record the method is named for; ``magnitude``
    accumulates the no-jump factors. The estimator weight is their product.
    """

    state: np.ndarray
    sign: int
    magnitude: float

    @property
    def weight(self) -> float:
        return self.sign * self.magnitude


def default_rate_policy(r_min: float = 0.05) -> RatePolicy:
    """Sampling rates r_a = max(|gamma_a|, r_min)."""
    if r_min <= 0:
        raise InvalidRatePolicy(f"r_min must be positive, got {r_min}")

    def policy(gammas: np.ndarray) -> np.ndarray:
        return np.maximum(np.abs(gammas), r_min)

    return policy


def _sampling_rates(gammas: np.ndarray, r_policy: RatePolicy, t: float) -> np.ndarray:
    rs = np.asarray(r_policy(gammas), dtype=float)
    if rs.shape != gammas.shape or np.any(rs <= 0.0):
        raise InvalidRatePolicy(
            f"rate policy must return one strictly positive rate per channel, got {rs} at t={t:.6g}"
        )
    return rs


def im_branches(
    me: MasterEquation, wt: WeightedTrajectory, t: float, dt: float, r_policy: RatePolicy
) -> Sequence[Branch]:
    snap = me.at(t)
    rs = _sampling_rates(snap.gammas, r_policy, t)
    branches = []
    total = 0.0
    factor_det = 1.0
    for a in range(len(rs)):
        y = snap.ls[a] @ wt.state
        n2 = float(np.vdot(y, y).real)
        p = rs[a] * n2 * dt
        total += p
        factor_det -= (snap.gammas[a] - rs[a]) * n2 * dt
        target = normalize(y)[0] if p > 0.0 else wt.state
        branches.append(
            Branch(p, target, Jump(channel=a, probability=p), weight_factor=snap.gammas[a] / rs[a])
        )
    if total > 1.0:
        raise StepTooLarge(f"total sampling probability {total:.4g} > 1 at t={t:.6g}", time=t)
    drift = normalize(wt.state - 1j * dt * (snap.k @ wt.state))[0]
    branches.append(
        Branch(1.0 - total, drift, Deterministic(1.0 - total), weight_factor=factor_det)
    )
    return branches


def im_step(
    wt: WeightedTrajectory,
    me: MasterEquation,
    t: float,
    dt: float,
    r_policy: RatePolicy,
    u: float,
) -> WeightedTrajectory:
    b = select_branch(im_branches(me, wt, t, dt, r_policy), u)
    return WeightedTrajectory(b.state, wt.weight * b.weight_factor)


def plqt_branches(me: MasterEquation, wt: PlqtTrajectory, t: float, dt: float) -> Sequence[Branch]:
    """Jump menu at absolute rates; a negative-rate jump flips the sign."""
    snap = me.at(t)
    branches = []
    total = 0.0
    factor_det = 1.0
    for a in range(len(snap.gammas)):
        g = snap.gammas[a]
        y = snap.ls[a] @ wt.state
        n2 = float(np.vdot(y, y).real)
        p = abs(g) * n2 * dt
        total += p
        factor_det += (abs(g) - g) * n2 * dt
        target = normalize(y)[0] if p > 0.0 else wt.state
        sign = -1 if g < 0.0 else 1
        branches.append(Branch(p, target, Jump(channel=a, probability=p, sign=sign)))
    if total > 1.0:
        raise StepTooLarge(f"total |rate| jump probability {total:.4g} > 1 at t={t:.6g}", time=t)
    drift = normalize(wt.state - 1j * dt * (snap.k @ wt.state))[0]
    branches.append(
        Branch(1.0 - total, drift, Deterministic(1.0 - total), weight_factor=factor_det)
    )
    return branches


def plqt_step(wt: PlqtTrajectory, me: MasterEquation, t: float, dt: float, u: float) -> PlqtTrajectory:
    b = select_branch(plqt_branches(me, wt, t, dt), u)
    if isinstance(b.event, Jump):
        return PlqtTrajectory(b.state, wt.sign * b.event.sign, wt.magnitude)
    return PlqtTrajectory(b.state, wt.sign, wt.magnitude * b.weight_factor)


def _weighted_core(me, psi0, grid, idx0, n, seed, rates_for, jump_factor, det_factor):
    """Shared vectorized loop. ``rates_for(gammas) -> r``,
    ``jump_factor(gammas, r) -> per-channel weight factors``,
    ``det_factor(gammas, r, n2, dt) -> (n,) no-jump factors``."""
    d = me.dim
    steps = grid.n_steps
    times = grid.times()
    us = trajectory_uniforms(seed, idx0, n, steps)
    states = np.tile(np.asarray(psi0, dtype=complex), (n, 1))
    weights = np.ones(n)
    rho_sum = np.zeros((steps + 1, d, d), dtype=complex)
    rho_sum[0] = n * np.outer(psi0, np.conj(psi0))
    weight_sum = np.zeros(steps + 1)
    weight_sum[0] = float(n)
    m = len(me.channels)
    jump_total = np.zeros(m, dtype=np.int64)
    flip_steps: list[int] = []
    n_det = 0
    for k in range(steps):
        snap = me.at(times[k])
        try:
            rs = rates_for(snap.gammas, times[k])
        except InvalidRatePolicy as err:
            return rho_sum, _counts(jump_total, n_det), _diag(weight_sum, flip_steps), (err, k)
        ys = np.einsum("aij,nj->ani", snap.ls, states)
        n2 = np.einsum("ani,ani->an", ys, np.conj(ys)).real  # (m, n)
        probs = rs[:, None] * n2 * grid.dt
        total = probs.sum(axis=0)
        if np.any(total > 1.0):
            err = StepTooLarge(
                f"total sampling probability {total.max():.4g} > 1 at t={times[k]:.6g}",
                time=times[k],
            )
            return rho_sum, _counts(jump_total, n_det), _diag(weight_sum, flip_steps), (err, k)
        cum = np.cumsum(probs, axis=0)
        choice = (us[:, k][None, :] >= cum).sum(axis=0)
        drift = states - 1j * grid.dt * (states @ snap.k.T)
        drift /= np.linalg.norm(drift, axis=1)[:, None]
        det_rows = choice == m
        new_weights = weights.copy()
        new_weights[det_rows] *= det_factor(snap.gammas, rs, n2[:, det_rows], grid.dt)
        out = drift
        jf = jump_factor(snap.gammas, rs)
        flipped_now = np.zeros(n, dtype=bool)
        for a in range(m):
            rows = np.nonzero(choice == a)[0]
            if rows.size == 0:
                continue
            targets = ys[a, rows]
            out[rows] = targets / np.linalg.norm(targets, axis=1)[:, None]
            new_weights[rows] = weights[rows] * jf[a]
            jump_total[a] += rows.size
            if jf[a] < 0.0:
                flipped_now[rows] = True
        if np.any(flipped_now):
            flip_steps.append(k)
        n_det += int(det_rows.sum())
        states, weights = out, new_weights
        rho_sum[k + 1] = weighted_outer_sum(states, weights)
        weight_sum[k + 1] = weights.sum()
    return rho_sum, _counts(jump_total, n_det), _diag(weight_sum, flip_steps), None


def _counts(jump_total, n_det):
    return {
        "jump": int(jump_total.sum()),
        "jump_by_channel": jump_total.tolist(),
        "deterministic": n_det,
    }


def _diag(weight_sum, flip_steps):
    return {"weight_sum": weight_sum, "sign_flip_steps": flip_steps}


def run_chunk_im(me, psi0, grid, idx0, n, seed, r_policy: RatePolicy | None = None):
    """Influence-martingale trajectories; rho_sum rows are weighted projector sums."""
    policy = r_policy if r_policy is not None else default_rate_policy()

    def rates_for(gammas, t):
        return _sampling_rates(gammas, policy, t)

    def jump_factor(gammas, rs):
        return gammas / rs

    def det_factor(gammas, rs, n2_cols, dt):
        return 1.0 - ((gammas - rs)[:, None] * n2_cols * dt).sum(axis=0)

    return _weighted_core(me, psi0, grid, idx0, n, seed, rates_for, jump_factor, det_factor)


def run_chunk_plqt(me, psi0, grid, idx0, n, seed):
    """Sign-bit trajectories: sampling at |gamma|, sign flip on negative-rate jumps."""

    def rates_for(gammas, t):
        return np.abs(gammas)

    def jump_factor(gammas, rs):
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(rs > 0.0, gammas / np.where(rs > 0.0, rs, 1.0), 1.0)
        return out

    def det_factor(gammas, rs, n2_cols, dt):
        return 1.0 + ((rs - gammas)[:, None] * n2_cols * dt).sum(axis=0)

    return _weighted_core(me, psi0, grid, idx0, n, seed, rates_for, jump_factor, det_factor)
