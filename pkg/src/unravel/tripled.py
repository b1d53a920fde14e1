"""Embedding of a signed-rate master equation into a Markovian one.

Each dissipator is supplied as a factor pair (C, D) acting in the sandwich
C rho D^dag + D rho C^dag - {D^dag C + C^dag D, rho}/2. Adjoining a
three-level auxiliary degree of freedom turns the pair into four ordinary
rate-one jump operators on dimension 3d, at the cost of a completion
operator Omega whose square fills a * identity - (C-D)^dag (C-D). The
physical state sits in an off-diagonal auxiliary block that shrinks like
exp(-int a dt), so the extraction divides by an exponentially small trace.
That division is the method's known instability: it surfaces here as
DegenerateBlock or as a blown-up ensemble error, never silently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateBlock
from .linalg import hermitize, psd_sqrt
from .master_equation import MasterEquation, master_equation
from .propagate import TimeGrid
from . import mcwf

__all__ = [
    "JumpPair",
    "TripledEmbedding",
    "pairs_from_master_equation",
    "tripled_embed",
    "tripled_extract",
    "embedded_master_equation",
    "run_chunk",
]

Matrix = Callable[[float], np.ndarray]

_BLOCK_TRACE_FLOOR = 1e-12


@dataclass(frozen=True)
class JumpPair:
    c: Matrix
    d: Matrix
    label: str = ""


def pairs_from_master_equation(me: MasterEquation) -> tuple[JumpPair, ...]:
    """Split each channel gamma L . L^dag into the symmetric pair
    C = sqrt(|gamma|/2) L, D = sign(gamma) sqrt(|gamma|/2) L, so that
    C rho D^dag + D rho C^dag = gamma L rho L^dag for either sign."""

    def make(i: int) -> JumpPair:
        def c(t: float) -> np.ndarray:
            snap = me.at(t)
            return np.sqrt(0.5 * abs(snap.gammas[i])) * snap.ls[i]

        def d(t: float) -> np.ndarray:
            snap = me.at(t)
            g = snap.gammas[i]
            return np.copysign(1.0, g) * np.sqrt(0.5 * abs(g)) * snap.ls[i]

        return JumpPair(c, d, me.channels[i].label)

    return tuple(make(i) for i in range(len(me.channels)))


@dataclass(frozen=True)
class TripledEmbedding:
    base_dim: int
    hamiltonian3: Matrix
    jumps3: tuple[Matrix, ...]  # four per factor pair, all rate 1
    a: Callable[[float], float]  # total completion level, sets the block decay


def _aux_proj(i: int, j: int) -> np.ndarray:
    p = np.zeros((3, 3))
    p[i, j] = 1.0
    return p


def default_completion_level(pair: JumpPair) -> Callable[[float], float]:
    """Smallest level keeping a*1 - (C-D)^dag (C-D) positive semidefinite:
    the squared spectral norm of C - D."""

    def a(t: float) -> float:
        return float(np.linalg.norm(pair.c(t) - pair.d(t), ord=2) ** 2)

    return a


def _pair_jumps(pair: JumpPair, a_fn: Callable[[float], float]) -> list[Matrix]:
    def omega(t: float) -> np.ndarray:
        diff = pair.c(t) - pair.d(t)
        return psd_sqrt(a_fn(t) * np.eye(diff.shape[0]) - hermitize(diff.conj().T @ diff))

    def j1(t: float) -> np.ndarray:
        return np.kron(pair.c(t), _aux_proj(0, 0)) + np.kron(pair.d(t), _aux_proj(1, 1))

    def j2(t: float) -> np.ndarray:
        return np.kron(pair.d(t), _aux_proj(0, 0)) + np.kron(pair.c(t), _aux_proj(1, 1))

    def j3(t: float) -> np.ndarray:
        return np.kron(omega(t), _aux_proj(2, 0))

    def j4(t: float) -> np.ndarray:
        return np.kron(omega(t), _aux_proj(2, 1))

    return [j1, j2, j3, j4]


def tripled_embed(
    hamiltonian: Matrix,
    pairs: tuple[JumpPair, ...],
    dim: int,
    rho0: np.ndarray,
    a: Callable[[float], float] | tuple | None = None,
) -> tuple[TripledEmbedding, np.ndarray]:
    """Build the 3d-dimensional rate-one embedding and its initial state
    W0 = rho0 (x) |chi><chi| with chi = (aux0 + aux1)/sqrt(2).

    ``a`` overrides the completion level, one callable per pair (a single
    callable is broadcast). Raises NotPSD at evaluation time if it is too
    small for Omega to exist.
    """
    if a is None:
        a_fns = tuple(default_completion_level(p) for p in pairs)
    elif callable(a):
        a_fns = tuple(a for _ in pairs)
    else:
        a_fns = tuple(a)
        if len(a_fns) != len(pairs):
            raise ValueError(f"{len(a_fns)} completion levels for {len(pairs)} pairs")

    def h3(t: float) -> np.ndarray:
        return np.kron(hamiltonian(t), np.eye(3))

    jumps: list[Matrix] = []
    for pair, a_fn in zip(pairs, a_fns):
        jumps.extend(_pair_jumps(pair, a_fn))

    def a_total(t: float) -> float:
        return float(sum(f(t) for f in a_fns))

    chi = np.zeros(3)
    chi[0] = chi[1] = 1.0 / np.sqrt(2.0)
    w0 = np.kron(np.asarray(rho0, dtype=complex), np.outer(chi, chi))
    return TripledEmbedding(dim, h3, tuple(jumps), a_total), w0


def tripled_extract(w: np.ndarray, block_floor: float = _BLOCK_TRACE_FLOOR) -> np.ndarray:
    """Read the physical state out of the (aux0, aux1) block of W."""
    d3 = w.shape[0]
    d = d3 // 3
    block = w.reshape(d, 3, d, 3)[:, 0, :, 1]
    tr = np.trace(block)
    if abs(tr) <= block_floor:
        raise DegenerateBlock(
            f"auxiliary block trace {abs(tr):.3e} is numerically zero; "
            "the embedding has decayed past the point of extraction"
        )
    return block / tr


def embedded_master_equation(emb: TripledEmbedding) -> MasterEquation:
    """The embedding as an ordinary trace-preserving rate-one GKSL system."""
    channels = [(j, 1.0, f"embedded_{i}") for i, j in enumerate(emb.jumps3)]
    return master_equation(3 * emb.base_dim, emb.hamiltonian3, channels)


def run_chunk(
    me: MasterEquation,
    psi0: np.ndarray,
    grid: TimeGrid,
    idx0: int,
    n: int,
    seed: int,
):
    """Plain jump trajectories of the embedded equation from psi0 (x) chi.

    rho_sum holds 3d x 3d projector sums over W-space; extraction happens
    at reconstruction time so batch statistics see the same division noise
    a user would.
    """
    pairs = pairs_from_master_equation(me)
    rho0 = np.outer(psi0, np.conj(psi0))
    emb, _w0 = tripled_embed(lambda t, _me=me: _me.at(t).h, pairs, me.dim, rho0)
    chi = np.zeros(3)
    chi[0] = chi[1] = 1.0 / np.sqrt(2.0)
    theta0 = np.kron(np.asarray(psi0, dtype=complex), chi)
    return mcwf.run_chunk(embedded_master_equation(emb), theta0, grid, idx0, n, seed)
