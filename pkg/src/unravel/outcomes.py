"""Step outcomes, event records and branch enumeration.

A "branch" is one possible result of a single time step together with its
exact probability; enumerating all branches of a stepper gives the one-step
expectation value E[w |psi'><psi'|] in closed form, which the tests compare
against rho + L[rho] dt. Weighted methods carry a multiplicative weight
factor per branch; the cloning method carries a copy count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "Deterministic",
    "Jump",
    "ReverseJump",
    "Clone",
    "Destroy",
    "StepOutcome",
    "Branch",
    "select_branch",
]


@dataclass(frozen=True)
class Deterministic:
    probability: float = float("nan")


@dataclass(frozen=True)
class Jump:
    channel: int                      # channel index or eigenbranch index
    probability: float = float("nan")
    eigenvalue: float | None = None   # rate-operator methods record lambda_nu
    sign: int = 1                     # PLQT: sign of the rate at the jump


@dataclass(frozen=True)
class ReverseJump:
    source: int
    target: int
    channel: int
    probability: float = float("nan")


@dataclass(frozen=True)
class Clone:
    probability: float = float("nan")


@dataclass(frozen=True)
class Destroy:
    probability: float = float("nan")


@dataclass(frozen=True)
class StepOutcome:
    state: np.ndarray
    event: Deterministic | Jump | ReverseJump | Clone | Destroy


class Branch(NamedTuple):
    probability: float
    state: np.ndarray
    event: object
    weight_factor: float = 1.0
    copies: int = 1


def select_branch(branches: list[Branch], u: float) -> Branch:
    """Pick the branch whose cumulative probability interval contains u.

    Branch order is part of each method's contract (jump branches first,
    deterministic last); the last branch absorbs any floating-point slack.
    """
    c = 0.0
    for b in branches[:-1]:
        c += b.probability
        if u < c:
            return b
    return branches[-1]
