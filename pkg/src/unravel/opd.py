"""Orthogonal decomposition of a hermitian matrix into a weighted
difference of density matrices: Q = mu_plus * S_plus - mu_minus * S_minus
with S_plus S_minus = 0. The pieces are the positive and negative spectral
parts of Q, normalized to unit trace."""

from __future__ import annotations

import numpy as np

from .linalg import EPS, hermitize, require_hermitian

__all__ = ["opd_decompose"]


def opd_decompose(q: np.ndarray):
    require_hermitian(q, what="decomposition input")
    vals, vecs = np.linalg.eigh(hermitize(np.asarray(q, dtype=complex)))
    pos = np.maximum(vals, 0.0)
    neg = np.maximum(-vals, 0.0)
    mu_plus = float(pos.sum())
    mu_minus = float(neg.sum())
    q_plus = (vecs * pos) @ vecs.conj().T
    q_minus = (vecs * neg) @ vecs.conj().T
    if mu_plus <= EPS:
        mu_plus, sigma_plus = 0.0, None
    else:
        sigma_plus = q_plus / mu_plus
    if mu_minus <= EPS:
        mu_minus, sigma_minus = 0.0, None
    else:
        sigma_minus = q_minus / mu_minus
    return mu_plus, sigma_plus, mu_minus, sigma_minus
