"""Small dense linear algebra helpers with pinned conventions.

All eigendecompositions in the package go through :func:`eigh` or its batched
variant so that ordering, phases and degeneracy handling are identical
everywhere: eigenvalues descending, each eigenvector's largest-magnitude
component made real and nonnegative, exact eigenvalue ties broken by
lexicographic comparison of the phase-fixed vectors. Vectorized matrix stacks
use the last two axes; ``vec``/``unvec`` are column-stacking (Fortran order).
"""

from __future__ import annotations

import numpy as np

from .errors import NotHermitian, NotPSD, ZeroVector

__all__ = [
    "EPS",
    "HERM_ATOL",
    "require_hermitian",
    "hermitize",
    "eigh",
    "eigh_batched",
    "eigvalsh_min",
    "normalize",
    "trace_distance",
    "psd_sqrt",
    "haar_state",
    "require_density",
    "orthonormal_complement",
    "complement_batch",
    "phase_fix_columns",
    "weighted_outer_sum",
    "vec",
    "unvec",
]

EPS = 1e-12          # sign / clipping threshold for probabilities and rates
HERM_ATOL = 1e-9     # hermiticity and PSD tolerance for d x d operators


def hermitize(m: np.ndarray) -> np.ndarray:
    """(m + m^dag)/2, batched over leading axes."""
    return 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))


def require_hermitian(m: np.ndarray, atol: float = HERM_ATOL, what: str = "matrix") -> np.ndarray:
    dev = np.max(np.abs(m - np.conj(np.swapaxes(m, -1, -2))))
    if dev > atol:
        raise NotHermitian(f"{what} deviates from hermiticity by {dev:.3e} (atol {atol:.1e})")
    return m


def _phase_fix(vecs: np.ndarray) -> np.ndarray:
    # vecs: (..., d, d), eigenvectors in columns. Largest-|.| component of each
    # column is rotated to the positive real axis.
    mags = np.abs(vecs)
    idx = np.argmax(mags, axis=-2)  # (..., d) row index per column
    lead = np.take_along_axis(vecs, idx[..., None, :], axis=-2)[..., 0, :]
    absl = np.abs(lead)
    phase = np.where(absl > 0.0, lead / np.where(absl > 0.0, absl, 1.0), 1.0)
    return vecs * np.conj(phase)[..., None, :]


def phase_fix_columns(vecs: np.ndarray) -> np.ndarray:
    """Public name for the column phase convention."""
    return _phase_fix(vecs)


def _vec_key(v: np.ndarray) -> tuple:
    return tuple(x for c in v for x in (c.real, c.imag))


def _break_ties(vals: np.ndarray, vecs: np.ndarray) -> None:
    # In-place, single matrix. Runs of exactly equal eigenvalues are reordered
    # by lexicographic (real, imag) comparison of the phase-fixed columns.
    d = vals.shape[0]
    i = 0
    while i < d - 1:
        j = i + 1
        while j < d and vals[j] == vals[i]:
            j += 1
        if j - i > 1:
            order = sorted(range(i, j), key=lambda k: _vec_key(vecs[:, k]))
            vecs[:, i:j] = vecs[:, order]
        i = j


def _lex_greater(k0: np.ndarray, k1: np.ndarray) -> np.ndarray:
    # Row-wise lexicographic k0 > k1 on (n, c) real key arrays.
    gt = np.zeros(k0.shape[0], dtype=bool)
    undecided = np.ones(k0.shape[0], dtype=bool)
    for c in range(k0.shape[1]):
        gt |= undecided & (k0[:, c] > k1[:, c])
        undecided &= k0[:, c] == k1[:, c]
    return gt


def eigh_batched(ms: np.ndarray, atol: float = HERM_ATOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a stack of hermitian matrices, pinned ordering.

    Returns ``(vals, vecs)`` with eigenvalues descending along the last axis
    and eigenvectors in the columns of ``vecs``.
    """
    ms = np.asarray(ms)
    require_hermitian(ms, atol)
    vals, vecs = np.linalg.eigh(hermitize(ms))
    vals = vals[..., ::-1].copy()
    vecs = vecs[..., ::-1].copy()
    vecs = _phase_fix(vecs)
    ties = np.any(np.diff(vals, axis=-1) == 0.0, axis=-1)
    if np.any(ties):
        d = vals.shape[-1]
        flat_vals = vals.reshape(-1, d)
        flat_vecs = vecs.reshape(-1, d, d)
        flat_ties = ties.reshape(-1)
        if d == 2:
            # Degenerate 2x2 matrices are the hot case (rate operators
            # proportional to the identity); swap columns vectorized.
            k0 = np.stack([flat_vecs[:, 0, 0].real, flat_vecs[:, 0, 0].imag,
                           flat_vecs[:, 1, 0].real, flat_vecs[:, 1, 0].imag], axis=1)
            k1 = np.stack([flat_vecs[:, 0, 1].real, flat_vecs[:, 0, 1].imag,
                           flat_vecs[:, 1, 1].real, flat_vecs[:, 1, 1].imag], axis=1)
            swap = flat_ties & _lex_greater(k0, k1)
            if np.any(swap):
                flat_vecs[swap] = flat_vecs[swap][:, :, ::-1]
        else:
            for k in np.nonzero(flat_ties)[0]:
                _break_ties(flat_vals[k], flat_vecs[k])
    return vals, vecs


def eigh(m: np.ndarray, atol: float = HERM_ATOL) -> tuple[np.ndarray, np.ndarray]:
    """Single-matrix version of :func:`eigh_batched`."""
    vals, vecs = eigh_batched(np.asarray(m)[None, ...], atol)
    return vals[0], vecs[0]


def eigvalsh_min(ms: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of each matrix in a hermitian stack."""
    return np.linalg.eigvalsh(hermitize(ms))[..., 0]


def normalize(v: np.ndarray) -> tuple[np.ndarray, float]:
    """Unit vector and the pre-normalization norm. Raises on numerical zero."""
    n = float(np.linalg.norm(v))
    if n <= 1e-14:
        raise ZeroVector(f"cannot normalize vector with norm {n:.3e}")
    return v / n, n


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """T(a, b) = (1/2) ||a - b||_1 for hermitian a, b."""
    diff = np.asarray(a) - np.asarray(b)
    require_hermitian(diff, what="difference of operators")
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(hermitize(diff)))))


def psd_sqrt(m: np.ndarray, atol: float = HERM_ATOL) -> np.ndarray:
    """Principal square root of a PSD matrix; NotPSD below -atol."""
    vals, vecs = eigh(m, atol)
    if vals[-1] < -atol:
        raise NotPSD(f"matrix has eigenvalue {vals[-1]:.3e} < -{atol:.1e}")
    root = np.sqrt(np.clip(vals, 0.0, None))
    return (vecs * root) @ np.conj(vecs.T)


def haar_state(d: int, gen: np.random.Generator) -> np.ndarray:
    """Haar-random pure state of dimension d."""
    z = gen.standard_normal(d) + 1j * gen.standard_normal(d)
    return normalize(z)[0]


def require_density(rho: np.ndarray, atol: float = HERM_ATOL) -> np.ndarray:
    """Validate a density matrix: hermitian, unit trace, PSD within atol."""
    rho = np.asarray(rho, dtype=complex)
    require_hermitian(rho, atol, "density matrix")
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > atol:
        raise NotPSD(f"density matrix trace {tr} deviates from 1")
    lo = float(np.linalg.eigvalsh(hermitize(rho))[0])
    if lo < -atol:
        raise NotPSD(f"density matrix eigenvalue {lo:.3e} < -{atol:.1e}")
    return rho


def orthonormal_complement(psi: np.ndarray) -> np.ndarray:
    """Columns form an orthonormal basis of span{psi}^perp (shape (d, d-1)).

    Householder construction; deterministic in psi including the phase
    convention, so batched callers can rely on reproducible bases.
    """
    psi = np.asarray(psi, dtype=complex)
    d = psi.shape[0]
    a = psi[0]
    phase = a / abs(a) if abs(a) > 1e-14 else 1.0
    w = psi.copy()
    w[0] += phase
    h = np.eye(d, dtype=complex) - 2.0 * np.outer(w, np.conj(w)) / float(np.vdot(w, w).real)
    return h[:, 1:]


def complement_batch(states: np.ndarray) -> np.ndarray:
    """Batched :func:`orthonormal_complement`: (n, d) -> (n, d, d-1)."""
    states = np.asarray(states, dtype=complex)
    n, d = states.shape
    a = states[:, 0]
    absa = np.abs(a)
    phase = np.where(absa > 1e-14, a / np.where(absa > 1e-14, absa, 1.0), 1.0)
    w = states.copy()
    w[:, 0] += phase
    wn2 = np.einsum("ni,ni->n", np.conj(w), w).real
    h = np.eye(d, dtype=complex)[None] - 2.0 * np.einsum("ni,nj->nij", w, np.conj(w)) / wn2[:, None, None]
    return h[:, :, 1:]


def weighted_outer_sum(states: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """sum_k w_k |psi_k><psi_k| over the rows of ``states``."""
    if weights is None:
        return np.einsum("ni,nj->ij", states, np.conj(states))
    return np.einsum("n,ni,nj->ij", weights, states, np.conj(states))


def vec(m: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(m).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int) -> np.ndarray:
    return np.asarray(v).reshape(d, d, order="F")
