"""Spectral split of hermitian operators into weighted state differences."""

import numpy as np
import pytest

from unravel.errors import NotHermitian
from unravel.models import SIGMA_Z
from unravel.opd import opd_decompose


def test_sigma_z_splits_into_basis_projectors():
    mu_p, s_p, mu_m, s_m = opd_decompose(SIGMA_Z)
    assert mu_p == pytest.approx(1.0)
    assert mu_m == pytest.approx(1.0)
    assert np.allclose(s_p, np.diag([0.0, 1.0]))  # sigma_z = diag(-1, 1)
    assert np.allclose(s_m, np.diag([1.0, 0.0]))


def test_psd_input_has_no_negative_part():
    q = np.diag([0.5, 2.5])
    mu_p, s_p, mu_m, s_m = opd_decompose(q)
    assert mu_p == pytest.approx(3.0)
    assert np.allclose(s_p, q / 3.0)
    assert mu_m == 0.0 and s_m is None


def test_zero_input_decomposes_to_nothing():
    mu_p, s_p, mu_m, s_m = opd_decompose(np.zeros((3, 3)))
    assert (mu_p, s_p, mu_m, s_m) == (0.0, None, 0.0, None)


def test_round_trip_and_orthogonality():
    rng = np.random.default_rng(41)
    for d in range(2, 9):
        raw = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        q = raw + raw.conj().T
        mu_p, s_p, mu_m, s_m = opd_decompose(q)
        back = np.zeros((d, d), complex)
        if s_p is not None:
            back += mu_p * s_p
            assert np.trace(s_p).real == pytest.approx(1.0)
            assert np.min(np.linalg.eigvalsh(s_p)) > -1e-12
        if s_m is not None:
            back -= mu_m * s_m
            assert np.trace(s_m).real == pytest.approx(1.0)
            assert np.min(np.linalg.eigvalsh(s_m)) > -1e-12
        assert np.allclose(back, q, atol=1e-10)
        if s_p is not None and s_m is not None:
            assert np.max(np.abs(s_p @ s_m)) < 1e-12


def test_non_hermitian_rejected():
    with pytest.raises(NotHermitian):
        opd_decompose(np.array([[0.0, 1.0], [0.0, 0.0]]))
