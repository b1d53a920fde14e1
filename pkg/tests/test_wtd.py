"""Waiting-time sampling: exact crossing times, channel selection, ensembles.

The survival norm of an undriven decaying qubit is known in closed form,
which pins the bisected jump times to high precision.
"""

import numpy as np
import pytest

from unravel.errors import NegativeRate, NoJumpPossible
from unravel.linalg import trace_distance
from unravel.master_equation import master_equation
from unravel.models import KET0, KET1, SIGMA_MINUS, SIGMA_Z, eternally_nm, spontaneous_emission
from unravel.propagate import TimeGrid, propagate
from unravel.wtd import first_jump_times, run_chunk, wtd_next_jump, wtd_select_channel


def test_crossing_time_matches_closed_form():
    # ||psi~(t)||^2 = e^{-gamma t} from |1>, so t1 = -ln(x)/gamma
    me = spontaneous_emission(gamma=1.0)
    t1, psi1, jumped = wtd_next_jump(me, KET1, 0.0, x=0.3, t_cap=5.0)
    assert jumped
    assert t1 == pytest.approx(-np.log(0.3), abs=1e-6)
    assert abs(np.vdot(psi1, KET1)) == pytest.approx(1.0)  # pre-jump state


def test_no_crossing_before_cap():
    me = spontaneous_emission(gamma=1.0)
    t1, _psi, jumped = wtd_next_jump(me, KET1, 0.0, x=0.2, t_cap=1.0)
    assert not jumped
    assert t1 == 1.0


def test_threshold_domain():
    me = spontaneous_emission(gamma=1.0)
    for bad in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            wtd_next_jump(me, KET1, 0.0, x=bad, t_cap=1.0)


def test_channel_selection_frozen_weights():
    me = master_equation(
        2, np.zeros((2, 2)), [(SIGMA_MINUS, 1.0, "down"), (SIGMA_Z, 2.0, "z")]
    )
    # from |1>: fluxes (1, 2), so P(channel 0) = 1/3
    assert wtd_select_channel(me, KET1, 0.0, u=0.2) == 0
    assert wtd_select_channel(me, KET1, 0.0, u=0.5) == 1
    assert wtd_select_channel(me, KET1, 0.0, u=0.99) == 1


def test_no_flux_raises():
    me = spontaneous_emission(gamma=1.0)
    with pytest.raises(NoJumpPossible):
        wtd_select_channel(me, KET0, 0.0, u=0.5)


def test_negative_rate_refused():
    me = eternally_nm()
    with pytest.raises(NegativeRate):
        wtd_next_jump(me, KET1, 0.5, x=0.5, t_cap=2.0)


def test_chunk_reproduces_master_equation():
    me = spontaneous_emission(gamma=1.0)
    grid = TimeGrid(0.0, 2.0, 0.05)
    n = 400
    rho_sum, counts, _diag, abort = run_chunk(me, KET1, grid, 0, n, seed=12)
    assert abort is None
    assert counts["jump"] > 0
    oracle = propagate(me, np.outer(KET1, KET1.conj()), grid)
    dists = [trace_distance(rho_sum[k] / n, oracle.states[k]) for k in range(grid.n_steps + 1)]
    assert max(dists) < 0.1


def test_first_jump_times_match_exponential():
    me = spontaneous_emission(gamma=1.0)
    grid = TimeGrid(0.0, 10.0, 1e-2)
    samples = first_jump_times(me, KET1, grid, n=2000, seed=4)
    finite = samples[np.isfinite(samples)]
    assert len(finite) > 1900
    scipy_stats = pytest.importorskip("scipy.stats")
    ks = scipy_stats.kstest(finite, lambda t: 1.0 - np.exp(-t)).statistic
    assert ks < 0.05


def test_first_jump_times_continuous_not_grid_locked():
    me = spontaneous_emission(gamma=1.0)
    grid = TimeGrid(0.0, 5.0, 1e-2)
    samples = first_jump_times(me, KET1, grid, n=200, seed=9)
    finite = samples[np.isfinite(samples)]
    off_grid = np.abs(finite / grid.dt - np.round(finite / grid.dt)) > 1e-6
    assert off_grid.mean() > 0.95
