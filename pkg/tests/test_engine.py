"""Ensemble driver: chunking, determinism, error bars, abort reporting."""

import numpy as np
import pytest

from unravel.engine import (
    METHOD_KINDS,
    error_vs_oracle,
    method_id,
    observable_series,
    run_ensemble,
    _chunk_sizes,
)
from unravel.errors import (
    DimensionMismatch,
    GridMismatch,
    MissingTargetState,
    NotHermitian,
    UnknownMethod,
)
from unravel.models import OBSERVABLES, PLUS, eternally_nm, spontaneous_emission
from unravel.propagate import TimeGrid, propagate
from unravel.rate_operators import (
    state_dependent_gauge,
    time_dependent_gauge,
    w_matching_gauge,
)


def test_method_id_validation():
    with pytest.raises(UnknownMethod):
        method_id("qsd")
    with pytest.raises(UnknownMethod):
        method_id("mcwf", gauge=time_dependent_gauge(np.eye(2)))
    with pytest.raises(UnknownMethod):
        method_id("rroqj")  # needs an explicit operator gauge
    with pytest.raises(UnknownMethod):
        method_id("rroqj", gauge=state_dependent_gauge(lambda t, psi: psi))
    assert method_id("rroqj", gauge=time_dependent_gauge(np.eye(2))).kind == "rroqj"


def test_method_id_display_names():
    assert method_id("mcwf").display == "mcwf"
    assert method_id("im").display == "im(r_min=0.05)"
    assert method_id("im", r_min=0.2).display == "im(r_min=0.2)"
    assert method_id("wtd", display="waiting").display == "waiting"
    assert method_id("psi_roqj").gauge.kind == "none"  # default gauge
    assert set(METHOD_KINDS) > {"mcwf", "nmqj", "tripled", "plqt"}


def test_chunk_sizes_partition():
    assert _chunk_sizes(10_000, 20) == [500] * 20
    assert _chunk_sizes(7, 20) == [1] * 7
    assert _chunk_sizes(23, 5) == [5, 5, 5, 4, 4]
    assert sum(_chunk_sizes(997, 20)) == 997


def test_rejects_empty_ensemble():
    me = spontaneous_emission()
    with pytest.raises(ValueError):
        run_ensemble(method_id("mcwf"), me, PLUS, TimeGrid(0.0, 0.1, 1e-2), 0, seed=1)


def test_single_trajectory_has_zero_stderr():
    me = spontaneous_emission()
    res = run_ensemble(method_id("mcwf"), me, PLUS, TimeGrid(0.0, 0.5, 1e-2), 1, seed=1)
    assert res.n_traj == 1
    assert np.all(res.stderr == 0.0)
    assert res.rho_batches.shape[0] == 1
    # single pure trajectory: every reconstruction is a projector
    assert np.trace(res.rho_hat[-1]).real == pytest.approx(1.0)


def test_thread_count_does_not_change_bits():
    me = spontaneous_emission()
    grid = TimeGrid(0.0, 1.0, 1e-2)
    serial = run_ensemble(method_id("mcwf"), me, PLUS, grid, 400, seed=5, threads=1)
    pooled = run_ensemble(method_id("mcwf"), me, PLUS, grid, 400, seed=5, threads=4)
    assert np.array_equal(serial.rho_hat, pooled.rho_hat)
    assert np.array_equal(serial.stderr, pooled.stderr)
    assert np.array_equal(serial.rho_batches, pooled.rho_batches)


def test_replica_method_threads_identical():
    from unravel.models import delayed_negative_phase_covariant

    me = delayed_negative_phase_covariant()
    grid = TimeGrid(0.0, 0.4, 1e-2)
    serial = run_ensemble(method_id("nmqj"), me, PLUS, grid, 2000, seed=3, threads=1)
    pooled = run_ensemble(method_id("nmqj"), me, PLUS, grid, 2000, seed=3, threads=3)
    assert np.array_equal(serial.rho_hat, pooled.rho_hat)
    assert "event_logs" in serial.diagnostics


def test_seed_changes_results_and_repeats():
    me = spontaneous_emission()
    grid = TimeGrid(0.0, 0.5, 1e-2)
    a = run_ensemble(method_id("mcwf"), me, PLUS, grid, 200, seed=1)
    b = run_ensemble(method_id("mcwf"), me, PLUS, grid, 200, seed=1)
    c = run_ensemble(method_id("mcwf"), me, PLUS, grid, 200, seed=2)
    assert np.array_equal(a.rho_hat, b.rho_hat)
    assert not np.array_equal(a.rho_hat, c.rho_hat)


def test_abort_carries_partial_series():
    me = eternally_nm()
    grid = TimeGrid(0.0, 1.0, 1e-2)
    with pytest.raises(MissingTargetState) as exc:
        run_ensemble(method_id("nmqj"), me, PLUS, grid, 200, seed=7)
    err = exc.value
    assert err.time == pytest.approx(grid.dt)  # fails on the second step
    partial = err.partial
    assert partial["n_traj"] == 200
    assert partial["rho_hat"].shape == (2, 2, 2)  # t = 0 and t = dt survived
    assert len(partial["times"]) == 2
    assert np.trace(partial["rho_hat"][0]).real == pytest.approx(1.0)


def test_observable_series_values_and_guards():
    me = spontaneous_emission()
    grid = TimeGrid(0.0, 1.0, 1e-2)
    res = run_ensemble(method_id("mcwf"), me, PLUS, grid, 800, seed=11)
    times, means, stderr = observable_series(res, OBSERVABLES["sz"])
    assert times.shape == means.shape == stderr.shape == (grid.n_steps + 1,)
    assert means[0] == pytest.approx(0.0, abs=1e-12)  # |+> has <sz> = 0
    assert stderr[0] == 0.0  # every batch starts at the same state
    assert np.all(np.isfinite(stderr))
    with pytest.raises(DimensionMismatch):
        observable_series(res, np.eye(3))
    with pytest.raises(NotHermitian):
        observable_series(res, np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_oracle_comparison_requires_matching_grid():
    me = spontaneous_emission()
    grid = TimeGrid(0.0, 1.0, 1e-2)
    res = run_ensemble(method_id("mcwf"), me, PLUS, grid, 2000, seed=13)
    oracle = propagate(me, np.outer(PLUS, PLUS.conj()), grid)
    times, dists = error_vs_oracle(res, oracle)
    assert dists.shape == (grid.n_steps + 1,)
    assert dists[0] < 1e-12
    assert dists.max() < 0.08
    other = propagate(me, np.outer(PLUS, PLUS.conj()), TimeGrid(0.0, 0.5, 1e-2))
    with pytest.raises(GridMismatch):
        error_vs_oracle(res, other)


def test_stderr_shrinks_with_ensemble_size():
    me = spontaneous_emission()
    grid = TimeGrid(0.0, 1.0, 2e-2)
    small = run_ensemble(method_id("mcwf"), me, PLUS, grid, 400, seed=17)
    large = run_ensemble(method_id("mcwf"), me, PLUS, grid, 6400, seed=17)
    ratio = small.stderr[1:].mean() / large.stderr[1:].mean()
    assert ratio > 2.5  # expect ~4 for a 16x ensemble


def test_weighted_diagnostics_surface_through_engine():
    me = eternally_nm()
    grid = TimeGrid(0.0, 1.0, 1e-2)
    res = run_ensemble(method_id("im"), me, PLUS, grid, 400, seed=19)
    wsum = res.diagnostics["weight_sum"]
    assert wsum.shape == (grid.n_steps + 1,)
    assert wsum[0] == pytest.approx(400.0)
    plqt = run_ensemble(method_id("plqt"), me, PLUS, grid, 400, seed=19)
    flips = plqt.diagnostics["sign_flip_steps"]
    assert flips == sorted(flips)
    assert plqt.event_counts["jump"] > 0
