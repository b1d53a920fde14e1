"""Quantitative acceptance gate for the whole package.

One test per criterion, in order. Every test prints a single verdict line
(run with -s to see the full scorecard) carrying the measured numbers next
to the pinned tolerance, then asserts. Tolerances are fixed here and are
not to be loosened: a method whose estimator variance genuinely exceeds a
bound fails red, with the measured value on the line.
"""

import time

import numpy as np
import pytest
from scipy.stats import kstest

from branch_tools import one_step_cases, sample_points
from unravel.cli import main as cli_main
from unravel.divisibility import (
    divisibility_scan,
    is_p_divisible_at,
    min_rate_at,
    phase_covariant_p_divisible_at,
)
from unravel.engine import error_vs_oracle, method_id, run_ensemble
from unravel.errors import DegenerateBlock, MissingTargetState, UnravelError
from unravel.linalg import trace_distance
from unravel.mcwf import first_jump_times as mcwf_first_jump_times
from unravel.models import (
    KET1,
    PLUS,
    delayed_negative_phase_covariant,
    eternally_nm,
    non_p_divisible,
    non_p_divisible_rates,
    phase_covariant,
    phase_covariant_rates,
    spontaneous_emission,
)
from unravel.propagate import TimeGrid, propagate
from unravel.rate_operators import time_dependent_gauge
from unravel.tripled import (
    JumpPair,
    embedded_master_equation,
    tripled_embed,
    tripled_extract,
)
from unravel.wtd import first_jump_times as wtd_first_jump_times

N_TRAJ = 10_000
SEED = 42
RHO_PLUS = np.outer(PLUS, PLUS.conj())


def _verdict(num: int, ok: bool, detail: str) -> None:
    print(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="module")
def enm_runs():
    """The five weighted/gauged benchmark runs on the eternally non-Markovian
    model, shared between the distance criterion and the weight criterion."""
    me = eternally_nm()
    grid = TimeGrid(0.0, 5.0, 1e-2)
    oracle = propagate(me, RHO_PLUS, grid)
    gz_gauge = time_dependent_gauge(lambda t: -0.5 * np.tanh(t) * np.eye(2))
    methods = {
        "wroqj": method_id("wroqj"),
        "psi_roqj": method_id("psi_roqj", gauge=gz_gauge),
        "doubled": method_id("doubled"),
        "im": method_id("im"),
        "plqt": method_id("plqt"),
    }
    runs = {}
    for name, mid in methods.items():
        res = run_ensemble(mid, me, PLUS, grid, N_TRAJ, seed=SEED)
        runs[name] = (res, error_vs_oracle(res, oracle)[1])
    return me, grid, oracle, runs


def test_criterion_01_oracle_decay():
    me = spontaneous_emission(gamma=1.0)
    grid = TimeGrid(0.0, 5.0, 1e-2)
    t0 = time.perf_counter()
    oracle = propagate(me, np.outer(KET1, KET1.conj()), grid)
    wall = time.perf_counter() - t0
    worst = float(np.max(np.abs(oracle.states[:, 1, 1].real - np.exp(-grid.times()))))
    ok = worst <= 1e-6 and wall < 1.0
    _verdict(1, ok, f"max |rho_11 - exp(-t)| = {worst:.3g} (tol 1e-6), wall {wall:.3f} s (< 1 s)")
    assert worst <= 1e-6
    assert wall < 1.0


def test_criterion_02_eternally_nm_benchmark(enm_runs):
    me, grid, oracle, runs = enm_runs
    sups = {name: float(dists.max()) for name, (_, dists) in runs.items()}
    total_s = sum(res.wall_clock_ms for res, _ in runs.values()) / 1e3

    with pytest.raises(MissingTargetState) as exc:
        run_ensemble(method_id("nmqj"), me, PLUS, grid, N_TRAJ, seed=SEED)
    nmqj_ok = exc.value.time == pytest.approx(grid.dt)

    # the auxiliary-level embedding is exempt from the distance bound on
    # this model and must instead show its instability signature
    try:
        res3 = run_ensemble(method_id("tripled"), me, PLUS, grid, N_TRAJ, seed=SEED)
        tripled_dist = float(error_vs_oracle(res3, oracle)[1].max())
        tripled_signal = tripled_dist > 0.1
        tripled_note = f"tripled distance {tripled_dist:.3g} > 0.1"
    except DegenerateBlock:
        tripled_signal = True
        tripled_note = "tripled DegenerateBlock"

    sup_text = " ".join(f"{k}={v:.4f}" for k, v in sups.items())
    ok = max(sups.values()) <= 0.03 and total_s < 120.0 and nmqj_ok and tripled_signal
    _verdict(
        2,
        ok,
        f"sup TD [{sup_text}] (bound 0.03); combined {total_s:.1f} s (< 120);"
        f" nmqj abort at t={exc.value.time:g}; {tripled_note}",
    )
    assert nmqj_ok
    assert tripled_signal, tripled_note
    assert total_s < 120.0
    assert max(sups.values()) <= 0.03, f"sup trace distances: {sup_text}"


def test_criterion_03_non_p_benchmark():
    me = non_p_divisible(0.25)
    rates = non_p_divisible_rates(0.25)
    grid = TimeGrid(0.0, 5.0, 1e-2)
    times = grid.times()
    oracle = propagate(me, RHO_PLUS, grid)
    viol = [
        t
        for t in times
        if not phase_covariant_p_divisible_at(
            rates.gamma_plus(t), rates.gamma_minus(t), rates.gamma_z(t)
        )
    ]
    t_viol = viol[0]

    sups = {}
    for name in ("psi_roqj", "im", "plqt"):
        res = run_ensemble(method_id(name), me, PLUS, grid, N_TRAJ, seed=SEED)
        sups[name] = float(error_vs_oracle(res, oracle)[1].max())

    # the vector-pair embedding only has to hold up to the first
    # P-violation; past it, visible instability is the accepted outcome
    try:
        res_d = run_ensemble(method_id("doubled"), me, PLUS, grid, N_TRAJ, seed=SEED)
        dists_d = error_vs_oracle(res_d, oracle)[1]
        pre = float(dists_d[times <= t_viol].max())
        post = float(dists_d[times > t_viol].max())
        doubled_ok = pre <= 0.03 or post > 0.1
        doubled_note = f"doubled pre/post violation {pre:.4f}/{post:.4f}"
    except UnravelError as err:
        doubled_ok = err.time is not None and err.time > t_viol
        doubled_note = f"doubled aborted {type(err).__name__} at t={err.time}"

    sup_text = " ".join(f"{k}={v:.4f}" for k, v in sups.items())
    ok = max(sups.values()) <= 0.03 and doubled_ok
    _verdict(3, ok, f"sup TD [{sup_text}] (bound 0.03); first P violation t={t_viol:g}; {doubled_note}")
    assert doubled_ok, doubled_note
    assert max(sups.values()) <= 0.03, f"sup trace distances: {sup_text}"


def test_criterion_04_nmqj_delayed_negative():
    me = delayed_negative_phase_covariant()
    grid = TimeGrid(0.0, 3.0, 1e-2)
    oracle = propagate(me, RHO_PLUS, grid)
    res = run_ensemble(method_id("nmqj"), me, PLUS, grid, N_TRAJ, seed=SEED)
    sup = float(error_vs_oracle(res, oracle)[1].max())

    unmatched = 0
    reverse_total = 0
    for log in res.diagnostics["event_logs"]:
        seen = set()
        for step, kind, a, b, ch in log:
            if kind == "direct":
                seen.add((a, b, ch))  # parent, child, channel
            else:
                reverse_total += 1
                if (b, a, ch) not in seen:  # reverse a->b must undo b->a
                    unmatched += 1
    reverse_ok = reverse_total > 0 and unmatched == 0

    ok = sup <= 0.03 and reverse_ok
    _verdict(
        4,
        ok,
        f"sup TD {sup:.4f} (bound 0.03); {reverse_total} reverse jumps,"
        f" {unmatched} without a prior matching direct jump",
    )
    assert reverse_ok, f"{unmatched} of {reverse_total} reverse jumps lack a prior direct jump"
    assert sup <= 0.03, f"sup trace distance {sup:.4f}"


def test_criterion_05_tripled_on_cp_model():
    gamma = 1.0
    sm = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
    pair = JumpPair(lambda t: np.sqrt(gamma) * sm, lambda t: np.sqrt(gamma) * sm, "recast")
    emb, _ = tripled_embed(lambda t: np.zeros((2, 2), dtype=complex), (pair,), 2, RHO_PLUS)
    me3 = embedded_master_equation(emb)

    grid = TimeGrid(0.0, 5.0, 1e-2)
    # C rho D+ + D rho C+ with C = D = sqrt(gamma) sigma_- is the plain
    # dissipator at twice the rate
    oracle = propagate(spontaneous_emission(gamma=2.0 * gamma), RHO_PLUS, grid)

    chi = np.zeros(3, dtype=complex)
    chi[0] = chi[1] = 1.0 / np.sqrt(2.0)
    theta0 = np.kron(PLUS, chi)
    res = run_ensemble(method_id("mcwf"), me3, theta0, grid, N_TRAJ, seed=SEED)
    dists = [
        trace_distance(tripled_extract(res.rho_hat[k]), oracle.states[k])
        for k in range(grid.n_steps + 1)
    ]
    sup = float(max(dists))

    omega_gap = 0.0
    for t in (0.0, 1.3, 2.6, 4.9):
        cd = pair.c(t) - pair.d(t)
        omega = None
        for jump in emb.jumps3:
            block = jump(t).reshape(2, 3, 2, 3)[:, 2, :, 0]
            if omega is None or np.abs(block).max() > np.abs(omega).max():
                omega = block
        gap = omega.conj().T @ omega + cd.conj().T @ cd - emb.a(t) * np.eye(2)
        omega_gap = max(omega_gap, float(np.abs(gap).max()))

    ok = sup <= 0.03 and omega_gap <= 1e-9
    _verdict(5, ok, f"sup TD {sup:.4f} (bound 0.03); completion identity gap {omega_gap:.2g} (tol 1e-9)")
    assert omega_gap <= 1e-9
    assert sup <= 0.03, f"sup trace distance {sup:.4f}"


def test_criterion_06_one_step_unbiasedness():
    dt = 1e-3
    bound = 10.0 * dt * dt
    t0 = time.perf_counter()
    worst_label, worst = "", 0.0
    for case in one_step_cases():
        for psi, t in sample_points(case, 50, seed=2026):
            r = case.run(psi, t, dt)
            if r > worst:
                worst_label, worst = case.label, r
    wall = time.perf_counter() - t0
    ok = worst <= bound and wall < 10.0
    _verdict(
        6,
        ok,
        f"max residual {worst:.3g} at [{worst_label}] (bound {bound:g});"
        f" 50 points/case, wall {wall:.2f} s (< 10 s)",
    )
    assert worst <= bound, f"{worst_label}: residual {worst:.3g} > {bound:g}"
    assert wall < 10.0


def test_criterion_07_weight_martingales(enm_runs):
    me, grid, _, runs = enm_runs
    worst = {}
    for name in ("im", "plqt"):
        res, _ = runs[name]
        traces = np.trace(res.rho_batches, axis1=2, axis2=3).real  # (batches, times)
        b = traces.shape[0]
        mean = traces.mean(axis=0)
        se = traces.std(axis=0, ddof=1) / np.sqrt(b)
        gap = np.abs(mean - 1.0) - 3.0 * se
        worst[name] = float(gap.max())

    flips = runs["plqt"][0].diagnostics["sign_flip_steps"]
    times = grid.times()
    bad_flips = [k for k in flips if min_rate_at(me, float(times[k])) >= 0.0]
    flips_ok = len(flips) > 0 and not bad_flips

    ok = max(worst.values()) <= 1e-12 and flips_ok
    _verdict(
        7,
        ok,
        f"max(|E[weight]-1| - 3 SE): im {worst['im']:.3g}, plqt {worst['plqt']:.3g} (<= 0);"
        f" {len(flips)} sign-flip steps, {len(bad_flips)} at non-negative rates",
    )
    assert flips_ok, f"sign flips at non-negative-rate steps: {bad_flips[:5]}"
    assert worst["im"] <= 1e-12, "influence-martingale mean leaves the 3 SE band"
    assert worst["plqt"] <= 1e-12, "sign-weighted trace leaves the 3 SE band"


def test_criterion_08_divisibility_classification():
    reports = divisibility_scan(eternally_nm(), TimeGrid(0.0, 3.0, 0.1))
    enm_ok = (
        reports[0].cp
        and all(not r.cp for r in reports[1:])
        and all(r.p for r in reports)
    )

    non_p_reports = divisibility_scan(non_p_divisible(0.25), TimeGrid(0.0, 3.0, 0.05))
    p_false = [r.time for r in non_p_reports if not r.p]

    rng = np.random.default_rng(8)
    tuples = []
    while len(tuples) < 50:
        gp, gm = rng.uniform(-0.3, 1.0, size=2)
        gz = rng.uniform(-0.8, 0.8)
        if gp > 0 and gm > 0:
            edge = min(gp, gm, abs(gz + 0.5 * np.sqrt(gp * gm)))
        else:
            edge = min(abs(gp), abs(gm))
        if edge > 1e-3:  # the sampled test is one-sided at the exact boundary
            tuples.append((float(gp), float(gm), float(gz)))
    disagreements = []
    for gp, gm, gz in tuples:
        closed = phase_covariant_p_divisible_at(gp, gm, gz)
        sampled = is_p_divisible_at(phase_covariant(phase_covariant_rates(gp, gm, gz)), 0.0)
        if closed != sampled:
            disagreements.append((gp, gm, gz, closed, sampled))

    ok = enm_ok and len(p_false) > 0 and not disagreements
    _verdict(
        8,
        ok,
        f"eternally NM cp=false(t>0)/p=true: {enm_ok}; non-P model p=false at"
        f" {len(p_false)} points (first t={p_false[0] if p_false else None});"
        f" closed vs sampled disagreements {len(disagreements)}/50",
    )
    assert enm_ok
    assert p_false
    assert not disagreements, disagreements[:3]


def test_criterion_09_waiting_time_law():
    me = spontaneous_emission(gamma=1.0)
    grid = TimeGrid(0.0, 10.0, 1e-3)
    stats = {}
    for name, sampler, seed in (
        ("mcwf", mcwf_first_jump_times, 11),
        ("wtd", wtd_first_jump_times, 12),
    ):
        jt = sampler(me, KET1, grid, N_TRAJ, seed)
        finite = jt[np.isfinite(jt)]
        assert finite.size > 0.99 * N_TRAJ  # survival past t=10 is ~5e-5
        stats[name] = float(kstest(finite, "expon").statistic)
    ok = max(stats.values()) <= 0.02
    _verdict(
        9,
        ok,
        f"first-jump KS vs Exponential(1): mcwf {stats['mcwf']:.4f},"
        f" wtd {stats['wtd']:.4f} (bound 0.02)",
    )
    assert stats["mcwf"] <= 0.02
    assert stats["wtd"] <= 0.02


def test_criterion_10_csv_determinism(tmp_path):
    config = tmp_path / "bench.cfg"
    config.write_text(
        """
        model = delayed_negative
        methods = im(r_min=0.1), doubled, plqt
        trajectories = 400
        dt = 0.02
        t_max = 1.0
        seed = 5
        observables = sx, sz
        """,
        encoding="utf-8",
    )
    args = ["run", "--config", str(config)]
    code_a = cli_main(args + ["--threads", "1", "--out", str(tmp_path / "serial")])
    code_b = cli_main(args + ["--threads", "3", "--out", str(tmp_path / "pooled")])
    serial = (tmp_path / "serial_results.csv").read_bytes()
    pooled = (tmp_path / "pooled_results.csv").read_bytes()
    ok = code_a == 0 and code_b == 0 and serial == pooled
    _verdict(
        10,
        ok,
        f"{len(serial)} byte CSV, --threads 1 vs 3: {'identical' if serial == pooled else 'DIFFER'}",
    )
    assert code_a == 0 and code_b == 0
    assert serial == pooled
