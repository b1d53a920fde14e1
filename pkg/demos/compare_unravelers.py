"""Race the trajectory methods against the RK4 oracle on one hard model.

The eternally non-Markovian qubit keeps its dephasing rate at
gamma_z(t) = -tanh(t)/2, negative for every t > 0, so the plain jump
unraveling refuses to start. Each extended method buys applicability with
a different currency: the rate-operator schemes keep bounded weights, the
weighted schemes pay estimator variance that compounds with the integrated
negative rate, the vector-pair embedding pays in norm spread between its
two legs. sup-distance and wall clock make the trade visible.
"""

import numpy as np

from unravel import (
    NegativeRate,
    TimeGrid,
    error_vs_oracle,
    eternally_nm,
    method_id,
    propagate,
    run_ensemble,
    time_dependent_gauge,
)
from unravel.models import PLUS

N_TRAJ = 2_000
GRID = TimeGrid(0.0, 3.0, 1e-2)


def main():
    me = eternally_nm()
    oracle = propagate(me, np.outer(PLUS, PLUS.conj()), GRID)
    print(f"eternally non-Markovian qubit from |+>, N={N_TRAJ}, t in [0, {GRID.t_max:g}]")

    try:
        run_ensemble(method_id("mcwf"), me, PLUS, GRID, 10, seed=0)
    except NegativeRate as err:
        print(f"mcwf refuses, as it must: {err}\n")

    gz_gauge = time_dependent_gauge(lambda t: -0.5 * np.tanh(t) * np.eye(2))
    methods = [
        method_id("wroqj"),
        method_id("psi_roqj", gauge=gz_gauge),
        method_id("im"),
        method_id("plqt"),
        method_id("doubled"),
    ]
    print(f"{'method':<14} {'sup distance':>12} {'wall [ms]':>10} {'jumps':>8}")
    for mid in methods:
        res = run_ensemble(mid, me, PLUS, GRID, N_TRAJ, seed=1)
        _, dists = error_vs_oracle(res, oracle)
        jumps = res.event_counts.get("jump", 0)
        print(f"{mid.display:<14} {dists.max():>12.4f} {res.wall_clock_ms:>10.0f} {jumps:>8}")

    print(
        "\nThe weighted pair (im, plqt) lands an order of magnitude above the"
        "\nrate-operator methods at equal N: every trajectory's weight magnitude"
        "\nis cosh(t) here, so the estimator noise grows as cosh(t)/sqrt(N)."
    )


if __name__ == "__main__":
    main()
