"""Chart where each benchmark model loses CP and P divisibility.

CP divisibility fails as soon as any channel rate turns negative; P
divisibility survives longer and is what separates "a gauge fixes it"
from "only weights or ensemble tricks remain". The scan prints the
classification transitions over t in [0, 3] for the three qubit models.
"""

from unravel import TimeGrid, build_model, divisibility_scan

GRID = TimeGrid(0.0, 3.0, 0.02)


def transitions(reports, attr):
    out = []
    prev = getattr(reports[0], attr)
    for r in reports[1:]:
        cur = getattr(r, attr)
        if cur != prev:
            out.append((r.time, cur))
            prev = cur
    return out


def main():
    for name in ("eternally_nm", "delayed_negative", "non_p_divisible"):
        model = build_model(name)
        reports = divisibility_scan(model.me, GRID)
        r0 = reports[0]
        print(f"{name}: t=0 cp={r0.cp} p={r0.p}")
        for attr in ("cp", "p"):
            for t, val in transitions(reports, attr):
                print(f"  {attr} -> {str(val).lower()} at t={t:.2f}")
        worst = min(reports, key=lambda r: r.min_w_eigenvalue)
        print(
            f"  most negative rate {min(r.min_rate for r in reports):+.3f},"
            f" most negative W eigenvalue {worst.min_w_eigenvalue:+.3f} at t={worst.time:.2f}\n"
        )


if __name__ == "__main__":
    main()
