"""
Count the complex multiplies one detection actually performs and compare
against the closed-form cost model U^3/3 + BU^2/2 + BU + K(U^2 + QU).

The counter instruments the Gram/Cholesky setup and the per-iteration
kernels separately, so the table shows where the model is tight (solves)
and where implementation overhead lands (clipped part updates).
"""

from psadmm import complexity_audit

# (B, U, Q, K) shapes to audit
SHAPES = [
    (128, 16, 1, 30),
    (128, 16, 2, 30),
    (64, 32, 1, 30),
    (128, 16, 1, 100),
]


def main() -> None:
    for B, U, Q, K in SHAPES:
        a = complexity_audit(B=B, U=U, Q=Q, K=K)
        print(f"B={B} U={U} Q={Q} K={K}: measured/predicted = "
              f"{a.measured:.0f}/{a.predicted:.0f} (ratio {a.ratio:.3f})")
        print(f"  {'kernel':<16}{'predicted':>12}{'measured':>12}")
        for name, (pred, meas) in sorted(a.breakdown.items()):
            print(f"  {name:<16}{pred:>12.0f}{meas:>12.0f}")
        print()


if __name__ == "__main__":
    main()
