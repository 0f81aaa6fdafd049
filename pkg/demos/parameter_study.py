"""
Map BER over a (rho, alpha) grid for a square 32x32 QPSK system.

The certified descent conditions are sufficient, not necessary: the
sweep flags each cell with whether the conditions held on every trial,
and on square systems the best-performing cell often sits below the
certified rho threshold.  Shared channel/noise draws across cells make
the comparison paired.
"""

from psadmm import ExperimentSpec, PsAdmmParams, parameter_sweep

# Parameters
B = U = 32
SNR_DB = 10.0
TRIALS = 100
RHO_GRID = [80.0, 160.0, 320.0]     # certified threshold is ~183 here
ALPHA_GRID = [20.0, 40.0, 80.0]
BASE = PsAdmmParams(rho=RHO_GRID[0], alphas=(ALPHA_GRID[0],), max_iters=30)


def main() -> None:
    spec = ExperimentSpec(B=B, U=U, Q=1, snr_grid_db=(SNR_DB,),
                          trials=TRIALS, detectors=("psadmm",), base_seed=0,
                          psadmm=BASE, override_validation=True)
    records = parameter_sweep(spec, RHO_GRID, ALPHA_GRID)

    print(f"{'rho':>8}{'alpha':>8}{'ber':>12}{'certified':>11}"
          f"{'mean objective':>16}")
    for r in records:
        print(f"{r.rho:>8g}{r.alpha:>8g}{r.ber:>12.2e}"
              f"{str(r.condition_ok).lower():>11}"
              f"{r.mean_final_objective:>16.4f}")

    best = min(records, key=lambda r: r.ber)
    certified = [r for r in records if r.condition_ok]
    print(f"\nbest cell: rho={best.rho:g}, alpha={best.alpha:g}, "
          f"ber={best.ber:.2e}, certified={str(best.condition_ok).lower()}")
    if certified:
        bc = min(certified, key=lambda r: r.ber)
        print(f"best certified cell: rho={bc.rho:g}, alpha={bc.alpha:g}, "
              f"ber={bc.ber:.2e}")


if __name__ == "__main__":
    main()
