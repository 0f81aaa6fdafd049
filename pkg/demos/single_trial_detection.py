"""
Walk through one detection problem end to end: draw a 16-QAM uplink
instance, validate the detector's parameter conditions against an
estimate of the Gram spectrum, run every detector on the same received
vector, and compare their decisions against the transmitted symbols.
"""

import math

import numpy as np

from psadmm import (
    Constellation,
    PsAdmmParams,
    box_admm,
    detect,
    gauss_seidel_mmse,
    generate_instance,
    ml_bruteforce,
    mmse,
    neumann_mmse,
    noise_variance,
    spectral_estimate,
    symbols_to_bits,
    validate_params,
    zf,
)

# Parameters (U kept small so the exhaustive-search oracle stays cheap:
# 16-QAM over 4 users is 16^4 = 65536 candidate vectors)
B = 16         # receive antennas
U = 4          # single-antenna users
Q = 2          # 4^Q-QAM -> 16-QAM
SNR_DB = 12.0  # per-user average SNR
SEED = 7


def main() -> None:
    c = Constellation.of_order(Q)
    inst = generate_instance(B, U, c, snr_db=SNR_DB, seed=SEED)
    nv = noise_variance(U, c, SNR_DB)

    # Tune the penalty just above the certified threshold
    # sqrt(2)*lambda_max; mild per-part penalties (well inside the
    # 4^(q-1)*rho limit) keep the relaxation accurate.
    G = inst.H.conj().T @ inst.H
    est = spectral_estimate((G + G.conj().T) / 2)
    rho = 1.02 * math.sqrt(2.0) * 1.01 * est.lambda_max
    p = PsAdmmParams(rho=rho, alphas=(0.1 * rho, 0.4 * rho), max_iters=50,
                     diagnostics=True)
    budget = validate_params(p, est)
    print(f"lambda_max ~ {est.lambda_max:.2f}, rho = {rho:.2f}")
    print(f"descent constant C = {budget.C:.3f} "
          f"(conditions_ok={budget.conditions_ok})")

    decisions = {
        "mmse": mmse(inst.H, inst.r, c, nv),
        "zf": zf(inst.H, inst.r, c),
        "neumann(3)": neumann_mmse(inst.H, inst.r, c, nv, terms=3),
        "gauss_seidel(3)": gauss_seidel_mmse(inst.H, inst.r, c, nv, iters=3),
        "box_admm": box_admm(inst.H, inst.r, c, rho=rho, iters=50),
        "ml": ml_bruteforce(inst.H, inst.r, c),
    }
    sym, trace, _ = detect(inst.H, inst.r, c, p, spectral=est)
    decisions["psadmm"] = sym
    print(f"psadmm ran {trace.iterations} iterations, "
          f"final objective {trace.objective[-1]:.3f}")

    true_bits = symbols_to_bits(inst.x, c)
    print(f"\n{'detector':<16}{'symbol errors':>14}{'bit errors':>12}"
          f"{'residual':>12}")
    for name in ("psadmm", "mmse", "zf", "neumann(3)", "gauss_seidel(3)",
                 "box_admm", "ml"):
        s = decisions[name]
        serr = int(np.sum(s != inst.x))
        berr = int(np.sum(symbols_to_bits(s, c) != true_bits))
        res = float(np.linalg.norm(inst.r - inst.H @ s))
        print(f"{name:<16}{serr:>14d}{berr:>12d}{res:>12.4f}")


if __name__ == "__main__":
    main()
