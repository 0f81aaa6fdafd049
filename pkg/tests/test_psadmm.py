"""Detector updates, parameter validation, diagnostics, and convergence checks."""

import math

import numpy as np
import pytest

from psadmm.baselines import box_admm
from psadmm.model import Constellation, generate_instance
from psadmm.numerics import SpectralEstimate, gram, spectral_estimate
from psadmm.psadmm import (
    ConditionViolation,
    ConvergenceBudget,
    PsAdmmParams,
    PsAdmmState,
    augmented_lagrangian,
    detect,
    iteration_bound,
    stationarity_residual,
    update_x0,
    update_xq,
    update_y,
    validate_params,
)


def _state(xq, x0, y):
    return PsAdmmState(
        xq=[np.asarray(a, dtype=complex) for a in xq],
        x0=np.asarray(x0, dtype=complex),
        y=np.asarray(y, dtype=complex),
    )


def _tuned_params(H, snr_scale=1.5, alpha_fracs=(0.3, 1.2, 4.5), q_order=1, **kw):
    # rho comfortably above the sqrt(2)*lambda_max gate; each alpha_q under
    # its own 4^(q-1)*rho ceiling.
    G = H.conj().T @ H
    lam = spectral_estimate((G + G.conj().T) / 2).lambda_max
    rho = snr_scale * math.sqrt(2.0) * 1.01 * lam
    alphas = tuple(alpha_fracs[q] * rho for q in range(q_order))
    return PsAdmmParams(rho=rho, alphas=alphas, **kw)


# ---------------------------------------------------------------------------
# Parameter validation
# ---------------------------------------------------------------------------

def test_validate_accepts_published_operating_point():
    spec = SpectralEstimate(lambda_max=10.0, lambda_min_lower=0.0, tolerance=1e-8,
                            iterations_used=5)
    p = PsAdmmParams(rho=300.0, alphas=(80.0,))
    budget = validate_params(p, spec)
    assert budget.gamma_q == (220.0,)
    assert budget.conditions_ok
    # C = min(220/2, 300*(1-1e-6)/2 - (1.01*10)^2/300) = 110.
    assert budget.C == pytest.approx(110.0)


def test_validate_rejects_penalty_violation():
    spec = SpectralEstimate(0.1, 0.0, 1e-8, 3)
    with pytest.raises(ConditionViolation) as exc:
        validate_params(PsAdmmParams(rho=1.0, alphas=(4.0,)), spec)
    assert exc.value.kind == "penalty"
    assert exc.value.q == 1
    assert exc.value.margin == pytest.approx(-3.0)


def test_validate_sqrt2_boundary_identity_channel():
    # lambda_max(I) = 1 exactly; with no safety inflation the gate sits at sqrt(2).
    spec = spectral_estimate(np.eye(4, dtype=complex))
    assert spec.lambda_max == 1.0
    validate_params(PsAdmmParams(rho=1.42, alphas=(0.5,)), spec, safety=1.0)
    with pytest.raises(ConditionViolation) as exc:
        validate_params(PsAdmmParams(rho=1.41, alphas=(0.5,)), spec, safety=1.0)
    assert exc.value.kind == "rho_spectral"


def test_validate_default_safety_shifts_boundary():
    # Default 1.01 inflation moves the gate to sqrt(2)*1.01 = 1.42835...
    spec = spectral_estimate(np.eye(4, dtype=complex))
    validate_params(PsAdmmParams(rho=1.43, alphas=(0.5,)), spec)
    with pytest.raises(ConditionViolation):
        validate_params(PsAdmmParams(rho=1.42, alphas=(0.5,)), spec)


def test_params_field_validation():
    with pytest.raises(ValueError):
        PsAdmmParams(rho=0.0, alphas=(1.0,))
    with pytest.raises(ValueError):
        PsAdmmParams(rho=1.0, alphas=())
    with pytest.raises(ValueError):
        PsAdmmParams(rho=1.0, alphas=(-1.0,))
    with pytest.raises(ValueError):
        PsAdmmParams(rho=1.0, alphas=(0.5,), output_mode="nope")


# ---------------------------------------------------------------------------
# Augmented Lagrangian
# ---------------------------------------------------------------------------

def test_lagrangian_zero_state_zero_signal():
    p = PsAdmmParams(rho=2.0, alphas=(0.5,))
    st = _state([[0.0]], [0.0], [0.0])
    H = np.array([[1.0 + 0j]])
    assert augmented_lagrangian(st, p, H, np.array([0.0 + 0j])) == 0.0


def test_lagrangian_feasible_coupling_vanishes():
    rng = np.random.default_rng(0)
    p = PsAdmmParams(rho=3.0, alphas=(0.4, 0.7))
    xq = [rng.uniform(-1, 1, 3) + 1j * rng.uniform(-1, 1, 3) for _ in range(2)]
    x0 = xq[0] + 2.0 * xq[1]
    y = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    H = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    r = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    st = _state(xq, x0, y)
    expected = 0.5 * np.linalg.norm(r - H @ x0) ** 2 \
        - 0.2 * np.linalg.norm(xq[0]) ** 2 - 0.35 * np.linalg.norm(xq[1]) ** 2
    assert augmented_lagrangian(st, p, H, r) == pytest.approx(expected, rel=1e-12)


def test_lagrangian_hand_value():
    # H=[1], r=1, x1=1, x0=0, y=j, rho=2, alpha=0.5:
    # 0.5 - 0.25 + Re<-1, j> + 1 = 1.25
    p = PsAdmmParams(rho=2.0, alphas=(0.5,))
    st = _state([[1.0]], [0.0], [1j])
    value = augmented_lagrangian(st, p, np.array([[1.0 + 0j]]), np.array([1.0 + 0j]))
    assert value == pytest.approx(1.25, abs=1e-14)


def test_lagrangian_dimension_mismatch():
    p = PsAdmmParams(rho=1.0, alphas=(0.1,))
    st = _state([[1.0, 1.0]], [0.0, 0.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        augmented_lagrangian(st, p, np.eye(3, dtype=complex), np.zeros(3, dtype=complex))


# ---------------------------------------------------------------------------
# Update steps
# ---------------------------------------------------------------------------

def test_update_xq_hand_value():
    # rho=2, alpha=1: coefficient 1/(2-1) = 1, argument 2*0.5 = 1 -> x1 = 1.
    p = PsAdmmParams(rho=2.0, alphas=(1.0,))
    st = _state([[0.0]], [0.5], [0.0])
    assert update_xq(st, p, 1)[0] == 1.0 + 0.0j


def test_update_xq_projection_saturation():
    p = PsAdmmParams(rho=2.0, alphas=(1.0,))
    st = _state([[0.0]], [2.0], [0.0])  # raw value 4 clamps to 1
    assert update_xq(st, p, 1)[0] == 1.0 + 0.0j


def test_update_xq_componentwise_clamp():
    # raw pre-projection value 1.7 - 2.3j -> 1 - j.
    p = PsAdmmParams(rho=2.0, alphas=(1.0,))
    st = _state([[0.0]], [(1.7 - 2.3j) / 2.0], [0.0])
    assert update_xq(st, p, 1)[0] == 1.0 - 1.0j


def test_update_xq_rejects_nonpositive_denominator():
    p = PsAdmmParams(rho=1.0, alphas=(4.0,))
    st = _state([[0.0]], [0.0], [0.0])
    with pytest.raises(ValueError):
        update_xq(st, p, 1)


def test_update_xq_gauss_seidel_order():
    # With rho=2, alphas=(0,0), x0=1, y=0, old parts zero:
    # fresh sweep gives x1=1 then x2=0; a stale x1 would give x2=0.5 instead.
    p = PsAdmmParams(rho=2.0, alphas=(0.0, 0.0))
    st = _state([[0.0], [0.0]], [1.0], [0.0])
    st.xq[0] = update_xq(st, p, 1)
    assert st.xq[0][0] == 1.0 + 0.0j
    fresh = update_xq(st, p, 2)[0]
    assert fresh == 0.0 + 0.0j
    stale_state = _state([[0.0], [0.0]], [1.0], [0.0])
    assert update_xq(stale_state, p, 2)[0] == 0.5 + 0.0j


def test_update_x0_hand_value():
    # (1+1)^-1 (1 + 1 - 0) = 1.
    H = np.array([[1.0 + 0j]])
    r = np.array([1.0 + 0j])
    p = PsAdmmParams(rho=1.0, alphas=(0.5,))
    system = gram(H, r, rho=1.0)
    st = _state([[1.0]], [0.0], [0.0])
    assert update_x0(st, p, system)[0] == pytest.approx(1.0)


def test_update_x0_zero_fixed_point():
    H = np.eye(3, dtype=complex)
    p = PsAdmmParams(rho=1.0, alphas=(0.5,))
    system = gram(H, np.zeros(3, dtype=complex), rho=1.0)
    st = _state([[0.0] * 3], [0.0] * 3, [0.0] * 3)
    assert np.all(update_x0(st, p, system) == 0.0)


def test_update_x0_residual_oracle():
    rng = np.random.default_rng(5)
    H = rng.standard_normal((7, 4)) + 1j * rng.standard_normal((7, 4))
    r = rng.standard_normal(7) + 1j * rng.standard_normal(7)
    p = PsAdmmParams(rho=2.5, alphas=(0.3, 0.6))
    system = gram(H, r, rho=2.5)
    xq = [rng.uniform(-1, 1, 4) + 1j * rng.uniform(-1, 1, 4) for _ in range(2)]
    y = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    st = _state(xq, np.zeros(4), y)
    x0 = update_x0(st, p, system)
    b = system.matched_filter + 2.5 * (xq[0] + 2 * xq[1]) - y
    res = (system.gram + 2.5 * np.eye(4)) @ x0 - b
    assert np.linalg.norm(res) <= 1e-10 * np.linalg.norm(b)


def test_update_x0_rho_mismatch():
    H = np.eye(2, dtype=complex)
    system = gram(H, np.zeros(2, dtype=complex), rho=1.0)
    p = PsAdmmParams(rho=2.0, alphas=(0.5,))
    st = _state([[0.0, 0.0]], [0.0, 0.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        update_x0(st, p, system)


def test_update_y_feasible_unchanged():
    p = PsAdmmParams(rho=2.0, alphas=(0.1, 0.1))
    xq = [np.array([0.5 + 0.5j]), np.array([-0.25 + 0.25j])]
    x0 = xq[0] + 2 * xq[1]
    st = _state(xq, x0, [0.7 - 0.2j])
    assert update_y(st, p)[0] == 0.7 - 0.2j


def test_update_y_hand_value():
    # rho=2, gap 0.5 -> y moves from 0 to 1.
    p = PsAdmmParams(rho=2.0, alphas=(0.1,))
    st = _state([[1.0]], [1.5], [0.0])
    assert update_y(st, p)[0] == 1.0 + 0.0j


def test_dual_identity_after_full_iteration():
    rng = np.random.default_rng(8)
    H = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
    r = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    G = H.conj().T @ H
    lam = spectral_estimate((G + G.conj().T) / 2).lambda_max
    p = PsAdmmParams(rho=float(2 * lam), alphas=(0.2,))
    system = gram(H, r, p.rho)
    st = _state([[0.0] * 3], [0.0] * 3, [0.0] * 3)
    for _ in range(3):
        st.xq[0] = update_xq(st, p, 1)
        st.x0 = update_x0(st, p, system)
        st.y = update_y(st, p)
        ideal = -(H.conj().T @ (H @ st.x0 - r))
        assert np.linalg.norm(st.y - ideal) <= 1e-8 * (1 + np.linalg.norm(st.y))


# ---------------------------------------------------------------------------
# detect
# ---------------------------------------------------------------------------

def test_detect_noiseless_identity_channel():
    c = Constellation.of_order(1)
    rng = np.random.default_rng(2)
    U = 8
    x = rng.choice([-1.0, 1.0], U) + 1j * rng.choice([-1.0, 1.0], U)
    H = np.eye(U, dtype=complex)
    p = PsAdmmParams(rho=2.0, alphas=(0.5,), max_iters=50, diagnostics=True)
    symbols, trace, budget = detect(H, x, c, p)
    assert np.array_equal(symbols, x)
    assert budget.conditions_ok


def test_detect_zero_iterations_contract():
    c = Constellation.of_order(1)
    H = np.eye(4, dtype=complex)
    r = np.ones(4, dtype=complex)
    p = PsAdmmParams(rho=2.0, alphas=(0.5,), max_iters=0)
    symbols, trace, _ = detect(H, r, c, p)
    assert np.all(symbols == 1.0 + 1.0j)
    assert trace.iterations == 0


def test_detect_order_mismatch():
    c = Constellation.of_order(2)
    H = np.eye(4, dtype=complex)
    p = PsAdmmParams(rho=2.0, alphas=(0.5,))
    with pytest.raises(ValueError):
        detect(H, np.ones(4, dtype=complex), c, p)


def test_detect_validation_gate_and_override():
    c = Constellation.of_order(1)
    inst = generate_instance(8, 4, c, snr_db=10.0, seed=0)
    p = PsAdmmParams(rho=0.5, alphas=(0.1,), max_iters=5)  # rho far below sqrt(2)*lambda
    with pytest.raises(ConditionViolation):
        detect(inst.H, inst.r, c, p)
    symbols, trace, budget = detect(inst.H, inst.r, c, p, override_validation=True)
    assert not budget.conditions_ok
    assert symbols.shape == (4,)


def test_detect_trace_consistency_and_descent():
    c = Constellation.of_order(2)
    for seed in range(10):
        inst = generate_instance(12, 6, c, snr_db=8.0, seed=seed)
        p = _tuned_params(inst.H, q_order=2, max_iters=40, diagnostics=True)
        symbols, trace, budget = detect(inst.H, inst.r, c, p)
        assert trace.dual_bound_ok.all()
        assert trace.descent_ok.all()
        assert trace.lower_bound_ok.all()
        assert np.all(trace.dual_identity_err <= 1e-8)
        # Final recorded Lagrangian matches an independent evaluation.
        final = augmented_lagrangian(trace.final_state, p, inst.H, inst.r)
        assert trace.lagrangian[-1] == pytest.approx(final, rel=1e-9, abs=1e-9)
        # Box invariance of the final parts.
        for part in trace.final_state.xq:
            assert np.max(np.abs(part.real)) <= 1.0
            assert np.max(np.abs(part.imag)) <= 1.0


def test_detect_first_recorded_iteration_can_increase_lagrangian():
    # From the zero initializer the first full update raises the Lagrangian
    # (the initializer violates the dual identity), which is exactly why the
    # descent flag is vacuous on the first recorded entry.
    c = Constellation.of_order(1)
    inst = generate_instance(8, 4, c, snr_db=8.0, seed=3)
    p = _tuned_params(inst.H, max_iters=5, diagnostics=True)
    _, trace, _ = detect(inst.H, inst.r, c, p)
    assert trace.lagrangian[0] > trace.l_init


def test_detect_early_stop_and_bound():
    c = Constellation.of_order(1)
    for seed in range(5):
        inst = generate_instance(10, 5, c, snr_db=9.0, seed=seed)
        p = _tuned_params(inst.H, max_iters=4000, eps=1e-6, diagnostics=True)
        _, trace, budget = detect(inst.H, inst.r, c, p)
        assert trace.eps_hit_iteration is not None
        assert trace.residual[-1] <= 1e-6
        assert budget.t_bound is not None
        assert trace.eps_hit_iteration <= budget.t_bound


def test_detect_alpha_zero_matches_box_admm():
    c = Constellation.of_order(1)
    for seed in range(3):
        inst = generate_instance(10, 5, c, snr_db=7.0, seed=seed)
        G = inst.H.conj().T @ inst.H
        lam = spectral_estimate((G + G.conj().T) / 2).lambda_max
        rho = float(1.7 * math.sqrt(2) * lam)
        K = 25
        p = PsAdmmParams(rho=rho, alphas=(0.0,), max_iters=K)
        system = gram(inst.H, inst.r, rho)
        st = _state([[0.0] * 5], [0.0] * 5, [0.0] * 5)
        _, hist = box_admm(inst.H, inst.r, c, rho, K, record_history=True)
        for k in range(K):
            st.xq[0] = update_xq(st, p, 1)
            st.x0 = update_x0(st, p, system)
            st.y = update_y(st, p)
            assert np.max(np.abs(st.xq[0] - hist["x"][k])) <= 1e-12
            assert np.max(np.abs(st.x0 - hist["z"][k])) <= 1e-12
            assert np.max(np.abs(st.y - hist["y"][k])) <= 1e-12


def test_detect_output_modes_agree_at_convergence():
    c = Constellation.of_order(2)
    inst = generate_instance(16, 4, c, snr_db=25.0, seed=1)
    base = dict(max_iters=300, eps=1e-14)
    p_slice = _tuned_params(inst.H, q_order=2, output_mode="slice_x0", **base)
    p_sign = _tuned_params(inst.H, q_order=2, output_mode="recompose_sign_xq", **base)
    s1, _, _ = detect(inst.H, inst.r, c, p_slice)
    s2, _, _ = detect(inst.H, inst.r, c, p_sign)
    assert np.array_equal(s1, s2)


def test_detect_alternative_initializations_run():
    c = Constellation.of_order(1)
    inst = generate_instance(8, 4, c, snr_db=20.0, seed=4)
    for init in ("zeros", "ones", "minus_ones", "random"):
        p = _tuned_params(inst.H, max_iters=60, diagnostics=True, init=init)
        symbols, trace, _ = detect(inst.H, inst.r, c, p)
        assert trace.descent_ok.all()
        assert symbols.shape == (4,)


# ---------------------------------------------------------------------------
# Iteration bound and stationarity
# ---------------------------------------------------------------------------

def test_iteration_bound_values():
    budget = ConvergenceBudget(gamma_q=(1.0,), gamma=1.0, C=0.5)
    assert iteration_bound(budget, 10.0, 10.0, 0.1) == 0
    assert iteration_bound(budget, 20.0, 10.0, 0.1) == 200
    with pytest.raises(ValueError):
        iteration_bound(ConvergenceBudget(gamma_q=(1.0,), gamma=1.0, C=0.0), 1.0, 0.0, 0.1)
    with pytest.raises(ValueError):
        iteration_bound(budget, 1.0, 0.0, 0.0)


def test_stationarity_zero_gradient_interior():
    # r = (1 - alpha) * x1 makes the penalized gradient vanish at interior x1.
    p = PsAdmmParams(rho=1.0, alphas=(0.5,))
    x1 = np.array([0.5 + 0.3j])
    H = np.array([[1.0 + 0j]])
    r = (1 - 0.5) * x1
    assert stationarity_residual([x1], p, H, r) == pytest.approx(0.0, abs=1e-15)


def test_stationarity_active_boundary():
    # Gradient pushes past the corner; projection clips, so the residual is 0.
    p = PsAdmmParams(rho=1.0, alphas=(0.0,))
    x1 = np.array([1.0 + 1.0j])
    H = np.array([[1.0 + 0j]])
    r = np.array([6.0 + 6.0j])  # grad = x1 - r = -5 - 5j
    assert stationarity_residual([x1], p, H, r) == 0.0


def test_stationarity_small_at_converged_run():
    c = Constellation.of_order(2)
    inst = generate_instance(12, 6, c, snr_db=10.0, seed=6)
    p = _tuned_params(inst.H, q_order=2, max_iters=20000, eps=1e-24)
    _, trace, _ = detect(inst.H, inst.r, c, p)
    res = stationarity_residual(trace.final_state.xq, p, inst.H, inst.r)
    assert res <= 1e-4
