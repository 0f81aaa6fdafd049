"""Tests for the Monte-Carlo harness: spec validation, deterministic
parallel reduction, paired-trial accounting, parameter sweeps, trace
aggregation, and the complexity audit."""

import math

import numpy as np
import pytest

from psadmm.baselines import box_admm
from psadmm.harness import (
    AuditResult,
    ExperimentSpec,
    complexity_audit,
    convergence_trace_experiment,
    parameter_sweep,
    run_experiment,
    run_trial,
)
from psadmm.model import Constellation, generate_instance
from psadmm.psadmm import PsAdmmParams


def _params(rho=60.0, alphas=(12.0,), **kw):
    return PsAdmmParams(rho=rho, alphas=alphas, **kw)


def _spec(**kw):
    base = dict(B=8, U=4, Q=1, snr_grid_db=(8.0,), trials=10,
                detectors=("psadmm", "mmse"), base_seed=3, psadmm=_params())
    base.update(kw)
    return ExperimentSpec(**base)


class TestExperimentSpecValidation:
    def test_empty_detector_list_rejected(self):
        with pytest.raises(ValueError, match="detector list"):
            _spec(detectors=())

    def test_unknown_detector_rejected(self):
        with pytest.raises(ValueError, match="unknown detector"):
            _spec(detectors=("mmse", "sphere"))

    def test_psadmm_without_params_rejected(self):
        with pytest.raises(ValueError, match="no parameters"):
            _spec(psadmm=None)

    def test_alpha_length_must_match_bit_depth(self):
        with pytest.raises(ValueError, match="alphas length"):
            _spec(Q=2)

    def test_infeasible_ml_rejected_up_front(self):
        with pytest.raises(ValueError, match="ml detector infeasible"):
            _spec(B=32, U=9, detectors=("ml",), psadmm=None, Q=2)

    def test_underdetermined_system_rejected(self):
        with pytest.raises(ValueError, match="B >= U"):
            _spec(B=2, U=4)

    def test_bad_trial_and_event_counts_rejected(self):
        with pytest.raises(ValueError, match="trials"):
            _spec(trials=0)
        with pytest.raises(ValueError, match="min_error_events"):
            _spec(min_error_events=0)

    def test_empty_snr_grid_rejected(self):
        with pytest.raises(ValueError, match="snr grid"):
            _spec(snr_grid_db=())


class TestRunTrial:
    def test_per_trial_bit_accounting(self):
        spec = _spec(detectors=("mmse", "zf"))
        out = run_trial(spec, 8.0, 0)
        assert set(out) == {"mmse", "zf"}
        for tally in out.values():
            assert tally.bits == spec.U * 2 * spec.Q
            assert tally.vectors == 1
            assert 0 <= tally.bit_errors <= tally.bits

    def test_detector_failure_counts_all_bits(self):
        # A ridge parameter this small always trips the spectral
        # condition, so the run is recorded as a failure rather than
        # crashing the experiment.
        spec = _spec(psadmm=_params(rho=1e-3, alphas=(1e-4,)))
        out = run_trial(spec, 8.0, 0)
        assert out["psadmm"].failures == 1
        assert out["psadmm"].bit_errors == spec.U * 2 * spec.Q
        assert out["psadmm"].vector_errors == 1
        assert out["mmse"].failures == 0


class TestRunExperiment:
    def test_record_order_and_accounting(self):
        spec = _spec(snr_grid_db=(10.0, 6.0), detectors=("mmse", "zf"), trials=6)
        recs = run_experiment(spec)
        assert [(r.detector, r.snr_db) for r in recs] == [
            ("mmse", 10.0), ("mmse", 6.0), ("zf", 10.0), ("zf", 6.0)]
        for r in recs:
            assert r.bits == spec.trials * spec.U * 2 * spec.Q
            assert r.vectors == spec.trials
            assert r.ber == r.bit_errors / r.bits
            assert 0 <= r.vector_errors <= r.vectors

    def test_worker_count_does_not_change_results(self):
        spec = _spec(trials=12, snr_grid_db=(6.0, 10.0),
                     detectors=("psadmm", "mmse", "box_admm"))
        key = lambda recs: [(r.detector, r.snr_db, r.bit_errors, r.vector_errors,
                             r.bits, r.failures) for r in recs]
        assert key(run_experiment(spec, threads=1)) == key(run_experiment(spec, threads=3))

    def test_detectors_share_instances_within_a_trial(self):
        # A detector's error counts must not depend on which other
        # detectors run alongside it (paired comparisons).
        alone = run_experiment(_spec(detectors=("mmse",), psadmm=None))
        paired = run_experiment(_spec(detectors=("zf", "mmse"), psadmm=None))
        mmse_paired = [r for r in paired if r.detector == "mmse"]
        assert [(r.bit_errors, r.vector_errors) for r in alone] == \
               [(r.bit_errors, r.vector_errors) for r in mmse_paired]

    def test_base_seed_changes_the_draws(self):
        a = run_experiment(_spec(detectors=("mmse",), psadmm=None, snr_grid_db=(4.0,)))
        b = run_experiment(_spec(detectors=("mmse",), psadmm=None, snr_grid_db=(4.0,),
                                 base_seed=999))
        assert a[0].bit_errors != b[0].bit_errors

    def test_validation_failures_surface_in_records(self):
        spec = _spec(psadmm=_params(rho=1e-3, alphas=(1e-4,)), trials=5)
        rec = [r for r in run_experiment(spec) if r.detector == "psadmm"][0]
        assert rec.failures == 5
        assert rec.ber == 1.0

    def test_min_error_events_extends_in_whole_batches(self):
        spec = _spec(detectors=("mmse",), psadmm=None, trials=20,
                     snr_grid_db=(4.0,), min_error_events=25)
        rec = run_experiment(spec)[0]
        assert rec.vectors % spec.trials == 0
        assert rec.vectors > spec.trials  # 20 trials cannot yield 25 errors here
        assert rec.bits == rec.vectors * spec.U * 2 * spec.Q
        assert rec.bit_errors >= spec.min_error_events or rec.vectors == 20 * spec.trials


class TestParameterSweep:
    def test_condition_flags_and_failed_cells(self):
        spec = _spec(trials=6, detectors=("psadmm",))
        recs = parameter_sweep(spec, rho_grid=[60.0], alpha_grid=[5.0, 80.0])
        good = next(r for r in recs if r.alpha == 5.0)
        bad = next(r for r in recs if r.alpha == 80.0)
        assert good.condition_ok
        assert good.ber < 0.5
        assert len(good.trace_summary) == spec.psadmm.max_iters
        assert good.trace_summary[0][0] == 1
        assert len(good.mean_lagrangian) == len(good.mean_residual) == spec.psadmm.max_iters
        # alpha > rho makes the part update ill-posed: the cell must
        # still be reported, with every bit counted as errored.
        assert not bad.condition_ok
        assert bad.ber == 1.0
        assert math.isnan(bad.mean_final_objective)
        assert bad.trace_summary == ()

    def test_zero_penalty_column_matches_box_baseline(self):
        # With a single part and no penalty the detector and the
        # box-constrained baseline solve the same relaxation, so their
        # sweep-cell BER must coincide trial by trial.
        spec = _spec(trials=8, detectors=("psadmm",),
                     psadmm=_params(rho=60.0, alphas=(0.0,), max_iters=25))
        recs = parameter_sweep(spec, rho_grid=[60.0], alpha_grid=[0.0])
        c = spec.constellation()
        errors = 0
        bits = 0
        from psadmm.model import symbols_to_bits
        for t in range(spec.trials):
            inst = generate_instance(spec.B, spec.U, c, 8.0, spec.base_seed + t)
            sym = box_admm(inst.H, inst.r, c, rho=60.0, iters=25)
            errors += int(np.sum(symbols_to_bits(sym, c) != symbols_to_bits(inst.x, c)))
            bits += inst.x.size * 2 * spec.Q
        assert recs[0].bit_errors == errors
        assert recs[0].bits == bits

    def test_sweep_is_deterministic_across_workers(self):
        spec = _spec(trials=9, detectors=("psadmm",))
        key = lambda recs: [(r.rho, r.alpha, r.bit_errors, r.condition_ok,
                             r.trace_summary) for r in recs]
        a = parameter_sweep(spec, [60.0, 70.0], [3.0, 9.0], threads=1)
        b = parameter_sweep(spec, [60.0, 70.0], [3.0, 9.0], threads=3)
        assert key(a) == key(b)

    def test_empty_grids_rejected(self):
        with pytest.raises(ValueError, match="grids"):
            parameter_sweep(_spec(), [], [1.0])
        with pytest.raises(ValueError, match="needs psadmm"):
            parameter_sweep(_spec(detectors=("mmse",), psadmm=None), [60.0], [1.0])


class TestConvergenceTraces:
    def test_aggregate_shapes_and_diagnostics(self):
        spec = _spec()
        agg = convergence_trace_experiment(spec, 8.0, n_traces=6)
        K = spec.psadmm.max_iters
        assert agg.n_traces == 6
        assert list(agg.iterations) == list(range(1, K + 1))
        for arr in (agg.mean_objective, agg.mean_lagrangian, agg.mean_residual,
                    agg.q25_lagrangian, agg.q75_lagrangian):
            assert arr.shape == (K,)
        assert agg.dual_bound_pass_fraction == 1.0
        assert agg.descent_pass_fraction == 1.0
        assert agg.lower_bound_pass_fraction == 1.0
        assert agg.max_dual_identity_err < 1e-10
        assert np.all(agg.q25_lagrangian <= agg.q75_lagrangian)

    def test_mean_lagrangian_is_monotone_over_recorded_iterations(self):
        agg = convergence_trace_experiment(_spec(), 8.0, n_traces=8)
        diffs = np.diff(agg.mean_lagrangian)
        tol = 1e-9 * (1.0 + np.abs(agg.mean_lagrangian[:-1]))
        assert np.all(diffs <= tol)

    def test_zero_traces_gives_empty_aggregate(self):
        agg = convergence_trace_experiment(_spec(), 8.0, n_traces=0)
        assert agg.n_traces == 0
        assert agg.iterations.size == 0
        assert agg.mean_objective.size == 0
        assert agg.max_dual_identity_err == 0.0


class TestComplexityAudit:
    def test_reference_configuration_counts(self):
        a = complexity_audit(B=128, U=16, Q=1, K=30)
        assert isinstance(a, AuditResult)
        assert a.predicted == pytest.approx(
            16**3 / 3 + 128 * 16**2 / 2 + 128 * 16 + 30 * (16**2 + 16))
        # Exact instrumented counts under the one-multiply-per-output
        # convention: full Gram product plus symmetrization, triangular
        # solves, and the per-iteration part/aggregate/dual updates.
        assert a.breakdown["gram"] == (128 * 16**2 / 2, 128 * 16**2 + 16**2)
        assert a.breakdown["matched_filter"] == (128 * 16.0, 128 * 16.0)
        assert a.breakdown["cholesky"][1] == pytest.approx(16**3 / 3)
        assert a.breakdown["solve"] == (30 * 16**2, 30 * 16**2)
        assert a.breakdown["xq_update"] == (30 * 16.0, 30 * 2 * 16.0)
        assert a.breakdown["x0_assemble"][1] == 30 * 2 * 16.0
        assert a.breakdown["y_update"][1] == 30 * 2 * 16.0
        assert a.measured == pytest.approx(sum(m for _, m in a.breakdown.values()))
        assert 0.5 <= a.ratio <= 2.0

    def test_zero_iteration_audit_counts_setup_only(self):
        a = complexity_audit(B=16, U=8, Q=2, K=0)
        assert a.breakdown["solve"][1] == 0.0
        assert a.breakdown["xq_update"][1] == 0.0
        assert a.predicted == pytest.approx(8**3 / 3 + 16 * 8**2 / 2 + 16 * 8)
        assert a.measured == pytest.approx(16 * 8**2 + 8**2 + 16 * 8 + 8**3 / 3)

    def test_iteration_cost_scales_with_budget(self):
        short = complexity_audit(B=16, U=8, Q=2, K=5)
        long = complexity_audit(B=16, U=8, Q=2, K=10)
        # solve + per-part updates (Q of them) + aggregate assembly + dual
        per_iter = 8**2 + 2 * (3 * 8) + 3 * 8 + 3 * 8
        assert long.measured - short.measured == pytest.approx(5 * per_iter)
