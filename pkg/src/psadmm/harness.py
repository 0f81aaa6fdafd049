"""Monte-Carlo BER engine: SNR sweeps, detector comparisons, parameter studies,
convergence-trace aggregation, and the complexity audit.

Every trial is seeded as ``base_seed + trial_index``, so results are a
pure function of the experiment spec no matter how trials are scheduled
across workers; the same trial index reuses the same channel and
transmit vector at every SNR point and every parameter cell (common
random numbers), which pairs all detector comparisons.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import baselines
from .baselines import BaselineConfig
from .model import (
    Constellation,
    generate_instance,
    noise_variance,
    symbols_to_bits,
)
from .numerics import OpCounter, SpectralEstimate, spectral_estimate, system_from_gram
from .psadmm import PsAdmmParams, detect, validate_params, ConditionViolation


__all__ = [
    "ExperimentSpec",
    "BerRecord",
    "SweepRecord",
    "TraceAggregate",
    "AuditResult",
    "DETECTOR_NAMES",
    "run_trial",
    "run_experiment",
    "parameter_sweep",
    "convergence_trace_experiment",
    "complexity_audit",
]

DETECTOR_NAMES = ("psadmm", "mmse", "zf", "neumann", "gauss_seidel", "box_admm", "ml")

# Hard cap on batches in min-error-events mode.
_MAX_EVENT_BATCHES = 20


@dataclass(frozen=True)
class ExperimentSpec:
    """Full description of one Monte-Carlo experiment.

    ``detectors`` are names from :data:`DETECTOR_NAMES`; the iterative
    baselines read their knobs from ``neumann_terms``, ``gs_iters``,
    ``box_rho``, ``box_iters`` (the latter two default to the main
    detector's ``rho`` / ``max_iters``).  ``early_stop=False`` forces
    the main detector to run its full iteration budget regardless of
    its ``eps``.  When ``min_error_events`` is set, each cell keeps
    running further whole batches of ``trials`` (deterministically, up
    to 20) until every detector has accumulated that many bit errors.
    """

    B: int
    U: int
    Q: int
    snr_grid_db: tuple[float, ...]
    trials: int
    detectors: tuple[str, ...]
    base_seed: int = 0
    psadmm: PsAdmmParams | None = None
    early_stop: bool = True
    neumann_terms: int = 3
    gs_iters: int = 3
    box_rho: float | None = None
    box_iters: int | None = None
    min_error_events: int | None = None
    override_validation: bool = False

    def __post_init__(self):
        if self.U < 1 or self.B < self.U:
            raise ValueError(f"need B >= U >= 1, got B={self.B}, U={self.U}")
        if self.Q < 1:
            raise ValueError(f"Q must be >= 1, got {self.Q}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if len(self.snr_grid_db) == 0:
            raise ValueError("snr grid must be nonempty")
        if len(self.detectors) == 0:
            raise ValueError("detector list must be empty-free and nonempty")
        for name in self.detectors:
            if name not in DETECTOR_NAMES:
                raise ValueError(f"unknown detector {name!r}; known: {DETECTOR_NAMES}")
        if "psadmm" in self.detectors:
            if self.psadmm is None:
                raise ValueError("psadmm detector configured but no parameters given")
            if len(self.psadmm.alphas) != self.Q:
                raise ValueError(
                    f"psadmm alphas length {len(self.psadmm.alphas)} != Q={self.Q}"
                )
        if "ml" in self.detectors and self.U * self.Q > baselines.ML_SEARCH_LIMIT:
            raise ValueError(
                f"ml detector infeasible: U*Q = {self.U * self.Q} exceeds "
                f"{baselines.ML_SEARCH_LIMIT}"
            )
        if self.min_error_events is not None and self.min_error_events < 1:
            raise ValueError("min_error_events must be >= 1 when set")

    def constellation(self) -> Constellation:
        return Constellation.of_order(self.Q)


@dataclass(frozen=True)
class BerRecord:
    """Aggregated bit/vector error statistics for one (detector, SNR) cell."""

    detector: str
    snr_db: float
    bit_errors: int
    bits: int
    vector_errors: int
    vectors: int
    ber: float
    wall_time_s: float
    failures: int = 0


@dataclass(frozen=True)
class SweepRecord:
    """BER and convergence summary for one (rho, alpha) parameter cell."""

    rho: float
    alpha: float
    snr_db: float
    ber: float
    condition_ok: bool
    mean_final_objective: float
    bit_errors: int
    bits: int
    trace_summary: tuple[tuple[int, float], ...] = ()
    mean_lagrangian: tuple[float, ...] = ()
    mean_residual: tuple[float, ...] = ()


@dataclass(frozen=True)
class TraceAggregate:
    """Per-iteration statistics over a batch of diagnostic detector runs."""

    n_traces: int
    iterations: np.ndarray
    mean_objective: np.ndarray
    mean_lagrangian: np.ndarray
    mean_residual: np.ndarray
    q25_lagrangian: np.ndarray
    q75_lagrangian: np.ndarray
    dual_bound_pass_fraction: float
    descent_pass_fraction: float
    lower_bound_pass_fraction: float
    max_dual_identity_err: float


@dataclass(frozen=True)
class AuditResult:
    """Predicted vs instrumented complex-multiply counts for one detect run."""

    B: int
    U: int
    Q: int
    K: int
    predicted: float
    measured: float
    ratio: float
    breakdown: dict[str, tuple[float, float]]


@dataclass
class _DetectorTally:
    bit_errors: int = 0
    vector_errors: int = 0
    vectors: int = 0
    bits: int = 0
    wall_time_s: float = 0.0
    failures: int = 0

    def merge(self, other: "_DetectorTally") -> None:
        self.bit_errors += other.bit_errors
        self.vector_errors += other.vector_errors
        self.vectors += other.vectors
        self.bits += other.bits
        self.wall_time_s += other.wall_time_s
        self.failures += other.failures


def _effective_psadmm(spec: ExperimentSpec) -> PsAdmmParams | None:
    if spec.psadmm is None:
        return None
    eps = spec.psadmm.eps if spec.early_stop else 0.0
    return replace(spec.psadmm, eps=eps, diagnostics=False)


def _baseline_config(spec: ExperimentSpec, name: str) -> BaselineConfig:
    kind = "ml_exhaustive" if name == "ml" else name
    box_rho = spec.box_rho
    if box_rho is None:
        box_rho = spec.psadmm.rho if spec.psadmm is not None else 1.0
    iters = spec.box_iters
    if iters is None:
        iters = spec.psadmm.max_iters if spec.psadmm is not None else 30
    if name == "gauss_seidel":
        iters = spec.gs_iters
    return BaselineConfig(kind=kind, iters=max(iters, 1),
                          neumann_terms=spec.neumann_terms, box_rho=box_rho)


def run_trial(spec: ExperimentSpec, snr_db: float, trial_index: int,
              ) -> dict[str, _DetectorTally]:
    """Run every configured detector on one seeded instance.

    All detectors see the identical ``(H, x, n)``; errors are counted
    against the transmitted bits.  A detector raising is recorded as a
    failure with all of the trial's bits counted as errored, so the
    aggregate stays deterministic.
    """
    c = spec.constellation()
    inst = generate_instance(spec.B, spec.U, c, snr_db, spec.base_seed + trial_index)
    true_bits = symbols_to_bits(inst.x, c)
    nv = noise_variance(spec.U, c, snr_db)
    p_eff = _effective_psadmm(spec)
    out: dict[str, _DetectorTally] = {}
    for name in spec.detectors:
        tally = _DetectorTally()
        t0 = time.perf_counter()
        try:
            if name == "psadmm":
                symbols, _, _ = detect(inst.H, inst.r, c, p_eff,
                                       override_validation=spec.override_validation)
            elif name == "mmse":
                symbols = baselines.mmse(inst.H, inst.r, c, nv)
            elif name == "zf":
                symbols = baselines.zf(inst.H, inst.r, c)
            elif name == "neumann":
                symbols = baselines.neumann_mmse(inst.H, inst.r, c, nv,
                                                 terms=spec.neumann_terms)
            elif name == "gauss_seidel":
                symbols = baselines.gauss_seidel_mmse(inst.H, inst.r, c, nv,
                                                      iters=spec.gs_iters)
            elif name == "box_admm":
                cfg = _baseline_config(spec, name)
                symbols = baselines.box_admm(inst.H, inst.r, c, cfg.box_rho, cfg.iters)
            else:  # ml
                symbols = baselines.ml_bruteforce(inst.H, inst.r, c)
            errs = int(np.sum(symbols_to_bits(symbols, c) != true_bits))
            tally.bit_errors = errs
            tally.vector_errors = int(errs > 0)
        except Exception:
            tally.bit_errors = true_bits.size
            tally.vector_errors = 1
            tally.failures = 1
        tally.wall_time_s = time.perf_counter() - t0
        tally.bits = true_bits.size
        tally.vectors = 1
        out[name] = tally
    return out


def _cell_chunk(args) -> dict[str, _DetectorTally]:
    spec, snr_db, start, stop = args
    acc = {name: _DetectorTally() for name in spec.detectors}
    for t in range(start, stop):
        for name, tally in run_trial(spec, snr_db, t).items():
            acc[name].merge(tally)
    return acc


def _chunk_ranges(start: int, stop: int, chunks: int):
    n = stop - start
    size = max(1, math.ceil(n / max(chunks, 1)))
    return [(s, min(s + size, stop)) for s in range(start, stop, size)]


def _run_cell(spec: ExperimentSpec, snr_db: float, threads: int,
              pool: ProcessPoolExecutor | None) -> dict[str, _DetectorTally]:
    acc = {name: _DetectorTally() for name in spec.detectors}
    batch = 0
    while True:
        start = batch * spec.trials
        stop = start + spec.trials
        if pool is not None:
            jobs = [(spec, snr_db, lo, hi)
                    for lo, hi in _chunk_ranges(start, stop, threads * 4)]
            for part in pool.map(_cell_chunk, jobs):
                for name, tally in part.items():
                    acc[name].merge(tally)
        else:
            part = _cell_chunk((spec, snr_db, start, stop))
            for name, tally in part.items():
                acc[name].merge(tally)
        batch += 1
        if spec.min_error_events is None:
            break
        if batch >= _MAX_EVENT_BATCHES:
            break
        if all(t.bit_errors >= spec.min_error_events for t in acc.values()):
            break
    return acc


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> list[BerRecord]:
    """Run the full detector-by-SNR grid and aggregate error statistics.

    ``threads`` caps process-level parallelism over trials; the
    aggregation is an order-independent integer reduction, so the
    returned records are identical for any worker count (wall-clock
    fields aside).  Records come back ordered by configured detector,
    then by SNR grid position.
    """
    threads = max(1, int(threads))
    cells: dict[tuple[str, float], _DetectorTally] = {}
    pool = None
    try:
        if threads > 1:
            pool = ProcessPoolExecutor(max_workers=threads)
        for snr_db in spec.snr_grid_db:
            for name, tally in _run_cell(spec, snr_db, threads, pool).items():
                cells[(name, snr_db)] = tally
    finally:
        if pool is not None:
            pool.shutdown()
    records = []
    for name in spec.detectors:
        for snr_db in spec.snr_grid_db:
            t = cells[(name, snr_db)]
            records.append(BerRecord(
                detector=name, snr_db=snr_db, bit_errors=t.bit_errors, bits=t.bits,
                vector_errors=t.vector_errors, vectors=t.vectors,
                ber=t.bit_errors / t.bits, wall_time_s=t.wall_time_s,
                failures=t.failures,
            ))
    return records


@dataclass
class _SweepTally:
    bit_errors: int = 0
    bits: int = 0
    objective_sum: float = 0.0
    runs: int = 0
    condition_ok: bool = True
    obj_k: np.ndarray | None = None
    lag_k: np.ndarray | None = None
    res_k: np.ndarray | None = None

    def merge(self, other: "_SweepTally") -> None:
        self.bit_errors += other.bit_errors
        self.bits += other.bits
        self.objective_sum += other.objective_sum
        self.runs += other.runs
        self.condition_ok = self.condition_ok and other.condition_ok
        for name in ("obj_k", "lag_k", "res_k"):
            mine, theirs = getattr(self, name), getattr(other, name)
            if theirs is None:
                continue
            setattr(self, name, theirs if mine is None else mine + theirs)


def _sweep_chunk(args) -> dict[tuple[float, float, float], _SweepTally]:
    spec, rho_grid, alpha_grid, start, stop = args
    c = spec.constellation()
    base = spec.psadmm
    acc: dict[tuple[float, float, float], _SweepTally] = {}
    for snr_db in spec.snr_grid_db:
        for t in range(start, stop):
            inst = generate_instance(spec.B, spec.U, c, snr_db,
                                     spec.base_seed + t)
            true_bits = symbols_to_bits(inst.x, c)
            G = inst.H.conj().T @ inst.H
            G = (G + G.conj().T) * 0.5
            mf = inst.H.conj().T @ inst.r
            spec_est = spectral_estimate(G)
            for rho in rho_grid:
                system = system_from_gram(G, mf, rho)
                for alpha in alpha_grid:
                    key = (float(rho), float(alpha), float(snr_db))
                    tally = acc.setdefault(key, _SweepTally())
                    # Traces must be rectangular for per-iteration means,
                    # so sweep cells always run the full budget.
                    p = replace(base, rho=float(rho),
                                alphas=(float(alpha),) * spec.Q,
                                diagnostics=True, eps=0.0)
                    try:
                        validate_params(p, spec_est)
                    except ConditionViolation:
                        tally.condition_ok = False
                    try:
                        symbols, trace, _ = detect(
                            inst.H, inst.r, c, p, system=system,
                            spectral=spec_est, override_validation=True)
                        errs = int(np.sum(symbols_to_bits(symbols, c) != true_bits))
                        tally.bit_errors += errs
                        if trace.objective.size:
                            tally.objective_sum += float(trace.objective[-1])
                            tally.runs += 1
                            t_obj = trace.objective
                            t_lag = trace.lagrangian
                            t_res = trace.residual
                            tally.obj_k = t_obj if tally.obj_k is None else tally.obj_k + t_obj
                            tally.lag_k = t_lag if tally.lag_k is None else tally.lag_k + t_lag
                            tally.res_k = t_res if tally.res_k is None else tally.res_k + t_res
                    except Exception:
                        tally.bit_errors += true_bits.size
                    tally.bits += true_bits.size
    return acc


def parameter_sweep(spec: ExperimentSpec, rho_grid, alpha_grid,
                    threads: int = 1) -> list[SweepRecord]:
    """BER surface over a (rho, alpha) grid with per-cell convergence traces.

    Every cell runs on the same instances (common random numbers);
    cells violating the convergence-guarantee conditions for any trial
    run anyway (validation overridden) and come back flagged
    ``condition_ok=False``.  The scalar ``alpha`` of a cell is applied
    to every part when ``Q > 1``.
    """
    if spec.psadmm is None:
        raise ValueError("parameter_sweep needs psadmm parameters in the spec")
    rho_grid = [float(v) for v in rho_grid]
    alpha_grid = [float(v) for v in alpha_grid]
    if not rho_grid or not alpha_grid:
        raise ValueError("rho and alpha grids must be nonempty")
    threads = max(1, int(threads))
    acc: dict[tuple[float, float, float], _SweepTally] = {}
    ranges = _chunk_ranges(0, spec.trials, threads * 4 if threads > 1 else 1)
    jobs = [(spec, rho_grid, alpha_grid, lo, hi) for lo, hi in ranges]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_sweep_chunk, jobs))
    else:
        parts = [_sweep_chunk(job) for job in jobs]
    for part in parts:
        for key, tally in part.items():
            if key in acc:
                acc[key].merge(tally)
            else:
                acc[key] = tally
    records = []
    for rho in rho_grid:
        for alpha in alpha_grid:
            for snr_db in spec.snr_grid_db:
                t = acc[(rho, alpha, float(snr_db))]
                if t.runs and t.obj_k is not None:
                    mean_obj = t.obj_k / t.runs
                    summary = tuple((k + 1, float(v)) for k, v in enumerate(mean_obj))
                    mean_lag = tuple(float(v) for v in t.lag_k / t.runs)
                    mean_res = tuple(float(v) for v in t.res_k / t.runs)
                    final_obj = t.objective_sum / t.runs
                else:
                    summary = ()
                    mean_lag = ()
                    mean_res = ()
                    final_obj = float("nan")
                records.append(SweepRecord(
                    rho=rho, alpha=alpha, snr_db=float(snr_db),
                    ber=t.bit_errors / t.bits, condition_ok=t.condition_ok,
                    mean_final_objective=final_obj, bit_errors=t.bit_errors,
                    bits=t.bits, trace_summary=summary,
                    mean_lagrangian=mean_lag, mean_residual=mean_res,
                ))
    return records


def convergence_trace_experiment(spec: ExperimentSpec, snr_db: float,
                                 n_traces: int) -> TraceAggregate:
    """Aggregate per-iteration diagnostics over ``n_traces`` seeded runs.

    Early stopping is disabled so every trace spans the full iteration
    budget; diagnostic flags are aggregated as pass fractions over all
    recorded iterations of all traces.
    """
    if spec.psadmm is None:
        raise ValueError("convergence_trace_experiment needs psadmm parameters")
    if n_traces == 0:
        empty = np.empty(0)
        return TraceAggregate(0, np.empty(0, dtype=int), empty, empty, empty,
                              empty, empty, 1.0, 1.0, 1.0, 0.0)
    c = spec.constellation()
    p = replace(spec.psadmm, diagnostics=True, eps=0.0)
    objs, lags, ress = [], [], []
    l1 = l2 = lb = total = 0
    max_ident = 0.0
    for t in range(n_traces):
        inst = generate_instance(spec.B, spec.U, c, snr_db, spec.base_seed + t)
        _, trace, _ = detect(inst.H, inst.r, c, p,
                             override_validation=spec.override_validation)
        objs.append(trace.objective)
        lags.append(trace.lagrangian)
        ress.append(trace.residual)
        l1 += int(np.sum(trace.dual_bound_ok))
        l2 += int(np.sum(trace.descent_ok))
        lb += int(np.sum(trace.lower_bound_ok))
        total += trace.iterations
        if trace.dual_identity_err.size:
            max_ident = max(max_ident, float(np.max(trace.dual_identity_err)))
    obj = np.vstack(objs)
    lag = np.vstack(lags)
    res = np.vstack(ress)
    return TraceAggregate(
        n_traces=n_traces,
        iterations=np.arange(1, obj.shape[1] + 1),
        mean_objective=obj.mean(axis=0),
        mean_lagrangian=lag.mean(axis=0),
        mean_residual=res.mean(axis=0),
        q25_lagrangian=np.quantile(lag, 0.25, axis=0),
        q75_lagrangian=np.quantile(lag, 0.75, axis=0),
        dual_bound_pass_fraction=l1 / total if total else 1.0,
        descent_pass_fraction=l2 / total if total else 1.0,
        lower_bound_pass_fraction=lb / total if total else 1.0,
        max_dual_identity_err=max_ident,
    )


def complexity_audit(B: int, U: int, Q: int, K: int, seed: int = 0) -> AuditResult:
    """Compare the multiply-count formula against an instrumented run.

    Predicted cost: ``U^3/3 + B*U^2/2 + B*U + K*(U^2 + Q*U)`` complex
    multiplies.  The measured side counts one multiply per output
    element at every scalar-product site the detector executes, under
    the documented convention: the Gram product is computed in full
    (``B*U^2`` plus ``U^2`` symmetrization, where the formula assumes
    the Hermitian half), and the per-iteration aggregate assembly and
    dual update (``(Q+1)*U + Q*U + U`` per iteration) are unmodeled by
    the formula; both appear as their own kernels in the breakdown.
    Spectral estimation for parameter selection is excluded.
    """
    c = Constellation.of_order(Q)
    inst = generate_instance(B, U, c, snr_db=10.0, seed=seed)
    G = inst.H.conj().T @ inst.H
    G = (G + G.conj().T) * 0.5
    est = spectral_estimate(G)
    rho = 1.5 * math.sqrt(2.0) * 1.01 * est.lambda_max
    alphas = tuple(0.3 * 4**q * rho for q in range(Q))
    p = PsAdmmParams(rho=rho, alphas=alphas, max_iters=K, eps=0.0, diagnostics=False)
    counter = OpCounter()
    detect(inst.H, inst.r, c, p, spectral=est, counter=counter)

    predicted_kernels = {
        "gram": B * U**2 / 2.0,
        "matched_filter": float(B * U),
        "cholesky": U**3 / 3.0,
        "solve": float(K * U**2),
        "xq_update": float(K * Q * U),
        "x0_assemble": 0.0,
        "y_update": 0.0,
    }
    names = sorted(set(predicted_kernels) | set(counter.counts))
    breakdown = {
        name: (predicted_kernels.get(name, 0.0), counter.counts.get(name, 0.0))
        for name in names
    }
    predicted = U**3 / 3.0 + B * U**2 / 2.0 + B * U + K * (U**2 + Q * U)
    measured = counter.total()
    return AuditResult(B=B, U=U, Q=Q, K=K, predicted=predicted, measured=measured,
                       ratio=measured / predicted, breakdown=breakdown)
