"""Penalized-sharing ADMM detector over binary-decomposed QAM symbols.

The detector relaxes maximum-likelihood detection to

    min  0.5*||r - H x0||^2 - sum_q (alpha_q/2)*||x_q||^2
    s.t. x0 = sum_q 2^(q-1) x_q,   Re/Im of every x_q entry in [-1, 1],

and runs ADMM on the augmented Lagrangian: a Gauss-Seidel sweep of
closed-form box-projected x_q updates, an exact ridge solve for the
aggregate x0, and a dual ascent step.  The negative-quadratic penalties
push each part toward +-1, tightening the relaxation toward the integer
constellation.

Convergence is guaranteed when ``4^(q-1)*rho > alpha_q`` for every part
and ``rho > sqrt(2)*lambda_max(H^H H)``; :func:`validate_params` checks
both and derives the constants behind the iteration-count bound.  With
diagnostics enabled, :func:`detect` records per-iteration values of the
augmented Lagrangian and verifies at runtime the inequalities the
guarantee rests on: monotone descent, the dual-step bound, the
``y = -H^H(H x0 - r)`` identity, and the Lagrangian lower bound.

A note on the first recorded iteration: the descent and dual-step
inequalities relate two states that were both produced by the update
maps.  The transition from the all-zeros initializer into the first
iterate is not of that form (the initializer does not satisfy the dual
identity) and can legitimately increase the Lagrangian, so those two
flags are vacuously true on the first recorded entry and meaningful
from the second onward.  The dual identity and the lower bound hold for
every recorded iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .model import Constellation, hard_slice, sign_decision
from .numerics import (
    GramSystem,
    OpCounter,
    SpectralEstimate,
    gram,
    solve,
    spectral_estimate,
)


__all__ = [
    "PsAdmmParams",
    "PsAdmmState",
    "IterationTrace",
    "ConvergenceBudget",
    "ConditionViolation",
    "validate_params",
    "augmented_lagrangian",
    "objective",
    "aggregate_parts",
    "update_xq",
    "update_x0",
    "update_y",
    "detect",
    "iteration_bound",
    "stationarity_residual",
]

OUTPUT_MODES = ("slice_x0", "recompose_sign_xq")
INIT_MODES = ("zeros", "ones", "minus_ones", "random")

# Relative shave applied to rho when choosing the aggregate strong-convexity
# modulus gamma with the conservative lambda_min = 0.
GAMMA_DELTA = 1e-6

# One-sided inflation applied to the power-iteration eigenvalue estimate
# wherever a certified *upper* bound on lambda_max is needed (condition
# checking, the dual-step diagnostic, the constant C).
LAMBDA_SAFETY = 1.01


@dataclass(frozen=True)
class PsAdmmParams:
    """Solver configuration.

    Attributes
    ----------
    rho : float
        Coupling penalty; must exceed ``sqrt(2)*lambda_max(H^H H)`` for
        the convergence guarantee.
    alphas : tuple of float
        Per-part integrality penalties ``alpha_q``, one per bit level;
        the guarantee needs ``4^(q-1)*rho > alpha_q``.
    max_iters : int
        Iteration cap ``K``.
    eps : float
        Early-stop threshold on the squared-step residual
        ``sum_q ||dx_q||^2 + ||dx0||^2``; 0 disables early stopping.
    output_mode : str
        ``"slice_x0"`` (quantize the aggregate) or
        ``"recompose_sign_xq"`` (sign each part, then recompose).
    diagnostics : bool
        Record the per-iteration trace and run the runtime checks.
    init : str
        Iterate initializer: ``"zeros"`` (default), ``"ones"``,
        ``"minus_ones"``, or ``"random"``.
    init_seed : int
        Seed for the ``"random"`` initializer.
    """

    rho: float
    alphas: tuple[float, ...]
    max_iters: int = 30
    eps: float = 0.0
    output_mode: str = "slice_x0"
    diagnostics: bool = False
    init: str = "zeros"
    init_seed: int = 0

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if len(self.alphas) == 0:
            raise ValueError("alphas must be nonempty")
        if any(a < 0 for a in self.alphas):
            raise ValueError(f"alphas must be nonnegative, got {self.alphas}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be >= 0, got {self.max_iters}")
        if self.eps < 0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        if self.output_mode not in OUTPUT_MODES:
            raise ValueError(f"output_mode must be one of {OUTPUT_MODES}")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}")
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))


@dataclass
class PsAdmmState:
    """Live iterates: the Q box-constrained parts, the aggregate, the dual."""

    xq: list[np.ndarray]
    x0: np.ndarray
    y: np.ndarray
    k: int = 0


@dataclass(frozen=True)
class ConvergenceBudget:
    """Constants certifying convergence for a validated parameter set.

    ``gamma_q`` are the per-part strong-convexity moduli
    ``4^(q-1)*rho - alpha_q``; ``gamma`` is the aggregate modulus
    ``rho*(1 - 1e-6)`` (conservative ``lambda_min = 0``); ``C`` is the
    descent constant ``min(min_q gamma_q / 2, gamma/2 - lambda^2/rho)``.
    ``t_bound`` is the iteration-count bound
    ``ceil((L_init - L_star)/(C*eps))`` filled in post-hoc by
    :func:`detect` when early stopping is active, else None.
    """

    gamma_q: tuple[float, ...]
    gamma: float
    C: float
    t_bound: int | None = None
    lambda_cert: float = 0.0
    conditions_ok: bool = True


class ConditionViolation(ValueError):
    """A convergence-guarantee parameter condition failed.

    ``kind`` is ``"penalty"`` (with the 1-based part index ``q``) or
    ``"rho_spectral"``; ``margin`` is the signed slack of the violated
    inequality (negative or zero when violated).
    """

    def __init__(self, kind: str, margin: float, q: int | None = None):
        self.kind = kind
        self.margin = float(margin)
        self.q = q
        if kind == "penalty":
            msg = f"penalty condition 4^(q-1)*rho > alpha_q fails for q={q} (margin {margin:.6g})"
        else:
            msg = f"spectral condition rho > sqrt(2)*lambda_max fails (margin {margin:.6g})"
        super().__init__(msg)


def _budget_terms(p: PsAdmmParams, lambda_cert: float):
    gamma_q = tuple(4.0 ** q * p.rho - a for q, a in enumerate(p.alphas))
    gamma = p.rho * (1.0 - GAMMA_DELTA)
    c_val = min(min(gamma_q) / 2.0, gamma / 2.0 - lambda_cert**2 / p.rho)
    return gamma_q, gamma, c_val


def validate_params(p: PsAdmmParams, spec: SpectralEstimate,
                    safety: float = LAMBDA_SAFETY) -> ConvergenceBudget:
    """Check the convergence-guarantee conditions and build the budget.

    Raises :class:`ConditionViolation` when ``4^(q-1)*rho <= alpha_q``
    for some part, when ``rho <= sqrt(2)*lambda_cert`` with
    ``lambda_cert = safety * spec.lambda_max``, or when the resulting
    descent constant is nonpositive.  ``safety`` defaults to a 1.01
    one-sided inflation that keeps the strict inequality robust to the
    estimate's downward bias.
    """
    lambda_cert = safety * spec.lambda_max
    gamma_q, gamma, c_val = _budget_terms(p, lambda_cert)
    for q, g in enumerate(gamma_q, start=1):
        if g <= 0:
            raise ConditionViolation("penalty", margin=g, q=q)
    spectral_margin = p.rho - math.sqrt(2.0) * lambda_cert
    if spectral_margin <= 0:
        raise ConditionViolation("rho_spectral", margin=spectral_margin)
    if c_val <= 0:
        raise ConditionViolation("rho_spectral", margin=c_val)
    return ConvergenceBudget(gamma_q=gamma_q, gamma=gamma, C=c_val,
                             lambda_cert=lambda_cert, conditions_ok=True)


def aggregate_parts(parts: list[np.ndarray] | tuple[np.ndarray, ...],
                    counter: OpCounter | None = None,
                    bucket: str = "x0_assemble") -> np.ndarray:
    """Weighted sum ``sum_q 2^(q-1) x_q`` of the binary parts."""
    z = np.zeros_like(parts[0])
    for i, part in enumerate(parts):
        z = z + (2.0**i) * part
    if counter is not None:
        counter.add(bucket, len(parts) * parts[0].size)
    return z


def _sqnorm(v: np.ndarray) -> float:
    return float(np.vdot(v, v).real)


def objective(state: PsAdmmState, p: PsAdmmParams, H: np.ndarray, r: np.ndarray) -> float:
    """Sharing-form objective ``0.5*||r - H x0||^2 - sum_q (alpha_q/2)*||x_q||^2``."""
    value = 0.5 * _sqnorm(r - H @ state.x0)
    for a, part in zip(p.alphas, state.xq):
        value -= 0.5 * a * _sqnorm(part)
    return value


def augmented_lagrangian(state: PsAdmmState, p: PsAdmmParams,
                         H: np.ndarray, r: np.ndarray) -> float:
    """Augmented Lagrangian of the sharing problem at the given state.

    ``objective + Re<x0 - sum_q 2^(q-1) x_q, y> + (rho/2)*||x0 - sum_q 2^(q-1) x_q||^2``.
    """
    if H.shape[1] != state.x0.shape[0] or H.shape[0] != r.shape[0]:
        raise ValueError(
            f"inconsistent dimensions: H {H.shape}, r {r.shape}, x0 {state.x0.shape}"
        )
    gap = state.x0 - aggregate_parts(state.xq)
    value = objective(state, p, H, r)
    value += float(np.vdot(gap, state.y).real)
    value += 0.5 * p.rho * _sqnorm(gap)
    return value


def update_xq(state: PsAdmmState, p: PsAdmmParams, q: int,
              counter: OpCounter | None = None) -> np.ndarray:
    """Closed-form box-projected update of part ``q`` (1-based).

    Assumes parts with index < q already hold their new values this
    sweep (Gauss-Seidel order).  Returns

        proj( (2^(q-1) / (4^(q-1)*rho - alpha_q)) *
              (rho*(x0 - sum_{i != q} 2^(i-1) x_i) + y) )

    with the projection clamping real and imaginary components of every
    entry to [-1, 1] independently.
    """
    denom = 4.0 ** (q - 1) * p.rho - p.alphas[q - 1]
    if denom <= 0:
        raise ValueError(
            f"nonpositive x_q denominator for q={q}: 4^(q-1)*rho - alpha_q = {denom:.6g}"
        )
    others = np.zeros_like(state.x0)
    for i, part in enumerate(state.xq):
        if i != q - 1:
            others = others + (2.0**i) * part
    bracket = p.rho * (state.x0 - others) + state.y
    raw = (2.0 ** (q - 1) / denom) * bracket
    if counter is not None:
        counter.add("xq_update", (len(state.xq) + 1) * state.x0.size)
    return np.clip(raw.real, -1.0, 1.0) + 1j * np.clip(raw.imag, -1.0, 1.0)


def update_x0(state: PsAdmmState, p: PsAdmmParams, system: GramSystem,
              counter: OpCounter | None = None) -> np.ndarray:
    """Exact aggregate update via the stored ridge factorization.

    Solves ``(H^H H + rho I) x0 = H^H r + rho * sum_q 2^(q-1) x_q - y``;
    all parts must already hold their new values.
    """
    if not math.isclose(system.rho, p.rho, rel_tol=1e-12):
        raise ValueError(f"GramSystem rho {system.rho} does not match params rho {p.rho}")
    z = aggregate_parts(state.xq, counter)
    b = system.matched_filter + p.rho * z - state.y
    if counter is not None:
        counter.add("x0_assemble", state.x0.size)
    return solve(system, b, counter)


def update_y(state: PsAdmmState, p: PsAdmmParams,
             counter: OpCounter | None = None) -> np.ndarray:
    """Dual ascent step ``y + rho*(x0 - sum_q 2^(q-1) x_q)`` on the new iterates."""
    z = aggregate_parts(state.xq, counter, bucket="y_update")
    if counter is not None:
        counter.add("y_update", state.x0.size)
    return state.y + p.rho * (state.x0 - z)


@dataclass
class IterationTrace:
    """Per-iteration diagnostic record of one :func:`detect` call.

    Scalar arrays are indexed by recorded iteration (1-based iteration
    ``k`` maps to index ``k - 1``) and are empty when diagnostics are
    off, except ``residual`` which is also populated whenever early
    stopping is active.  ``dual_bound_ok`` / ``descent_ok`` compare
    consecutive recorded states and are vacuously true on the first
    entry (see module docstring).  ``dual_identity_err`` is the
    relative residual ``||y + H^H(H x0 - r)|| / (1 + ||y||)`` of the
    closed-form dual representation.
    """

    iterations: int = 0
    lagrangian: np.ndarray = field(default_factory=lambda: np.empty(0))
    objective: np.ndarray = field(default_factory=lambda: np.empty(0))
    residual: np.ndarray = field(default_factory=lambda: np.empty(0))
    primal_gap: np.ndarray = field(default_factory=lambda: np.empty(0))
    dual_step: np.ndarray = field(default_factory=lambda: np.empty(0))
    dual_bound_ok: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=bool))
    descent_ok: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=bool))
    lower_bound_ok: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=bool))
    dual_identity_err: np.ndarray = field(default_factory=lambda: np.empty(0))
    l_init: float = 0.0
    lambda_cert: float = 0.0
    eps_hit_iteration: int | None = None
    final_state: PsAdmmState | None = None


def _initial_state(p: PsAdmmParams, U: int, Q: int) -> PsAdmmState:
    if p.init == "zeros":
        xq = [np.zeros(U, dtype=np.complex128) for _ in range(Q)]
        x0 = np.zeros(U, dtype=np.complex128)
    else:
        if p.init == "ones":
            fill = [np.full(U, 1.0 + 1.0j) for _ in range(Q)]
        elif p.init == "minus_ones":
            fill = [np.full(U, -1.0 - 1.0j) for _ in range(Q)]
        else:
            rng = np.random.default_rng(p.init_seed)
            fill = [
                rng.uniform(-1.0, 1.0, U) + 1j * rng.uniform(-1.0, 1.0, U)
                for _ in range(Q)
            ]
        xq = fill
        x0 = aggregate_parts(xq)
    return PsAdmmState(xq=xq, x0=x0, y=np.zeros(U, dtype=np.complex128), k=0)


def detect(H: np.ndarray, r: np.ndarray, c: Constellation, p: PsAdmmParams, *,
           system: GramSystem | None = None,
           spectral: SpectralEstimate | None = None,
           override_validation: bool = False,
           counter: OpCounter | None = None,
           ) -> tuple[np.ndarray, IterationTrace, ConvergenceBudget]:
    """Run the detector on one instance and hard-decide the symbols.

    Parameters
    ----------
    H, r : ndarray
        Channel matrix (B x U, B >= U) and received vector.
    c : Constellation
        Transmit alphabet; its order must equal ``len(p.alphas)``.
    p : PsAdmmParams
        Solver configuration.
    system : GramSystem, optional
        Precomputed Gram system (must share ``p.rho``); built here if absent.
    spectral : SpectralEstimate, optional
        Precomputed spectral estimate of ``H^H H``; built here if absent.
    override_validation : bool
        Run even if the parameter conditions fail; the returned budget
        then carries ``conditions_ok=False`` and the runtime guarantees
        are void.
    counter : OpCounter, optional
        Multiply counter for complexity instrumentation.

    Returns
    -------
    (symbols, trace, budget)
        Hard-decided constellation vector, the per-iteration trace, and
        the convergence budget (``t_bound`` filled when early stopping
        and diagnostics are both active).
    """
    H = np.asarray(H, dtype=np.complex128)
    r = np.asarray(r, dtype=np.complex128)
    B, U = H.shape
    Q = c.q_order
    if len(p.alphas) != Q:
        raise ValueError(
            f"len(alphas)={len(p.alphas)} must equal the constellation order Q={Q}"
        )
    if system is None:
        system = gram(H, r, p.rho, counter)
    if spectral is None:
        spectral = spectral_estimate(system.gram)
    lambda_cert = LAMBDA_SAFETY * spectral.lambda_max

    try:
        budget = validate_params(p, spectral)
    except ConditionViolation:
        if not override_validation:
            raise
        gamma_q, gamma, c_val = _budget_terms(p, lambda_cert)
        budget = ConvergenceBudget(gamma_q=gamma_q, gamma=gamma, C=c_val,
                                   lambda_cert=lambda_cert, conditions_ok=False)

    state = _initial_state(p, U, Q)
    diagnostics = p.diagnostics
    track_residual = diagnostics or p.eps > 0

    l_init = augmented_lagrangian(state, p, H, r)
    lower_bound = -U * sum(p.alphas)

    lag, obj, resid, pgap, dstep, l1ok, l2ok, lbok, dident = ([] for _ in range(9))
    eps_hit: int | None = None
    l_prev = None

    for k in range(1, p.max_iters + 1):
        prev_xq = list(state.xq)
        prev_x0 = state.x0
        prev_y = state.y
        for q in range(1, Q + 1):
            state.xq[q - 1] = update_xq(state, p, q, counter)
        state.x0 = update_x0(state, p, system, counter)
        state.y = update_y(state, p, counter)
        state.k = k

        if track_residual:
            res = _sqnorm(state.x0 - prev_x0)
            for new, old in zip(state.xq, prev_xq):
                res += _sqnorm(new - old)
            resid.append(res)

        if diagnostics:
            err = r - H @ state.x0
            ell = 0.5 * _sqnorm(err)
            f_val = ell
            for a, part in zip(p.alphas, state.xq):
                f_val -= 0.5 * a * _sqnorm(part)
            z = aggregate_parts(state.xq)
            gap_vec = state.x0 - z
            l_val = f_val + float(np.vdot(gap_vec, state.y).real) \
                + 0.5 * p.rho * _sqnorm(gap_vec)
            if not (math.isfinite(l_val) and np.all(np.isfinite(state.x0))
                    and np.all(np.isfinite(state.y))):
                raise FloatingPointError(f"non-finite iterate at iteration {k}")
            dx0_sq = _sqnorm(state.x0 - prev_x0)
            dy = state.y - prev_y
            dy_sq = _sqnorm(dy)
            lag.append(l_val)
            obj.append(f_val)
            pgap.append(math.sqrt(_sqnorm(gap_vec)))
            dstep.append(math.sqrt(dy_sq))
            if k == 1:
                l1ok.append(True)
                l2ok.append(True)
            else:
                l1ok.append(dy_sq <= lambda_cert**2 * dx0_sq + 1e-12)
                l2ok.append(l_val <= l_prev + 1e-9 * (1.0 + abs(l_prev)))
            lbok.append(l_val >= lower_bound - 1e-9 * (1.0 + abs(lower_bound)))
            ident = state.y + (system.gram @ state.x0 - system.matched_filter)
            dident.append(math.sqrt(_sqnorm(ident))
                          / (1.0 + math.sqrt(_sqnorm(state.y))))
            l_prev = l_val

        if p.eps > 0 and resid[-1] <= p.eps:
            eps_hit = k
            break

    if p.eps > 0 and budget.C > 0:
        l_star = lag[-1] if lag else augmented_lagrangian(state, p, H, r)
        budget = replace(budget, t_bound=iteration_bound(budget, l_init, l_star, p.eps))

    if p.output_mode == "slice_x0":
        symbols = hard_slice(state.x0, c)
    else:
        symbols = sign_decision(state.xq)

    trace = IterationTrace(
        iterations=state.k,
        lagrangian=np.asarray(lag),
        objective=np.asarray(obj),
        residual=np.asarray(resid),
        primal_gap=np.asarray(pgap),
        dual_step=np.asarray(dstep),
        dual_bound_ok=np.asarray(l1ok, dtype=bool),
        descent_ok=np.asarray(l2ok, dtype=bool),
        lower_bound_ok=np.asarray(lbok, dtype=bool),
        dual_identity_err=np.asarray(dident),
        l_init=l_init,
        lambda_cert=lambda_cert,
        eps_hit_iteration=eps_hit,
        final_state=state,
    )
    return symbols, trace, budget


def iteration_bound(budget: ConvergenceBudget, L_initial: float, L_star: float,
                    eps: float) -> int:
    """Iteration-count bound ``ceil((L_initial - L_star) / (C * eps))``.

    ``L_star`` may be any value not above the optimum of the run, e.g.
    the final Lagrangian value, which makes the bound computable without
    knowing the true stationary point.  A (numerically) negative gap
    clamps to zero.
    """
    if budget.C <= 0:
        raise ValueError(f"descent constant must be positive, got C={budget.C}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    gap = max(L_initial - L_star, 0.0)
    return int(math.ceil(gap / (budget.C * eps)))


def stationarity_residual(xq_star: list[np.ndarray] | tuple[np.ndarray, ...],
                          p: PsAdmmParams, H: np.ndarray, r: np.ndarray) -> float:
    """Projected-gradient residual of the box-constrained sharing problem.

    Returns ``max_q || x_q - proj(x_q - grad_q) ||_inf`` (entrywise
    complex modulus) with
    ``grad_q = 2^(q-1) H^H (H sum_i 2^(i-1) x_i - r) - alpha_q x_q``;
    zero exactly at stationary points.
    """
    x0 = aggregate_parts(list(xq_star))
    g0 = H.conj().T @ (H @ x0 - r)
    worst = 0.0
    for q, part in enumerate(xq_star):
        grad = (2.0**q) * g0 - p.alphas[q] * part
        step = part - grad
        projected = np.clip(step.real, -1.0, 1.0) + 1j * np.clip(step.imag, -1.0, 1.0)
        violation = part - projected
        worst = max(worst, float(np.max(np.abs(violation))) if violation.size else 0.0)
    return worst
