"""Reference detectors: MMSE, ZF, Neumann-series MMSE, Gauss-Seidel MMSE,
plain box-constrained ADMM, and exhaustive maximum likelihood.

These serve two purposes: BER comparison curves, and independent oracles
for the main detector (ML bounds every detector's objective from below;
the box-ADMM here is a self-contained implementation that the penalized
detector must reproduce exactly in its alpha -> 0 limit).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.linalg

from .model import Constellation, hard_slice


__all__ = [
    "BaselineConfig",
    "mmse",
    "zf",
    "neumann_inverse_apply",
    "neumann_mmse",
    "gauss_seidel_solve",
    "gauss_seidel_mmse",
    "box_admm",
    "ml_bruteforce",
]

# Exhaustive search is capped at 4^(U*Q) = 4^16 candidates.
ML_SEARCH_LIMIT = 16
_ML_CHUNK = 1 << 16


@dataclass(frozen=True)
class BaselineConfig:
    """Knobs for the iterative baselines.

    ``kind`` names the detector; ``iters`` applies to the sweep-based
    kinds (Gauss-Seidel, box-ADMM), ``neumann_terms`` to the series
    truncation, ``box_rho`` to the box-ADMM coupling penalty.
    """

    kind: str
    iters: int = 3
    neumann_terms: int = 3
    box_rho: float = 1.0

    def __post_init__(self):
        kinds = ("mmse", "zf", "neumann", "gauss_seidel", "box_admm", "ml_exhaustive")
        if self.kind not in kinds:
            raise ValueError(f"kind must be one of {kinds}, got {self.kind!r}")
        if self.iters < 1:
            raise ValueError(f"iters must be >= 1, got {self.iters}")
        if self.neumann_terms < 1:
            raise ValueError(f"neumann_terms must be >= 1, got {self.neumann_terms}")
        if not self.box_rho > 0:
            raise ValueError(f"box_rho must be positive, got {self.box_rho}")


def _gram_mf(H: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    G = H.conj().T @ H
    return (G + G.conj().T) * 0.5, H.conj().T @ r


def mmse(H: np.ndarray, r: np.ndarray, c: Constellation, noise_var: float) -> np.ndarray:
    """LMMSE estimate ``(H^H H + (noise_var/symbol_energy) I)^-1 H^H r``, sliced.

    The regularizer is normalized by the constellation's mean symbol
    energy so the estimator stays unbiased across QAM orders.  At
    ``noise_var = 0`` this degenerates to zero forcing and requires
    full column rank; at ``noise_var = inf`` the regularization
    dominates completely and the (zero) estimate slices to the
    all-``(1+1j)`` tie-break vector.
    """
    if noise_var < 0:
        raise ValueError(f"noise_var must be >= 0, got {noise_var}")
    if np.isinf(noise_var):
        return hard_slice(np.zeros(H.shape[1], dtype=np.complex128), c)
    G, mf = _gram_mf(H, r)
    A = G + (noise_var / c.symbol_energy) * np.eye(G.shape[0])
    est = np.linalg.solve(A, mf)
    return hard_slice(est, c)


def zf(H: np.ndarray, r: np.ndarray, c: Constellation) -> np.ndarray:
    """Zero-forcing estimate ``(H^H H)^-1 H^H r``, sliced."""
    G, mf = _gram_mf(H, r)
    est = np.linalg.solve(G, mf)
    return hard_slice(est, c)


def neumann_inverse_apply(A: np.ndarray, b: np.ndarray, terms: int) -> np.ndarray:
    """Apply the diagonally-split truncated Neumann inverse of ``A`` to ``b``.

    With ``A = D + E`` (diagonal plus off-diagonal), returns
    ``sum_{n=0}^{terms-1} (-D^-1 E)^n D^-1 b``.  Exact whenever
    ``E = 0``; converges to ``A^-1 b`` when ``A`` is diagonally
    dominant.
    """
    if terms < 1:
        raise ValueError(f"terms must be >= 1, got {terms}")
    d = np.diag(A).copy()
    if np.any(d == 0):
        raise ValueError("zero diagonal entry")
    E = A - np.diag(d)
    term = b / d
    est = term.copy()
    for _ in range(terms - 1):
        term = -(E @ term) / d
        est += term
    return est


def neumann_mmse(H: np.ndarray, r: np.ndarray, c: Constellation, noise_var: float,
                 terms: int = 3) -> np.ndarray:
    """MMSE with the matrix inverse replaced by a truncated Neumann series.

    Applies :func:`neumann_inverse_apply` to the matched filter with
    ``A = H^H H + (noise_var/symbol_energy) I``, then slices.  Accurate
    when ``A`` is diagonally dominant (large base-station-to-user
    antenna ratios).
    """
    G, mf = _gram_mf(H, r)
    A = G + (noise_var / c.symbol_energy) * np.eye(G.shape[0])
    return hard_slice(neumann_inverse_apply(A, mf, terms), c)


def gauss_seidel_solve(A: np.ndarray, b: np.ndarray, iters: int,
                       start: np.ndarray | None = None) -> np.ndarray:
    """``iters`` Gauss-Seidel sweeps on ``A x = b``.

    Each sweep solves ``(D + L) x_new = b - U x_old`` with the lower
    triangle ``D + L`` and strict upper triangle ``U`` of ``A``; for a
    Hermitian positive definite system the sweeps converge to the exact
    solution, of which they are a fixed point.  ``start`` defaults to
    the zero vector.
    """
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    if np.any(np.diag(A) == 0):
        raise ValueError("zero diagonal entry")
    lower = np.tril(A)
    strict_upper = A - lower
    est = (np.zeros(A.shape[0], dtype=np.complex128) if start is None
           else np.asarray(start, dtype=np.complex128))
    for _ in range(iters):
        est = scipy.linalg.solve_triangular(lower, b - strict_upper @ est, lower=True)
    return est


def gauss_seidel_mmse(H: np.ndarray, r: np.ndarray, c: Constellation, noise_var: float,
                      iters: int = 3) -> np.ndarray:
    """MMSE solved by :func:`gauss_seidel_solve` sweeps from zero, then sliced."""
    G, mf = _gram_mf(H, r)
    A = G + (noise_var / c.symbol_energy) * np.eye(G.shape[0])
    return hard_slice(gauss_seidel_solve(A, mf, iters), c)


def box_admm(H: np.ndarray, r: np.ndarray, c: Constellation, rho: float,
             iters: int, eps: float = 0.0,
             record_history: bool = False):
    """Plain ADMM for ``min 0.5||r - Hz||^2  s.t.  z = x``, box-constrained ``x``.

    The box clamps real and imaginary components of every entry to
    ``[-(2^Q - 1), 2^Q - 1]``.  Per iteration: project ``z + y/rho``
    onto the box, ridge-solve for ``z``, dual-ascend ``y``; the final
    ``z`` is sliced to the constellation.  This is written independently
    of the penalized detector on purpose — it is the reduction target
    the latter must match exactly when its integrality penalties vanish.

    When ``record_history`` is true, also returns a dict with the
    per-iteration ``x``, ``z``, ``y`` arrays.
    """
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    H = np.asarray(H, dtype=np.complex128)
    r = np.asarray(r, dtype=np.complex128)
    B, U = H.shape
    bound = float((1 << c.q_order) - 1)
    G = H.conj().T @ H
    G = (G + G.conj().T) * 0.5
    mf = H.conj().T @ r
    chol = np.linalg.cholesky(G + rho * np.eye(U))

    x = np.zeros(U, dtype=np.complex128)
    z = np.zeros(U, dtype=np.complex128)
    y = np.zeros(U, dtype=np.complex128)
    history: dict[str, list[np.ndarray]] = {"x": [], "z": [], "y": []}
    for _ in range(iters):
        z_old, x_old = z, x
        step = z + y / rho
        x = (np.clip(step.real, -bound, bound)
             + 1j * np.clip(step.imag, -bound, bound))
        w = scipy.linalg.solve_triangular(chol, mf + rho * x - y, lower=True)
        z = scipy.linalg.solve_triangular(chol.conj().T, w, lower=False)
        y = y + rho * (z - x)
        if record_history:
            history["x"].append(x.copy())
            history["z"].append(z.copy())
            history["y"].append(y.copy())
        if eps > 0:
            res = float(np.vdot(z - z_old, z - z_old).real
                        + np.vdot(x - x_old, x - x_old).real)
            if res <= eps:
                break
    out = hard_slice(z, c)
    if record_history:
        return out, history
    return out


def ml_bruteforce(H: np.ndarray, r: np.ndarray, c: Constellation) -> np.ndarray:
    """Exact maximum-likelihood detection by exhaustive enumeration.

    Minimizes ``||r - Hx||^2`` over every constellation vector; ties
    break toward the lexicographically smallest symbol vector (levels
    ascending, real before imaginary, first entry most significant).
    Guarded: requires ``U * Q <= 16``.
    """
    H = np.asarray(H, dtype=np.complex128)
    r = np.asarray(r, dtype=np.complex128)
    B, U = H.shape
    if U * c.q_order > ML_SEARCH_LIMIT:
        raise ValueError(
            f"search space 4^(U*Q) too large: U*Q = {U * c.q_order} > {ML_SEARCH_LIMIT}"
        )
    levels = c.levels.astype(np.float64)
    # Candidate axes in lexicographic significance order:
    # (re_0, im_0, re_1, im_1, ...), each running over ascending levels.
    axes = [levels] * (2 * U)
    best_val = np.inf
    best_vec: np.ndarray | None = None
    chunk: list[tuple[float, ...]] = []

    def flush(chunk_rows):
        nonlocal best_val, best_vec
        arr = np.asarray(chunk_rows)
        cand = arr[:, 0::2] + 1j * arr[:, 1::2]
        vals = np.sum(np.abs(r[None, :] - cand @ H.T) ** 2, axis=1)
        i = int(np.argmin(vals))
        # Strict inequality keeps the earliest (lexicographically
        # smallest) candidate on exact ties.
        if vals[i] < best_val:
            best_val = float(vals[i])
            best_vec = cand[i]

    for row in product(*axes):
        chunk.append(row)
        if len(chunk) == _ML_CHUNK:
            flush(chunk)
            chunk = []
    if chunk:
        flush(chunk)
    assert best_vec is not None
    return best_vec
