"""Complex dense linear-algebra kernels shared by all detectors.

Everything a detector needs from the channel matrix is funneled through
two precomputed objects: a :class:`GramSystem` (Gram matrix, matched
filter, and a Cholesky factor of the ridge-regularized Gram) and a
:class:`SpectralEstimate` (largest-eigenvalue information used for
parameter validation).  All operations are pure functions on immutable
inputs and are safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


__all__ = [
    "OpCounter",
    "GramSystem",
    "SpectralEstimate",
    "gram",
    "system_from_gram",
    "solve",
    "spectral_estimate",
]


class OpCounter:
    """Bucketed multiply counter for complexity instrumentation.

    Counts one multiplication per output element of every scalar-product
    site executed inside an instrumented kernel, regardless of whether
    the scalar factor is real- or complex-valued.  Counting is opt-in:
    kernels accept ``counter=None`` and skip all bookkeeping by default.
    """

    def __init__(self) -> None:
        self.counts: dict[str, float] = {}

    def add(self, bucket: str, n: float) -> None:
        self.counts[bucket] = self.counts.get(bucket, 0.0) + n

    def total(self) -> float:
        return float(sum(self.counts.values()))


@dataclass(frozen=True)
class GramSystem:
    """Precomputed Gram system for a channel matrix ``H`` and receive vector ``r``.

    Attributes
    ----------
    gram : ndarray of shape (U, U)
        Hermitian Gram matrix ``H^H H``, explicitly symmetrized.
    matched_filter : ndarray of shape (U,)
        Matched-filter vector ``H^H r``.
    rho : float
        Ridge parameter; the stored factorization is of ``gram + rho*I``.
    factor : ndarray of shape (U, U)
        Lower-triangular Cholesky factor ``L`` with ``L L^H = gram + rho*I``.
    """

    gram: np.ndarray
    matched_filter: np.ndarray
    rho: float
    factor: np.ndarray


@dataclass(frozen=True)
class SpectralEstimate:
    """Power-iteration estimate of the spectrum edge of a Hermitian PSD matrix.

    ``lambda_max`` is a Rayleigh-quotient estimate of the largest
    eigenvalue (hence never an over-estimate in exact arithmetic);
    ``lambda_min_lower`` is a certified lower bound on the smallest
    eigenvalue, conservatively 0 unless the caller knows better.
    """

    lambda_max: float
    lambda_min_lower: float
    tolerance: float
    iterations_used: int
    converged: bool = True


def _require_finite(name: str, a: np.ndarray) -> None:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")


def gram(H: np.ndarray, r: np.ndarray, rho: float, counter: OpCounter | None = None) -> GramSystem:
    """Build the iteration-independent Gram system for a detection problem.

    Parameters
    ----------
    H : ndarray of shape (B, U)
        Channel matrix with ``B >= U``.
    r : ndarray of shape (B,)
        Received vector.
    rho : float
        Positive ridge parameter; ``gram + rho*I`` is factorized once.
    counter : OpCounter, optional
        Multiply counter; buckets ``gram``, ``matched_filter``, ``cholesky``.

    Returns
    -------
    GramSystem

    Raises
    ------
    ValueError
        On dimension mismatch, non-finite entries, or ``rho <= 0``.
    """
    H = np.asarray(H, dtype=np.complex128)
    r = np.asarray(r, dtype=np.complex128)
    if H.ndim != 2:
        raise ValueError(f"H must be a matrix, got ndim={H.ndim}")
    B, U = H.shape
    if B < U:
        raise ValueError(f"H must have rows >= cols, got shape {H.shape}")
    if r.shape != (B,):
        raise ValueError(f"r must have shape ({B},), got {r.shape}")
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    _require_finite("H", H)
    _require_finite("r", r)

    G = H.conj().T @ H
    # Kill rounding asymmetry so the Hermitian invariant holds at machine precision.
    G = (G + G.conj().T) * 0.5
    mf = H.conj().T @ r
    if counter is not None:
        counter.add("gram", B * U * U + U * U)
        counter.add("matched_filter", B * U)

    A = G + rho * np.eye(U)
    L = np.linalg.cholesky(A)
    if counter is not None:
        counter.add("cholesky", U**3 / 3.0)
    return GramSystem(gram=G, matched_filter=mf, rho=float(rho), factor=L)


def system_from_gram(G: np.ndarray, matched_filter: np.ndarray, rho: float,
                     counter: OpCounter | None = None) -> GramSystem:
    """Build a :class:`GramSystem` from an already-computed Gram matrix.

    Lets callers that need several ridge parameters for the same channel
    (e.g. different detectors in one Monte-Carlo trial) pay for the
    ``H^H H`` product only once.  Only the Cholesky factorization is
    performed (and counted) here.
    """
    G = np.asarray(G, dtype=np.complex128)
    mf = np.asarray(matched_filter, dtype=np.complex128)
    U = G.shape[0]
    if G.shape != (U, U):
        raise ValueError(f"G must be square, got {G.shape}")
    if mf.shape != (U,):
        raise ValueError(f"matched_filter must have shape ({U},), got {mf.shape}")
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    L = np.linalg.cholesky(G + rho * np.eye(U))
    if counter is not None:
        counter.add("cholesky", U**3 / 3.0)
    return GramSystem(gram=G, matched_filter=mf, rho=float(rho), factor=L)


def solve(system: GramSystem, b: np.ndarray, counter: OpCounter | None = None) -> np.ndarray:
    """Apply ``(H^H H + rho*I)^{-1}`` to ``b`` via the stored factorization.

    Two triangular solves against the Cholesky factor; no matrix is ever
    inverted explicitly.
    """
    b = np.asarray(b, dtype=np.complex128)
    U = system.factor.shape[0]
    if b.shape != (U,):
        raise ValueError(f"b must have shape ({U},), got {b.shape}")
    w = scipy.linalg.solve_triangular(system.factor, b, lower=True)
    v = scipy.linalg.solve_triangular(system.factor.conj().T, w, lower=False)
    if counter is not None:
        counter.add("solve", U * U)
    return v


def spectral_estimate(G: np.ndarray, tol: float = 1e-6, max_iters: int = 500) -> SpectralEstimate:
    """Estimate the largest eigenvalue of a Hermitian PSD matrix by power iteration.

    Parameters
    ----------
    G : ndarray of shape (U, U)
        Hermitian positive semidefinite matrix.
    tol : float
        Relative successive-change tolerance for the Rayleigh quotient,
        in ``(0, 1)``.
    max_iters : int
        Iteration cap.  If reached without meeting ``tol`` the best
        estimate is returned with ``converged=False``.

    Returns
    -------
    SpectralEstimate
        With ``lambda_min_lower = 0`` (always a valid lower bound for a
        PSD matrix; nothing sharper is attempted).

    Raises
    ------
    ValueError
        If ``G`` is not Hermitian within ``1e-10`` relative tolerance,
        or ``tol`` is out of range.
    """
    G = np.asarray(G, dtype=np.complex128)
    U = G.shape[0]
    if G.shape != (U, U):
        raise ValueError(f"G must be square, got {G.shape}")
    if not (0 < tol < 1):
        raise ValueError(f"tol must be in (0, 1), got {tol}")
    scale = np.max(np.abs(G)) if U else 0.0
    if scale == 0.0:
        return SpectralEstimate(0.0, 0.0, 0.0, 0, True)
    if np.max(np.abs(G - G.conj().T)) > 1e-10 * scale:
        raise ValueError("G must be Hermitian")

    # Deterministic seeded start: a fixed random direction is almost surely
    # not orthogonal to the top eigenvector.
    rng = np.random.default_rng(0x5EED)
    v = rng.standard_normal(U) + 1j * rng.standard_normal(U)
    v /= np.linalg.norm(v)

    lam = 0.0
    achieved = np.inf
    converged = False
    k = 0
    for k in range(1, max_iters + 1):
        w = G @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # v is in the null space; for PSD G with nonzero scale this only
            # happens on exactly singular directions.  Restart deterministically.
            v = np.ones(U, dtype=np.complex128) / np.sqrt(U)
            continue
        lam_new = float(np.vdot(v, w).real / np.vdot(v, v).real)
        v = w / nw
        achieved = abs(lam_new - lam) / max(abs(lam_new), np.finfo(float).tiny)
        lam = lam_new
        if achieved <= tol:
            converged = True
            break
    return SpectralEstimate(
        lambda_max=max(lam, 0.0),
        lambda_min_lower=0.0,
        tolerance=float(achieved),
        iterations_used=k,
        converged=converged,
    )
