"""Extremal eigenvalues of quadratic energies restricted to the
doubly-stochastic affine subspace.

The couplings with fixed marginals form an affine set whose direction
space is T = {U : U 1 = 0, 1' U = 0}.  The convexified/concavified
energies need the extreme eigenvalues of W restricted to T, i.e. of
P W P with P the orthogonal projector onto T.  P is applied in closed
form by double centering, so only matrix-vector products with W are
required, and the extreme eigenvalues are found by power iteration with
a shift that turns both ends of the spectrum into largest-magnitude
problems:

  1. lam1   = largest-magnitude eigenvalue of P W P restricted to T.
  2. If lam1 >= 0 it is the restricted maximum; the largest eigenvalue
     eta of P (lam1 I - W) P then gives the minimum lam1 - eta.
     Symmetrically when lam1 < 0.

The projector annihilates the complement span{a 1' + 1 b'} (dimension
k + n - 1), whose zero eigenvalues never dominate either phase.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import ConvergenceError, EnergySpec

__all__ = [
    "project_ds_tangent",
    "COARSE_TOL",
    "EigResult",
    "max_magnitude_eig",
    "lambda_bar_range",
    "lambda_min_full",
]

# Sufficient residual tolerance when the eigenvalue only places a
# continuation endpoint or sets a magnitude scale.  Spectra of large
# instances can cluster at one extreme so densely that tighter targets
# cost minutes while improving nothing downstream.
COARSE_TOL = 1e-5

# residual overshoot tolerated when every restart exhausts its budget
_STALL_ACCEPT = 100.0

# power iterates gathered between Rayleigh-Ritz extractions
_RITZ_WINDOW = 10


def project_ds_tangent(U: np.ndarray) -> np.ndarray:
    """Orthogonal projection of a k-by-n matrix onto the direction space
    of the coupling polytope (rows and columns summing to zero)."""
    U = np.asarray(U, dtype=float)
    if U.ndim != 2:
        raise ValueError("expected a matrix")
    k, n = U.shape
    r = U.sum(axis=1)
    c = U.sum(axis=0)
    s = r.sum()
    return U - r[:, None] / n - c[None, :] / k + s / (k * n)


def _center_stacked(x: np.ndarray, k: int, n: int) -> np.ndarray:
    """Stacked-vector form of :func:`project_ds_tangent`."""
    X = x.reshape((k, n), order="F")
    return project_ds_tangent(X).flatten(order="F")


@dataclass(frozen=True)
class EigResult:
    value: float
    vector: np.ndarray
    residual: float
    iterations: int


def max_magnitude_eig(
    matvec: Callable[[np.ndarray], np.ndarray],
    dim: int,
    tol: float = 1e-9,
    max_iters: int | None = None,
    restarts: int = 5,
    rng: np.random.Generator | int | None = None,
) -> EigResult:
    """Largest-magnitude eigenvalue of a symmetric operator by power
    iteration with a random unit start.

    Convergence is declared when the residual ||A v - theta v|| drops
    below tol * max(1, scale), with theta the Rayleigh quotient of the
    unit iterate and scale a running estimate of ||A||.  Each direction
    the sweep visits is orthonormalized into a small window whose
    matvecs are cached, so A v is a stable combination of cached columns,
    and every few steps a Rayleigh-Ritz extraction over the window is
    tried, restarting the sweep from the extracted pair.  This resolves
    the oscillation caused by a +/- pair of equal-magnitude extremes and
    accelerates spectra whose extremes cluster relative to the spectral
    diameter, where a bare power step contracts too slowly for any
    practical budget.  On iteration exhaustion the best iterate is
    restarted with a perturbation no larger than its own residual, so a
    slowly contracting run keeps its progress while a genuinely stuck
    one is shaken loose.

    Since the eigenvalue error is bounded by the residual regardless, a
    run that exhausts its restarts is still accepted when its best
    residual lies within two decades of the requested tolerance; only a
    much worse stall raises ConvergenceError.
    """
    rng = np.random.default_rng(rng)
    if max_iters is None:
        max_iters = max(2000, min(10 * dim, 20000))

    best: tuple[float, np.ndarray, float] | None = None  # (residual, v, theta)
    total_iters = 0
    v = _unit(rng.standard_normal(dim))
    scale = 0.0
    for attempt in range(restarts + 1):
        basis: list[np.ndarray] = []
        images: list[np.ndarray] = []
        for it in range(max_iters):
            total_iters += 1
            q = v.copy()
            for _ in range(2):
                for b in basis:
                    q -= (b @ q) * b
            rnorm = float(np.linalg.norm(q))
            if rnorm > 1e-10:
                q /= rnorm
                basis.append(q)
                images.append(matvec(q))
            # v lies in the window span, so A v combines cached images
            # with orthonormal (hence bounded) coefficients
            w = np.zeros_like(v)
            for b, ab in zip(basis, images):
                w += (b @ v) * ab
            wnorm = float(np.linalg.norm(w))
            scale = max(scale, wnorm)
            theta = float(v @ w)
            res = float(np.linalg.norm(w - theta * v))
            if best is None or res < best[0]:
                best = (res, v.copy(), theta)
            if res <= tol * max(1.0, scale):
                return EigResult(theta, v, res, total_iters)
            if len(basis) >= _RITZ_WINDOW or (rnorm <= 1e-10 and len(basis) >= 2):
                ritz = _ritz_window(basis, images)
                if ritz is None:
                    # nonfinite projection: restart from fresh randomness
                    break
                r_theta, r_vec, r_w, r_res = ritz
                scale = max(scale, abs(r_theta))
                if r_res < best[0]:
                    best = (r_res, r_vec.copy(), r_theta)
                if r_res <= tol * max(1.0, scale):
                    return EigResult(r_theta, r_vec, r_res, total_iters)
                # restart the sweep from the extracted pair, seeding the
                # next window with its already-computed matvec
                v = r_vec
                basis = [r_vec]
                images = [r_w]
                continue
            if wnorm <= 1e-300:
                # operator annihilates the iterate but the residual check
                # did not fire: restart from fresh randomness
                break
            v = w / wnorm
        eps = min(0.1, best[0] / max(1.0, scale))
        v = _unit(best[1] + eps * rng.standard_normal(dim))
    if best[0] <= _STALL_ACCEPT * tol * max(1.0, scale):
        return EigResult(best[2], best[1], best[0], total_iters)
    raise ConvergenceError(
        f"power iteration stalled at residual {best[0]:.3e} "
        f"(tol {tol:.1e}, {total_iters} iterations, {restarts} restarts); "
        f"spectrum may have equal-magnitude extremes"
    )


def _unit(v: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(v)
    if nrm == 0:
        v = np.ones_like(v)
        nrm = np.linalg.norm(v)
    return v / nrm


def _ritz_window(basis, images):
    """Rayleigh-Ritz over an orthonormal window with cached matvecs.

    Returns (theta, vector, A vector, residual) for the largest-magnitude
    Ritz value.  The candidate's matvec is a bounded combination of the
    cached images, so the residual is exact and the extraction costs no
    operator applications.  Returns None if the projection is nonfinite.
    """
    Q = np.column_stack(basis)
    AQ = np.column_stack(images)
    T = Q.T @ AQ
    if not np.isfinite(T).all():
        return None
    T = 0.5 * (T + T.T)
    evals, evecs = np.linalg.eigh(T)
    idx = int(np.argmax(np.abs(evals)))
    y = evecs[:, idx]
    vec = Q @ y
    w = AQ @ y
    nq = float(np.linalg.norm(vec))
    if nq <= 1e-300 or not np.isfinite(nq):
        return None
    vec = vec / nq
    w = w / nq
    lam = float(vec @ w)
    res = float(np.linalg.norm(w - lam * vec))
    return lam, vec, w, res


def lambda_bar_range(
    e: EnergySpec,
    tol: float = 1e-8,
    max_iters: int | None = None,
    restarts: int = 5,
    rng: np.random.Generator | int | None = None,
) -> tuple[float, float]:
    """Extreme eigenvalues (min, max) of the energy's quadratic part
    restricted to the direction space of the coupling polytope."""
    k, n = e.k, e.n
    dim = e.dim
    W = e.quadratic

    def proj_w_proj(x: np.ndarray) -> np.ndarray:
        px = _center_stacked(x, k, n)
        return _center_stacked(W.matvec(px), k, n)

    first = max_magnitude_eig(proj_w_proj, dim, tol, max_iters, restarts, rng)
    lam1 = first.value

    if lam1 >= 0:
        def shifted(x: np.ndarray) -> np.ndarray:
            px = _center_stacked(x, k, n)
            return _center_stacked(lam1 * px - W.matvec(px), k, n)
        eta = max_magnitude_eig(shifted, dim, tol, max_iters, restarts, rng).value
        eta = max(eta, 0.0)
        return lam1 - eta, lam1

    def shifted(x: np.ndarray) -> np.ndarray:
        px = _center_stacked(x, k, n)
        return _center_stacked(W.matvec(px) - lam1 * px, k, n)
    eta = max_magnitude_eig(shifted, dim, tol, max_iters, restarts, rng).value
    eta = max(eta, 0.0)
    return lam1, lam1 + eta


def lambda_min_full(
    e: EnergySpec,
    tol: float = 1e-8,
    max_iters: int | None = None,
    restarts: int = 5,
    rng: np.random.Generator | int | None = None,
) -> float:
    """Minimum eigenvalue of the full (unrestricted) quadratic part."""
    W = e.quadratic
    first = max_magnitude_eig(W.matvec, e.dim, tol, max_iters, restarts, rng)
    lam1 = first.value
    if lam1 <= 0:
        return lam1

    def shifted(x: np.ndarray) -> np.ndarray:
        return lam1 * x - W.matvec(x)

    eta = max_magnitude_eig(shifted, e.dim, tol, max_iters, restarts, rng).value
    return lam1 - max(eta, 0.0)
