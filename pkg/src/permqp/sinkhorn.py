"""KL projection onto a coupling polytope (log-domain Sinkhorn).

Given a positive kernel K (supplied as log K) and target marginals
(r, m), alternately rescales rows and columns so that

    X = diag(exp(log_u)) K diag(exp(log_v))

matches the marginals.  X is the unique minimizer of the relative
entropy KL(x | K) = <x, log x - log K> over couplings with those
marginals.  All arithmetic runs in the log domain, so kernels with very
large dynamic range (sharp mirror-descent kernels, warm starts with
near-zero entries) are handled without under/overflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import ConvergenceError, Coupling, MarginalSpec

__all__ = [
    "ScalingState",
    "kl_project",
    "kl_project_state",
    "kl_project_log",
    "round_to_marginals",
]

# Entries of couplings supplied in linear form are floored here before
# taking logs, so exact zeros stay usable as warm starts.
LOG_FLOOR = 1e-300

# A windowed error improvement worse than this factor counts as a stall.
# Healthy kernels gain an order of magnitude in a few dozen sweeps, so a
# window that fails to halve the error is clearly in a slow regime.
STALL_RATIO = 0.5


@dataclass(frozen=True)
class ScalingState:
    """Diagnostics of a Sinkhorn run: final log scalings, sweep count,
    final marginal error, and (optionally) the error after each sweep."""

    log_u: np.ndarray
    log_v: np.ndarray
    iterations: int
    marginal_error: float
    error_history: np.ndarray | None = None
    stalled: bool = False


def kl_project_log(
    log_kernel: np.ndarray,
    marginals: MarginalSpec,
    tol: float = 1e-9,
    max_iters: int = 10000,
    log_u: np.ndarray | None = None,
    log_v: np.ndarray | None = None,
    track_errors: bool = False,
    validate: bool = True,
    stall_window: int = 0,
    stall_tol: float | None = None,
) -> tuple[np.ndarray, ScalingState]:
    """Log-domain core; returns (log of the projected coupling, state).

    The marginal error is the maximum relative deviation of the row sums
    from the row marginals, measured with the current scalings; column
    sums are exact after every column sweep by construction, so they are
    checked only for the incoming scalings.  An already-feasible kernel
    is returned unchanged with zero sweeps.

    Kernels whose projection is nearly a vertex of the polytope contract
    arbitrarily slowly (mass must flow through near-zero entries), so the
    target tolerance can be unreachable in any reasonable budget.  With
    ``stall_window > 0`` the run is cut short once a window of that many
    sweeps fails to halve the error, provided the error is already within
    ``stall_tol``; the state then reports ``stalled=True`` and callers are
    expected to absorb the residual (see :func:`round_to_marginals`).
    """
    log_k = np.ascontiguousarray(log_kernel, dtype=float)
    nr, nc = marginals.shape
    if log_k.shape != (nr, nc):
        raise ValueError(f"kernel shape {log_k.shape} != marginal shape {(nr, nc)}")
    if validate:
        if np.any(np.isnan(log_k)) or np.any(log_k == np.inf):
            raise ValueError("log kernel entries must be finite or -inf")
        if np.any(log_k.max(axis=1) == -np.inf) or np.any(log_k.max(axis=0) == -np.inf):
            raise ValueError("kernel has an empty (all-zero) row or column")

    log_r = np.log(marginals.row)
    log_m = np.log(marginals.col)
    lu = np.zeros(nr) if log_u is None else np.array(log_u, dtype=float)
    lv = np.zeros(nc) if log_v is None else np.array(log_v, dtype=float)

    total = 0
    remaining = int(max_iters)
    prev_err = None
    stalled = False
    hist_parts: list[np.ndarray] = [] if track_errors else None
    while True:
        budget = remaining if stall_window <= 0 else min(int(stall_window), remaining)
        part = np.empty(budget + 1) if track_errors else None
        sweeps, err, done = kernels.sinkhorn_loop(
            log_k, log_r, log_m, lu, lv, float(tol), budget, part
        )
        if track_errors:
            # sweep 0 of a resumed chunk re-measures the previous scalings
            hist_parts.append(part[: sweeps + 1] if total == 0 else part[1 : sweeps + 1])
        total += int(sweeps)
        remaining -= int(sweeps)
        if done:
            break
        if (
            stall_tol is not None
            and prev_err is not None
            and err > STALL_RATIO * prev_err
            and err <= stall_tol
        ):
            stalled = True
            break
        if remaining <= 0:
            raise ConvergenceError(
                f"Sinkhorn did not reach tol={tol:.1e} in {max_iters} sweeps "
                f"(marginal error {err:.3e}; kernel may be near-degenerate)"
            )
        prev_err = err

    state = ScalingState(
        log_u=lu,
        log_v=lv,
        iterations=total,
        marginal_error=float(err),
        error_history=np.concatenate(hist_parts) if track_errors else None,
        stalled=stalled,
    )
    return log_k + lu[:, None] + lv[None, :], state


def round_to_marginals(values: np.ndarray, marginals: MarginalSpec) -> np.ndarray:
    """Return a nonnegative matrix with exactly the requested marginals,
    at L1 distance at most twice the marginal deviation of ``values``.

    Overfull rows are scaled down, then overfull columns, and the
    remaining deficit is added back as a nonnegative rank-one patch.
    Used to absorb the residual of a truncated Sinkhorn run, whose
    effect on downstream objectives is then of the order of that
    residual rather than of the iteration's slow tail.
    """
    x = np.array(values, dtype=float)
    if x.shape != marginals.shape:
        raise ValueError(f"values shape {x.shape} != marginal shape {marginals.shape}")
    r, m = marginals.row, marginals.col
    with np.errstate(divide="ignore"):
        x *= np.minimum(1.0, r / x.sum(axis=1))[:, None]
        x *= np.minimum(1.0, m / x.sum(axis=0))[None, :]
    dr = np.maximum(r - x.sum(axis=1), 0.0)
    dm = np.maximum(m - x.sum(axis=0), 0.0)
    total = dr.sum()
    if total > 0.0:
        x += np.outer(dr, dm) / total
    return x


def kl_project_state(
    log_kernel: np.ndarray,
    marginals: MarginalSpec,
    tol: float = 1e-9,
    max_iters: int = 10000,
    log_u: np.ndarray | None = None,
    log_v: np.ndarray | None = None,
    track_errors: bool = False,
    validate: bool = True,
) -> tuple[Coupling, ScalingState]:
    """As :func:`kl_project`, additionally returning the scaling state."""
    log_x, state = kl_project_log(
        log_kernel, marginals, tol, max_iters, log_u, log_v, track_errors, validate
    )
    coupling = Coupling(np.exp(log_x), marginals, feas_tol=max(1e-8, 10 * tol))
    return coupling, state


def kl_project(
    log_kernel: np.ndarray,
    marginals: MarginalSpec,
    tol: float = 1e-9,
    max_iters: int = 10000,
) -> Coupling:
    """Project exp(log_kernel) onto the couplings with the given marginals,
    minimizing KL divergence from the kernel."""
    return kl_project_state(log_kernel, marginals, tol, max_iters)[0]
