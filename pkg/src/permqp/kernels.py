"""Kernel dispatch: compiled Sinkhorn sweeps when available, NumPy otherwise.

Set the environment variable ``PERMQP_PURE_KERNELS=1`` before import to
force the pure NumPy path (used by the benchmark and for debugging).
"""

import os

if os.environ.get("PERMQP_PURE_KERNELS"):
    from . import _kernels_pure as _impl
else:
    try:
        from . import _kernels_cy as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_pure as _impl

COMPILED = _impl.COMPILED
row_logsumexp = _impl.row_logsumexp
col_logsumexp = _impl.col_logsumexp
scaled_matrix = _impl.scaled_matrix
sinkhorn_loop = _impl.sinkhorn_loop
