"""Kernel backend chosen at import: the Cython extension when it is built,
otherwise the pure-Python implementation. Set ``TAEP_PURE_PYTHON=1`` to force
the fallback."""

import os

from . import _pykernels

if os.environ.get("TAEP_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

project_feasible = _impl.project_feasible
solve_row_qp = _impl.solve_row_qp
coordinate_pass = _impl.coordinate_pass
jacobi_eigh = _impl.jacobi_eigh

qp_objective = _pykernels.qp_objective
kkt_residual = _pykernels.kkt_residual
