"""Hot-loop kernels with a compiled core and a pure-numpy fallback.

The backend is fixed once at import time:

* ``CIPS_KERNELS=cython`` requires the compiled extension (ImportError if
  it was not built),
* ``CIPS_KERNELS=python`` forces the numpy fallback,
* unset or ``auto`` prefers the extension and falls back silently.

``backend()`` reports which one is active. Both backends implement the
same signatures and agree to float tolerance; see tests/test_kernels.py
and benchmarks/bench_kernels.py.
"""

import os

from . import pyref

_choice = os.environ.get("CIPS_KERNELS", "auto").lower()

if _choice not in ("auto", "cython", "python"):
    raise ValueError(f"CIPS_KERNELS must be auto, cython, or python, got {_choice!r}")

if _choice == "python":
    _impl = pyref
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _choice == "cython":
            raise
        _impl = pyref

sigmoid = _impl.sigmoid
softplus = _impl.softplus
bce_terms_and_grad = _impl.bce_terms_and_grad
dot_rows = _impl.dot_rows
scatter_add_rows = _impl.scatter_add_rows
pairwise_distances = _impl.pairwise_distances
soft_assign_from_distances = _impl.soft_assign_from_distances
kl_grads = _impl.kl_grads
adam_update = _impl.adam_update


def backend():
    """Name of the active kernel backend: 'cython' or 'python'."""
    return _impl.BACKEND
