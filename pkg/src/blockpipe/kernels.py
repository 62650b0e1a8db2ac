"""Backend selection for the reordering kernels.

The compiled ``_ckernels`` extension is used when it was built; otherwise, or
when ``BLOCKPIPE_PURE_PYTHON`` is set to a non-empty value, the pure-Python
``_pykernels`` module is used. Both expose the same functions.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if not os.environ.get("BLOCKPIPE_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

conflict_successors = _impl.conflict_successors
strongly_connected = _impl.strongly_connected
elementary_cycles = _impl.elementary_cycles
shortest_cycles = _impl.shortest_cycles


def available_backends():
    """Name -> module for every backend importable in this environment."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
