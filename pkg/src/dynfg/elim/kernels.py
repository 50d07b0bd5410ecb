"""Kernel backend selection.

The compiled extension is used when it imports; set ``DYNFG_PURE_PYTHON=1``
to force the pure-Python kernels.
"""
import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def get_backend(name: str = "auto"):
    if name == "python":
        return _pykernels
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _ckernels
    if name != "auto":
        raise ValueError(f"unknown kernel backend {name!r}")
    if os.environ.get("DYNFG_PURE_PYTHON", "") not in ("", "0") or _ckernels is None:
        return _pykernels
    return _ckernels


def available_backends():
    return ["python"] + (["cython"] if _ckernels is not None else [])


_active = get_backend()
BACKEND = _active.BACKEND
symbolic_eliminate = _active.symbolic_eliminate
min_degree_order = _active.min_degree_order
frontal_qr = _active.frontal_qr
solve_upper = _active.solve_upper
solve_upper_t = _active.solve_upper_t
