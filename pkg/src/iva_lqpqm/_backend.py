"""Select the compiled kernels when importable, else the numpy fallback.

Set ``IVA_LQPQM_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

STATUS_OK = _kernels_py.STATUS_OK
STATUS_MAX_ITER = _kernels_py.STATUS_MAX_ITER
STATUS_EMPTY_SUPPORT = _kernels_py.STATUS_EMPTY_SUPPORT

_compiled = None
if os.environ.get("IVA_LQPQM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _compiled
    except ImportError:
        _compiled = None

kernels = _compiled if _compiled is not None else _kernels_py
BACKEND = "cython" if _compiled is not None else "python"


def get_kernels(name=None):
    """Return the kernel module by name (``"cython"`` or ``"python"``)."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    return ["python"] + (["cython"] if _compiled is not None else [])
