"""Interpreter: compiled program, hosts and the kernel backend.

The Cython kernel is used when it was built; setting IGEN_PURE_PYTHON=1
forces the pure-Python loop.
"""

import importlib
import os

from . import _kernel_py

_compiled = None
if os.environ.get("IGEN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernel_c as _compiled
    except ImportError:  # extension not built
        _compiled = None

kernel = _compiled if _compiled is not None else _kernel_py
BACKEND = "cython" if _compiled is not None else "python"


def available_backends() -> list[str]:
    out = ["python"]
    try:
        importlib.import_module("._kernel_c", __name__)
        out.insert(0, "cython")
    except ImportError:
        pass
    return out


def get_kernel(name: str = None):
    """Kernel module by name ("cython" / "python"); default is the selected backend."""
    if name is None:
        return kernel
    if name == "python":
        return _kernel_py
    if name == "cython":
        return importlib.import_module("._kernel_c", __name__)
    raise ValueError(f"unknown backend {name!r}")
