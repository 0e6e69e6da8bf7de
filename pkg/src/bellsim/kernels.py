"""Backend selection for the trial kernels.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy implementation in ``_kernels_py``. Setting ``BELLSIM_PURE_PYTHON=1``
forces the fallback. Both backends produce identical output.
"""
import logging
import os
from types import ModuleType

from . import _kernels_py

log = logging.getLogger(__name__)


def _load_compiled() -> ModuleType | None:
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()

if _compiled is not None and not os.environ.get("BELLSIM_PURE_PYTHON"):
    _impl = _compiled
    BACKEND = "cython"
else:
    _impl = _kernels_py
    BACKEND = "python"
    if _compiled is None:
        log.debug("compiled kernels unavailable, using numpy fallback")


def available_backends() -> list[str]:
    return ["cython", "python"] if _compiled is not None else ["python"]


def get_backend(name: str | None = None) -> ModuleType:
    """Return the kernel module for ``name`` (default: the selected one)."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels were not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def uniforms(key, start, n, stride=1, backend=None):
    return get_backend(backend).uniforms(key, start, n, stride)


def sample_trials(key, start, n, branch_cdf, internal_cdf, offsets, backend=None):
    return get_backend(backend).sample_trials(
        key, start, n, branch_cdf, internal_cdf, offsets
    )
