"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy
fallback takes over. ``use_backend`` switches explicitly (tests and the
benchmark compare both).
"""
import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_active = _compiled if _compiled is not None else _kernels_py
_threads = 1


def available_backends():
    return ["compiled", "python"] if _compiled is not None else ["python"]


def backend_name():
    return "compiled" if _active is _compiled and _compiled is not None else "python"


def use_backend(name):
    """Select ``"compiled"`` or ``"python"``; returns the previous name."""
    global _active
    prev = backend_name()
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        _active = _compiled
    elif name == "python":
        _active = _kernels_py
    else:
        raise ValueError(f"unknown backend {name!r}")
    return prev


def set_threads(n):
    """Cap the worker threads used by the compiled Gram kernel."""
    global _threads
    _threads = max(1, int(n))


def get_threads():
    return _threads


def gram_matvec(A1, A2, V):
    A1 = np.ascontiguousarray(A1, dtype=np.complex128)
    A2 = np.ascontiguousarray(A2, dtype=np.complex128)
    V = np.ascontiguousarray(V, dtype=np.complex128)
    if V.ndim == 1:
        return _active.gram_matvec(A1, A2, V[:, None], _threads)[:, 0]
    return _active.gram_matvec(A1, A2, V, _threads)


def gram_matvec_self(A, V):
    """W = G V with the Hermitian self-Gram of the rows of A."""
    A = np.ascontiguousarray(A, dtype=np.complex128)
    V = np.ascontiguousarray(V, dtype=np.complex128)
    if V.ndim == 1:
        return _active.gram_matvec_self(A, V[:, None])[:, 0]
    return _active.gram_matvec_self(A, V)


def mh_chain(log_ratio, log_u):
    return _active.mh_chain(np.ascontiguousarray(log_ratio, dtype=float),
                            np.ascontiguousarray(log_u, dtype=float))
