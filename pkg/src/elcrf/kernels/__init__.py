"""Lattice kernels with a compiled fast path.

The Cython extension ``_ckernels`` is used when it was built; otherwise the
numpy implementation in ``_pykernels`` is selected at import. Both expose
``forward``, ``backward``, ``edge_expectations`` and ``viterbi`` over
C-contiguous float64 arrays.
"""
from types import ModuleType

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS: dict[str, ModuleType] = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels

_active: ModuleType = _ckernels if _ckernels is not None else _pykernels


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def backend_name() -> str:
    return "compiled" if _active is _ckernels and _ckernels is not None else "python"


def use_backend(name: str) -> None:
    """Switch the active kernel implementation (``"python"`` or ``"compiled"``)."""
    global _active
    try:
        _active = _BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available; have {available_backends()}") from None


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def forward(psi, trans):
    return _active.forward(_c(psi), _c(trans))


def backward(psi, trans):
    return _active.backward(_c(psi), _c(trans))


def edge_expectations(psi, trans, alpha, beta, log_z):
    return _active.edge_expectations(_c(psi), _c(trans), _c(alpha), _c(beta), float(log_z))


def viterbi(psi, trans):
    return _active.viterbi(_c(psi), _c(trans))
