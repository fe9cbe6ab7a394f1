"""Hot convolution/pooling kernels with a compiled backend and a numpy fallback.

The compiled module is used when it imports; set ``CAEM_KERNELS=python`` to
force the fallback. Both backends are bit-identical.
"""

import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels

_active = None


def available_backends():
    return sorted(_BACKENDS)


def set_backend(name):
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"kernel backend {name!r} unavailable; have {available_backends()}")
    _active = _BACKENDS[name]


def get_backend():
    return "cython" if _active is _ckernels and _ckernels is not None else "python"


def get_module(name=None):
    return _active if name is None else _BACKENDS[name]


_requested = os.environ.get("CAEM_KERNELS", "").strip().lower()
if _requested in _BACKENDS:
    set_backend(_requested)
else:
    set_backend("cython" if _ckernels is not None else "python")


def im2col(xp, kh, kw, sh, sw):
    return _active.im2col(np.ascontiguousarray(xp, dtype=np.float64), kh, kw, sh, sw)


def col2im(cols, c, hp, wp, kh, kw, sh, sw):
    return _active.col2im(cols, c, hp, wp, kh, kw, sh, sw)


def maxpool_forward(x, ph, pw):
    return _active.maxpool_forward(x, ph, pw)


def maxpool_backward(g, arg, h, w, ph, pw):
    return _active.maxpool_backward(g, arg, h, w, ph, pw)
