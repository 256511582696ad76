"""Kernel backend selection.

The compiled extension is used when it imports; set ``ORPT_PURE_PYTHON=1``
to force the numpy fallback.
"""

import os

from . import _fallback

try:
    if os.environ.get("ORPT_PURE_PYTHON"):
        raise ImportError("pure-Python backend requested")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _fallback}
if _compiled is not None:
    BACKENDS["cython"] = _compiled

BACKEND = "cython" if _compiled is not None else "python"
_impl = BACKENDS[BACKEND]

lstm_forward_pointwise = _impl.lstm_forward_pointwise
lstm_backward_pointwise = _impl.lstm_backward_pointwise
dilated_causal_conv = _impl.dilated_causal_conv


def get_backend(name: str):
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available; have {sorted(BACKENDS)}") from None


class use_backend:
    """Temporarily route the module-level kernels to another backend."""

    _names = ("lstm_forward_pointwise", "lstm_backward_pointwise", "dilated_causal_conv")

    def __init__(self, name: str):
        self.impl = get_backend(name)
        self.name = name

    def __enter__(self):
        global BACKEND
        g = globals()
        self._saved = {n: g[n] for n in self._names}, BACKEND
        g.update({n: getattr(self.impl, n) for n in self._names})
        BACKEND = self.name
        return self.impl

    def __exit__(self, *exc):
        global BACKEND
        saved, BACKEND = self._saved
        globals().update(saved)
