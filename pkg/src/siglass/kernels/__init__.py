"""Hot-kernel backend selection.

The compiled extension is used when present; the numpy implementation is
the fallback.  Both produce bit-identical results.  Set SIGLASS_PURE=1 to
force the numpy backend (used by the equivalence tests and the benchmark).
"""

import os

from . import _pure

if os.environ.get("SIGLASS_PURE") == "1":
    _impl = _pure
    BACKEND = "pure"
else:
    try:
        from . import _fast as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _pure
        BACKEND = "pure"

two_piece_update = _impl.two_piece_update
threshold_update = _impl.threshold_update
dominance_update = _impl.dominance_update
maxpool_update = _impl.maxpool_update


def backend_name():
    return BACKEND


def get_backend(name):
    """Explicit backend module lookup ('pure' or 'compiled')."""
    if name == "pure":
        return _pure
    if name == "compiled":
        from . import _fast

        return _fast
    raise ValueError(f"unknown backend '{name}'")
