"""Kernel backend selection.

The compiled Cython extension is preferred; a pure-numpy implementation is
the fallback. SDFRECON_BACKEND=python|compiled forces one explicitly
(``compiled`` raises if the extension is missing).
"""

import os

from . import numpy_impl

_requested = os.environ.get("SDFRECON_BACKEND", "auto").lower()

_compiled = None
if _requested in ("auto", "compiled"):
    try:
        from . import _core as _compiled  # type: ignore[attr-defined]
    except ImportError:
        if _requested == "compiled":
            raise ImportError(
                "SDFRECON_BACKEND=compiled but the extension is not built; "
                "reinstall with a working C toolchain"
            )

impl = _compiled if _compiled is not None else numpy_impl
BACKEND = impl.NAME

ray_closest = impl.ray_closest
ray_parity = impl.ray_parity
closest_point = impl.closest_point
conv3d = impl.conv3d
trilinear = impl.trilinear
fps = impl.fps


def available_backends():
    out = {"python": numpy_impl}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out
