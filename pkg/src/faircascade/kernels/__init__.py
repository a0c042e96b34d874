"""Hot-loop kernels with a compiled core and a pure-numpy fallback.

The compiled backend (Cython) is used when the extension was built;
otherwise the numpy implementation takes over. Set FAIRCASCADE_KERNELS to
"native" or "pure" to force a backend ("native" raises if the extension
is unavailable).
"""

import os

_requested = os.environ.get("FAIRCASCADE_KERNELS", "").strip().lower()
if _requested not in ("", "native", "pure"):
    raise RuntimeError(
        f"FAIRCASCADE_KERNELS must be 'native' or 'pure', got {_requested!r}"
    )

if _requested == "pure":
    from . import _pure as _impl

    BACKEND = "pure"
else:
    try:
        from . import _native as _impl

        BACKEND = "native"
    except ImportError:
        if _requested == "native":
            raise
        from . import _pure as _impl

        BACKEND = "pure"

ucb_scores = _impl.ucb_scores
quad_forms = _impl.quad_forms
quad_form = _impl.quad_form
rank1_update_inplace = _impl.rank1_update_inplace
sherman_morrison_inplace = _impl.sherman_morrison_inplace

__all__ = [
    "BACKEND",
    "ucb_scores",
    "quad_forms",
    "quad_form",
    "rank1_update_inplace",
    "sherman_morrison_inplace",
]
