"""Kernel backend selection.

The hot non-GEMM kernels (window gather/scatter and magnitude max pooling)
exist twice: a Cython extension (``_fastcore``) and a pure numpy fallback
(``reference``). The compiled core is preferred when importable; set
``CDTIKIT_BACKEND=numpy`` or ``CDTIKIT_BACKEND=compiled`` to force a choice.
``benchmarks/bench_kernels.py`` compares the two.
"""

import os

from . import reference

_choice = os.environ.get("CDTIKIT_BACKEND", "auto").lower()

_compiled = None
if _choice in ("auto", "compiled"):
    try:
        from . import _fastcore as _compiled  # type: ignore[no-redef]
    except ImportError:
        _compiled = None
        if _choice == "compiled":
            raise ImportError(
                "CDTIKIT_BACKEND=compiled but the _fastcore extension is not "
                "built; run `pip install -e .` or `python setup.py build_ext "
                "--inplace`"
            )

_active = _compiled if _compiled is not None else reference

BACKEND_NAME = "compiled" if _compiled is not None else "numpy"


def get_backend(name=None):
    """Return the kernel module for `name` ('numpy', 'compiled' or None=active)."""
    if name is None or name == BACKEND_NAME or name == "active":
        return _active
    if name == "numpy":
        return reference
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled backend not available")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


im2col = _active.im2col
col2im = _active.col2im
maxpool_mag_forward = _active.maxpool_mag_forward
maxpool_scatter = _active.maxpool_scatter
