"""Build script: compiles the optional Cython kernel core.

The package works without the extension (a pure numpy fallback is selected at
import time), so a failed compile only costs speed, not functionality.
"""

import os

from setuptools import Extension, setup


def extension_modules():
    if os.environ.get("CDTIKIT_SKIP_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "cdtikit.backends._fastcore",
        ["src/cdtikit/backends/_fastcore.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )


setup(ext_modules=extension_modules())
