"""Build script for the optional compiled NLE kernel.

The package works without the extension (a NumPy fallback is selected at
import time), so a failed compile is downgraded to a warning rather than
aborting the install.
"""

import warnings

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "vbidet._moments",
                ["src/vbidet/_moments.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    warnings.warn(f"compiled kernel disabled ({exc}); using NumPy fallback")
    ext_modules = []

setup(ext_modules=ext_modules)
