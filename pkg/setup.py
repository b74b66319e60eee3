"""Build script for the optional compiled kernel extension.

The package works without the extension (a numpy fallback is selected at
import time); the extension only accelerates the hot inner loops: CRC-64,
ray/triangle parity tests, and trilinear volume sampling.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "scopenav._kernels._native",
                ["src/scopenav/_kernels/_native.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
