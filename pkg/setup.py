"""Build script for the optional compiled kernel backend.

`pip install -e . --no-build-isolation` compiles augflow._kernels_c from the
Cython source. If Cython (or a C compiler) is unavailable, or
AUGFLOW_PURE_PYTHON is set, the extension is skipped and the package falls
back to the NumPy kernel implementations at import time.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("AUGFLOW_PURE_PYTHON"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "augflow._kernels_c",
                    sources=["src/augflow/_kernels_c.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "nonecheck": False,
                "language_level": "3",
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
