"""Build hook for the optional compiled kernel extension.

The package is fully usable without the extension (the numpy backend
is selected at import time), so a missing Cython or a failed compile
must not break installation.
"""

import sys

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    core = Extension(
        "replyrank.kernels._core",
        sources=["src/replyrank/kernels/_core.pyx"],
        extra_compile_args=["-O3"],
    )
    ext_modules = cythonize(
        [core],
        language_level=3,
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    print("Cython not available; installing with the numpy backend only",
          file=sys.stderr)

setup(ext_modules=ext_modules)
