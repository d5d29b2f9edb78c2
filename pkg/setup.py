"""Builds the optional compiled kernel extension.

The package is fully functional without the extension; the pure numpy
backend is selected automatically when the compiled module is absent.
Set SIGLASS_NO_EXT=1 to skip compilation entirely.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SIGLASS_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "siglass.kernels._fast",
                    ["src/siglass/kernels/_fast.pyx"],
                )
            ],
            language_level="3",
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
