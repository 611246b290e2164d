"""Builds the optional Cython kernel extension.

The package works without it: gram._kernels falls back to the numpy
implementations when the compiled module is missing.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "gram._kernels._cykernels",
                ["src/gram/_kernels/_cykernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": sys.version_info[0]},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
