"""Build script for the compiled kernel extension.

The extension is optional: if Cython or a C compiler is missing, the install
falls back to the pure-NumPy kernels in `concertormer._kernels_np`.
"""

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext = Extension(
        "concertormer._kernels",
        ["src/concertormer/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        # -ffp-contract=off: no FMA contraction, so float64 accumulation
        # matches the NumPy backend bit for bit.
        extra_compile_args=["-O3", "-ffp-contract=off", "-fopenmp"],
        extra_link_args=["-fopenmp"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
    ext_modules = cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "initializedcheck": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
