import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install, fallback kernels are used
    cythonize = None

omp = [] if os.environ.get("COHPROP_NO_OPENMP") else ["-fopenmp"]

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "cohprop._kernels",
                ["src/cohprop/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-Wno-unreachable-code"] + omp,
                extra_link_args=omp,
                optional=True,
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
