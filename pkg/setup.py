"""Build the optional Cython kernels.

If Cython or a C compiler is missing the package still installs; the
pure-Python kernels in ``synthdet._pykernels`` are used instead.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("SYNTHDET_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "synthdet._ckernels",
                    ["src/synthdet/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    # no -ffast-math: results must match the fallback bit for bit
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
