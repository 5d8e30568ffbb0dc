"""Build the optional compiled Monte-Carlo kernels.

If Cython or a C compiler is unavailable the package still installs and
falls back to the pure-Python kernels at import time.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("NLCBS_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("nlcbs._mc_core", ["src/nlcbs/_mc_core.pyx"],
                       include_dirs=[np.get_include()],
                       extra_compile_args=["-O3", "-ffp-contract=off"])],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
