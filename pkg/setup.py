"""Build the optional compiled inference kernels.

The package is fully functional without them; ``elcrf.kernels`` falls back
to the numpy implementation when the extension is not importable.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("ELCRF_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "elcrf.kernels._ckernels",
                    ["src/elcrf/kernels/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
