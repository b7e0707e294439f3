import numpy as np
from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "otmatch._lapjv",
                ["src/otmatch/_lapjv.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython: the package falls back to the pure-numpy solver at import.
    pass

setup(ext_modules=ext_modules)
