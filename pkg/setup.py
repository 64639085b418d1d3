import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "bsmkit._kernels",
                ["src/bsmkit/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    # Pure-python fallback (bsmkit._kernels_np) is selected at import time.
    ext_modules = []

setup(ext_modules=ext_modules)
