import os

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; cnls.kernels falls back to numpy
    ext_modules = []
else:
    ext_modules = []
    if not os.environ.get("CNLS_NO_EXT"):
        ext_modules = cythonize(
            [
                Extension(
                    "cnls._kernels",
                    ["src/cnls/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )

setup(ext_modules=ext_modules)
