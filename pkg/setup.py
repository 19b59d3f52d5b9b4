import numpy as np
from setuptools import Extension, setup
from Cython.Build import cythonize

ext_module = Extension(
    "hardwall.kernels._sweep",
    ["src/hardwall/kernels/_sweep.pyx"],
    include_dirs=[np.get_include()],
)

setup(ext_modules=cythonize(ext_module, language_level=3))
