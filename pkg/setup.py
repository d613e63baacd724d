import os

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

# The kernel draws through numpy's C distribution functions, which live in
# the static library numpy ships alongside its random module.
npyrandom_dir = os.path.join(os.path.dirname(numpy.random.__file__), "lib")

# -ffp-contract=off: the numpy fallback must reproduce the kernel's float
# results bit for bit, so fused multiply-adds are disabled.
ext = Extension(
    "mmst._mc._kernel",
    ["src/mmst/_mc/_kernel.pyx"],
    include_dirs=[numpy.get_include()],
    library_dirs=[npyrandom_dir],
    libraries=["npyrandom"],
    extra_compile_args=["-O3", "-ffp-contract=off"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(ext_modules=cythonize([ext], language_level=3))
