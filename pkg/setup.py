import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "nvbath._kernel",
                ["src/nvbath/_kernel.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # -ffp-contract=off keeps elementwise rounding identical to
                # the numpy fallback (no FMA regrouping).
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
else:
    # No Cython at build time: install as pure Python, the numpy fallback
    # kernel is selected at import.
    ext_modules = []

setup(ext_modules=ext_modules)
