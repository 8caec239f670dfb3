"""Build script: compiles the Cython leapfrog kernels when a toolchain is
available, otherwise installs with the pure-numpy fallback only."""
import sys

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension

    ext = Extension(
        "homwave._kernels._leapfrog_c",
        ["src/homwave/_kernels/_leapfrog_c.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    ext_modules = cythonize([ext], language_level=3)
except Exception as exc:  # pragma: no cover - build-env dependent
    sys.stderr.write(f"homwave: building without compiled kernels ({exc})\n")

setup(ext_modules=ext_modules)
